//! Inverse-frequency concept weighting and weighted subsampling.
//!
//! Frequencies count assignments that contain a concept. Each sample's raw
//! weight is the mean (or, for ablations, the sum) of `1 / count[c]` over its
//! concepts; weights are then normalized to a probability vector and drawn
//! from with a seeded sampler.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concepts::ConceptAssignment;
use crate::error::{Error, Result};
use crate::rng;

/// Allowed deviation of `Σ w` from 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

const KEY_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptFrequencyTable {
    pub counts: Vec<u64>,
    pub total_samples: usize,
}

impl ConceptFrequencyTable {
    pub fn vocab_size(&self) -> usize {
        self.counts.len()
    }
}

pub fn concept_frequencies<'a, I>(assignments: I, vocab_size: usize) -> Result<ConceptFrequencyTable>
where
    I: IntoIterator<Item = &'a ConceptAssignment>,
{
    let mut counts = vec![0u64; vocab_size];
    let mut total_samples = 0;
    for a in assignments {
        total_samples += 1;
        for c in a.indices() {
            let slot = counts.get_mut(c).ok_or(Error::ConceptOutOfRange {
                index: c,
                size: vocab_size,
            })?;
            *slot += 1;
        }
    }
    Ok(ConceptFrequencyTable {
        counts,
        total_samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// Mean of inverse frequencies; comparable across samples with different k.
    #[default]
    Mean,
    /// Sum of inverse frequencies.
    Sum,
}

/// Probability vector over samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageWeightVector {
    weights: Vec<f64>,
}

impl ImageWeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("weight vector"));
        }
        if let Some((index, &value)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidWeight { index, value });
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::NotNormalized { sum });
        }
        Ok(ImageWeightVector { weights })
    }

    /// Equal weight on `n` samples.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub fn image_weights(
    assignments: &[ConceptAssignment],
    freqs: &ConceptFrequencyTable,
    mode: WeightMode,
) -> Result<ImageWeightVector> {
    if assignments.is_empty() {
        return Err(Error::Empty("assignments"));
    }
    let mut raw = Vec::with_capacity(assignments.len());
    for (sample, a) in assignments.iter().enumerate() {
        if a.k() == 0 {
            return Err(Error::NoConcepts { sample });
        }
        let mut acc = 0.0;
        for c in a.indices() {
            let count = *freqs.counts.get(c).ok_or(Error::ConceptOutOfRange {
                index: c,
                size: freqs.vocab_size(),
            })?;
            if count == 0 {
                return Err(Error::ZeroFrequency { sample, concept: c });
            }
            acc += 1.0 / count as f64;
        }
        raw.push(match mode {
            WeightMode::Mean => acc / a.k() as f64,
            WeightMode::Sum => acc,
        });
    }
    let total: f64 = raw.iter().sum();
    ImageWeightVector::new(raw.into_iter().map(|w| w / total).collect())
}

/// Draw `n` sample indices according to `weights`.
///
/// Without replacement this is successive weighted selection with
/// renormalization, realized as an exponential race: index `i` gets key
/// `-ln(u_i) / w_i` and the `n` smallest keys win, in key order. Keys depend
/// only on `(seed, i)`, so the draw is identical for any thread count.
/// With replacement it is `n` independent categorical draws.
pub fn sample_balanced(
    weights: &ImageWeightVector,
    n: usize,
    seed: u64,
    replacement: bool,
) -> Result<Vec<usize>> {
    let total = weights.len();
    if replacement {
        return Ok(sample_with_replacement(weights.weights(), n, seed));
    }
    if n > total {
        return Err(Error::SampleBound {
            requested: n,
            available: total,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    let mut keys: Vec<(f64, usize)> = weights
        .weights()
        .par_chunks(KEY_CHUNK)
        .enumerate()
        .flat_map_iter(|(chunk, ws)| {
            let start = chunk * KEY_CHUNK;
            let mut rng = rng::stream_at(seed, rng::STREAM_SAMPLE_KEYS, start as u64);
            ws.iter()
                .enumerate()
                .map(move |(off, &w)| {
                    let u = rng::unit_open(&mut rng);
                    let key = if w > 0.0 { -u.ln() / w } else { f64::INFINITY };
                    (key, start + off)
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if n < keys.len() {
        keys.select_nth_unstable_by(n - 1, by_key);
        keys.truncate(n);
    }
    keys.par_sort_unstable_by(by_key);
    Ok(keys.into_iter().map(|(_, i)| i).collect())
}

fn sample_with_replacement(weights: &[f64], n: usize, seed: u64) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cdf.push(acc);
    }
    let last_live = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    let mut rng = rng::stream(seed, rng::STREAM_SAMPLE_DRAWS);
    (0..n)
        .map(|_| {
            let target = rng::unit_open(&mut rng) * acc;
            cdf.partition_point(|&c| c <= target).min(last_live)
        })
        .collect()
}

/// Distribution statistics for a set of assignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub num_samples: usize,
    pub vocab_size: usize,
    pub total_occurrences: u64,
    pub entropy_bits: f64,
    pub max_entropy_bits: f64,
    pub gini: f64,
    /// Fraction of the vocabulary seen at least once.
    pub coverage: f64,
    pub concepts_present: usize,
    /// Concept counts, largest first.
    pub sorted_counts: Vec<u64>,
}

pub fn balance_report<'a, I>(assignments: I, vocab_size: usize) -> Result<BalanceReport>
where
    I: IntoIterator<Item = &'a ConceptAssignment>,
{
    if vocab_size == 0 {
        return Err(Error::Empty("vocabulary"));
    }
    let freqs = concept_frequencies(assignments, vocab_size)?;
    let total: u64 = freqs.counts.iter().sum();
    if freqs.total_samples == 0 || total == 0 {
        return Err(Error::Empty("subset"));
    }
    let t = total as f64;
    let entropy_bits = freqs
        .counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0);

    let mut sorted_counts = freqs.counts.clone();
    sorted_counts.sort_unstable_by(|a, b| b.cmp(a));
    let concepts_present = sorted_counts.iter().take_while(|&&c| c > 0).count();

    Ok(BalanceReport {
        num_samples: freqs.total_samples,
        vocab_size,
        total_occurrences: total,
        entropy_bits,
        max_entropy_bits: (vocab_size as f64).log2(),
        gini: gini(&sorted_counts),
        coverage: concepts_present as f64 / vocab_size as f64,
        concepts_present,
        sorted_counts,
    })
}

/// Gini coefficient of counts given in descending order.
fn gini(desc: &[u64]) -> f64 {
    let m = desc.len() as f64;
    let total: f64 = desc.iter().map(|&c| c as f64).sum();
    if total == 0.0 {
        return 0.0;
    }
    // ascending rank i (1-based) of desc[j] is m - j
    let weighted: f64 = desc
        .iter()
        .enumerate()
        .map(|(j, &c)| (m - j as f64) * c as f64)
        .sum();
    (2.0 * weighted / (m * total) - (m + 1.0) / m).clamp(0.0, 1.0)
}

pub fn write_sorted_counts_csv<W: Write>(mut writer: W, report: &BalanceReport) -> Result<()> {
    writeln!(writer, "rank,count")?;
    for (rank, count) in report.sorted_counts.iter().enumerate() {
        writeln!(writer, "{},{}", rank + 1, count)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct WeightLine {
    i: usize,
    w: f64,
}

pub fn write_weights<W: Write>(mut writer: W, weights: &ImageWeightVector) -> Result<()> {
    for (i, &w) in weights.weights().iter().enumerate() {
        serde_json::to_writer(&mut writer, &WeightLine { i, w }).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Lines must be dense: the `n`-th record has `"i": n`.
pub fn read_weights<R: BufRead>(reader: R) -> Result<ImageWeightVector> {
    let mut weights = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: WeightLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: ln + 1,
            message: e.to_string(),
        })?;
        if rec.i != weights.len() {
            return Err(Error::Parse {
                line: ln + 1,
                message: format!("expected index {}, found {}", weights.len(), rec.i),
            });
        }
        weights.push(rec.w);
    }
    ImageWeightVector::new(weights)
}

pub fn save_weights(path: impl AsRef<Path>, weights: &ImageWeightVector) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_weights(BufWriter::new(file), weights)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ImageWeightVector> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_weights(BufReader::new(file))
}

/// Sampled subset file: a `#` header recording the draw, then one index per line.
pub fn write_subset<W: Write>(
    mut writer: W,
    indices: &[usize],
    seed: u64,
    replacement: bool,
) -> Result<()> {
    writeln!(
        writer,
        "# seed={seed} n={} replacement={replacement} rng={}",
        indices.len(),
        rng::GENERATOR_NAME
    )?;
    for i in indices {
        writeln!(writer, "{i}")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_subset<R: BufRead>(reader: R) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(t.parse().map_err(|_| Error::Parse {
            line: ln + 1,
            message: format!("bad index {t:?}"),
        })?);
    }
    Ok(out)
}

pub fn load_subset(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_subset(BufReader::new(file))
}

/// Uniform random draw of `n` distinct indices, the unbalanced baseline.
pub fn sample_uniform(total: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if total == 0 {
        return Err(Error::Empty("corpus"));
    }
    sample_balanced(&ImageWeightVector::uniform(total)?, n, seed, false)
}

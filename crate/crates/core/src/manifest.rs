//! Corpus manifests, token-length estimation, and synthetic corpora.
//!
//! Visual tokens follow a patch grid that is merged `merge × merge` before
//! projection: an image of `w × h` pixels yields
//! `⌈⌈w/patch⌉/merge⌉ · ⌈⌈h/patch⌉/merge⌉` tokens, with partial tiles on the
//! right and bottom edges kept as whole tokens.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concepts::{ConceptAssignment, EmbeddingMatrix, ScoredConcept};
use crate::error::{Error, Result};
use crate::packing::PackItem;
use crate::rng;

pub const DEFAULT_PATCH: u32 = 14;
pub const DEFAULT_MERGE: u32 = 2;

/// Samples generated per independent random stream.
const SYNTH_BLOCK: usize = 8192;
const MAX_LENGTH_REJECTIONS: usize = 1000;

fn default_patch() -> u32 {
    DEFAULT_PATCH
}

fn default_merge() -> u32 {
    DEFAULT_MERGE
}

fn is_default_patch(p: &u32) -> bool {
    *p == DEFAULT_PATCH
}

fn is_default_merge(m: &u32) -> bool {
    *m == DEFAULT_MERGE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub source: String,
    pub text_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<ImageSize>,
    #[serde(default = "default_patch", skip_serializing_if = "is_default_patch")]
    pub patch: u32,
    #[serde(default = "default_merge", skip_serializing_if = "is_default_merge")]
    pub merge: u32,
}

impl SampleRecord {
    pub fn text(id: impl Into<String>, source: impl Into<String>, text_tokens: u32) -> Self {
        SampleRecord {
            id: id.into(),
            source: source.into(),
            text_tokens,
            image: None,
            patch: DEFAULT_PATCH,
            merge: DEFAULT_MERGE,
        }
    }

    pub fn with_image(mut self, w: u32, h: u32) -> Self {
        self.image = Some(ImageSize { w, h });
        self
    }
}

/// Visual tokens plus text tokens for one record.
pub fn estimate_tokens(rec: &SampleRecord) -> Result<u64> {
    if rec.patch == 0 || rec.merge == 0 {
        return Err(Error::Config(format!(
            "sample {:?}: patch and merge must be positive",
            rec.id
        )));
    }
    let visual = match rec.image {
        None => 0,
        Some(ImageSize { w, h }) => {
            if w < rec.patch || h < rec.patch {
                return Err(Error::ImageTooSmall {
                    id: rec.id.clone(),
                    width: w,
                    height: h,
                    patch: rec.patch,
                });
            }
            let side = |px: u32| u64::from(px.div_ceil(rec.patch).div_ceil(rec.merge));
            side(w) * side(h)
        }
    };
    let total = visual + u64::from(rec.text_tokens);
    if total == 0 {
        return Err(Error::ZeroLength { id: rec.id.clone() });
    }
    Ok(total)
}

fn to_pack_item(rec: &SampleRecord) -> Result<PackItem> {
    let total = estimate_tokens(rec)?;
    let length = u32::try_from(total)
        .map_err(|_| Error::Config(format!("sample {:?}: {total} tokens overflows u32", rec.id)))?;
    Ok(PackItem::new(rec.id.clone(), length, rec.source.clone()))
}

pub fn to_pack_items(records: &[SampleRecord]) -> Result<Vec<PackItem>> {
    records.iter().map(to_pack_item).collect()
}

pub fn write_manifest<W: Write>(mut writer: W, records: &[SampleRecord]) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut writer, rec).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Parse a manifest, rejecting malformed lines, duplicate ids, and records
/// whose token length cannot be computed. Errors carry the 1-based line.
pub fn read_manifest<R: BufRead>(reader: R) -> Result<Vec<SampleRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: ln + 1,
            message: e.to_string(),
        })?;
        estimate_tokens(&rec).map_err(|e| Error::Parse {
            line: ln + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId { id: rec.id });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn ingest_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_manifest(BufReader::new(file))
}

pub fn save_manifest(path: impl AsRef<Path>, records: &[SampleRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_manifest(BufWriter::new(file), records)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LengthLine {
    id: String,
    source: String,
    length: u32,
}

/// Packing input: either `{"id","source","length"}` lines or full manifest
/// records, whose lengths are computed on ingest. Forms may be mixed.
pub fn read_pack_items<R: BufRead>(reader: R) -> Result<Vec<PackItem>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: ln + 1,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let item = if value.get("length").is_some() {
            let l: LengthLine =
                serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
            if l.length == 0 {
                return Err(parse_err(format!("sample {:?} has zero length", l.id)));
            }
            PackItem::new(l.id, l.length, l.source)
        } else {
            let rec: SampleRecord =
                serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
            to_pack_item(&rec).map_err(|e| parse_err(e.to_string()))?
        };
        if !seen.insert(item.id.clone()) {
            return Err(Error::DuplicateId { id: item.id });
        }
        out.push(item);
    }
    Ok(out)
}

pub fn load_pack_items(path: impl AsRef<Path>) -> Result<Vec<PackItem>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pack_items(BufReader::new(file))
}

/// Truncated log-normal over integer token lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthDistribution {
    pub mu: f64,
    pub sigma: f64,
    pub min: u32,
    pub max: u32,
}

impl Default for LengthDistribution {
    /// Mean near 745 tokens, about eleven samples per 8192-token pack.
    fn default() -> Self {
        LengthDistribution {
            mu: 700f64.ln(),
            sigma: 0.35,
            min: 32,
            max: 8192,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub zipf_exponent: f64,
    pub vocab_size: usize,
    pub k: usize,
    pub length: LengthDistribution,
    /// Source tag to probability.
    pub sources: BTreeMap<String, f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_samples: 100_000,
            zipf_exponent: 1.5,
            vocab_size: 1000,
            k: 5,
            length: LengthDistribution::default(),
            sources: [("doc", 0.25), ("ocr", 0.15), ("web", 0.6)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 {
            return bad("vocab_size must be at least 1".into());
        }
        if self.k == 0 || self.k > self.vocab_size {
            return Err(Error::KOutOfRange {
                k: self.k,
                max: self.vocab_size,
            });
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return bad(format!("zipf exponent {} must be >= 0", self.zipf_exponent));
        }
        let l = &self.length;
        if !(l.mu.is_finite() && l.sigma.is_finite() && l.sigma > 0.0) {
            return bad("log-normal needs finite mu and sigma > 0".into());
        }
        if l.min == 0 || l.min > l.max {
            return bad(format!("length bounds [{}, {}] are invalid", l.min, l.max));
        }
        if self.sources.is_empty() {
            return bad("source mixture is empty".into());
        }
        if self.sources.values().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("source probabilities must be non-negative".into());
        }
        let total: f64 = self.sources.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("source probabilities sum to {total}, not 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub records: Vec<SampleRecord>,
    pub assignments: Vec<ConceptAssignment>,
}

/// Cumulative Zipf mass over ranks `1..=m`; rank `r` is concept `r - 1`.
pub fn zipf_cdf(m: usize, s: f64) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = (1..=m)
        .map(|r| {
            acc += (r as f64).powf(-s);
            acc
        })
        .collect();
    for c in &mut cdf {
        *c /= acc;
    }
    cdf
}

/// Generate a text-only corpus with Zipf concept marginals.
///
/// Each sample's k concepts are successive Zipf draws without replacement
/// (a repeat is redrawn), so with `k = 1` the concept marginal is exactly
/// Zipf and with larger `k` the head is flattened. Similarities are
/// rank placeholders `(k - r) / k`. Generation runs in fixed-size blocks,
/// each on its own `(seed, block)` stream, and is concatenated block-major.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let cdf = zipf_cdf(cfg.vocab_size, cfg.zipf_exponent);
    let weights: Vec<f64> = (1..=cfg.vocab_size)
        .map(|r| (r as f64).powf(-cfg.zipf_exponent))
        .collect();
    let lognormal = LogNormal::new(cfg.length.mu, cfg.length.sigma)
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut source_cdf = Vec::with_capacity(cfg.sources.len());
    let mut acc = 0.0;
    for (tag, p) in &cfg.sources {
        acc += p;
        source_cdf.push((acc, tag.as_str()));
    }

    let blocks = cfg.n_samples.div_ceil(SYNTH_BLOCK);
    let parts: Vec<(Vec<SampleRecord>, Vec<ConceptAssignment>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(cfg.seed, rng::STREAM_SYNTH_BASE + b as u64);
            let start = b * SYNTH_BLOCK;
            let end = (start + SYNTH_BLOCK).min(cfg.n_samples);
            let mut records = Vec::with_capacity(end - start);
            let mut assignments = Vec::with_capacity(end - start);
            for i in start..end {
                let length = draw_length(&mut rng, &lognormal, &cfg.length);
                let u = rng::unit_open(&mut rng) * acc;
                let source = source_cdf
                    .iter()
                    .find(|(c, _)| u < *c)
                    .unwrap_or(source_cdf.last().unwrap())
                    .1;
                let concepts = draw_concepts(&mut rng, &cdf, &weights, cfg.k);
                records.push(SampleRecord::text(format!("syn{i:08}"), source, length));
                let k = cfg.k as f64;
                let scored = concepts
                    .into_iter()
                    .enumerate()
                    .map(|(r, index)| ScoredConcept {
                        index,
                        similarity: (k - r as f64) / k,
                    })
                    .collect();
                assignments.push(ConceptAssignment::new(i, scored).expect("distinct concepts"));
            }
            (records, assignments)
        })
        .collect();

    let mut corpus = SynthCorpus {
        records: Vec::with_capacity(cfg.n_samples),
        assignments: Vec::with_capacity(cfg.n_samples),
    };
    for (r, a) in parts {
        corpus.records.extend(r);
        corpus.assignments.extend(a);
    }
    Ok(corpus)
}

fn draw_length(rng: &mut ChaCha8Rng, dist: &LogNormal<f64>, cfg: &LengthDistribution) -> u32 {
    let (lo, hi) = (f64::from(cfg.min), f64::from(cfg.max));
    for _ in 0..MAX_LENGTH_REJECTIONS {
        let x = dist.sample(rng).round();
        if x >= lo && x <= hi {
            return x as u32;
        }
    }
    // window carries negligible mass; fall back to clamping
    dist.sample(rng).round().clamp(lo, hi) as u32
}

fn draw_concepts(rng: &mut ChaCha8Rng, cdf: &[f64], weights: &[f64], k: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    while chosen.len() < k {
        let mut picked = None;
        for _ in 0..64 {
            let u: f64 = rng::unit_open(rng);
            let c = cdf.partition_point(|&p| p <= u).min(cdf.len() - 1);
            if !chosen.contains(&c) {
                picked = Some(c);
                break;
            }
        }
        let c = picked.unwrap_or_else(|| {
            // heavy head already taken: draw from the remaining mass directly
            let remaining: f64 = weights
                .iter()
                .enumerate()
                .filter(|(i, _)| !chosen.contains(i))
                .map(|(_, w)| w)
                .sum();
            let mut target = rng::unit_open(rng) * remaining;
            let mut last = 0;
            for (i, w) in weights.iter().enumerate() {
                if chosen.contains(&i) {
                    continue;
                }
                last = i;
                if target < *w {
                    break;
                }
                target -= w;
            }
            last
        });
        chosen.push(c);
    }
    chosen
}

/// Names and embeddings for a synthetic vocabulary plus image embeddings
/// built from each sample's assigned concepts.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthEmbeddings {
    pub names: Vec<String>,
    pub concepts: EmbeddingMatrix,
    pub images: EmbeddingMatrix,
}

/// Concept vectors are random Gaussian directions. Each image vector is the
/// rank-weighted sum `Σ (k - r) · concept[a_r]` plus isotropic noise of
/// standard deviation `noise` per coordinate, then normalized, so an exact
/// top-K scan roughly recovers the assignment.
pub fn synth_embeddings(
    assignments: &[ConceptAssignment],
    vocab_size: usize,
    dim: usize,
    noise: f64,
    seed: u64,
) -> Result<SynthEmbeddings> {
    if dim == 0 || vocab_size == 0 || assignments.is_empty() {
        return Err(Error::Config("synthetic embeddings need dim, vocab, and samples".into()));
    }
    let mut rng = rng::stream(seed, rng::STREAM_CONCEPT_EMBED);
    let raw: Vec<f32> = (0..vocab_size * dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
        .collect();
    let concepts = crate::concepts::l2_normalize(&EmbeddingMatrix::new(vocab_size, dim, raw)?)?;

    let rows: Vec<Vec<f32>> = assignments
        .par_chunks(SYNTH_BLOCK)
        .enumerate()
        .map(|(b, chunk)| {
            let mut rng = rng::stream(seed, rng::STREAM_IMAGE_EMBED_BASE + b as u64);
            let mut out = Vec::with_capacity(chunk.len() * dim);
            for a in chunk {
                let mut v = vec![0f64; dim];
                let k = a.k() as f64;
                for (r, c) in a.indices().enumerate() {
                    let row = concepts.row(c.min(vocab_size - 1));
                    for (x, y) in v.iter_mut().zip(row) {
                        *x += (k - r as f64) * f64::from(*y);
                    }
                }
                for x in &mut v {
                    *x += noise * rng.sample::<f64, _>(StandardNormal);
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
                out.extend(v.iter().map(|x| (x / norm) as f32));
            }
            out
        })
        .collect();
    let images = EmbeddingMatrix::new(assignments.len(), dim, rows.concat())?;
    let names = (0..vocab_size).map(|i| format!("concept_{i:05}")).collect();
    Ok(SynthEmbeddings {
        names,
        concepts,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(w: u32, h: u32, text: u32) -> SampleRecord {
        SampleRecord::text("x", "web", text).with_image(w, h)
    }

    #[test]
    fn grid_arithmetic() {
        assert_eq!(estimate_tokens(&img(336, 336, 0)).unwrap(), 144);
        assert_eq!(estimate_tokens(&img(448, 448, 0)).unwrap(), 256);
        assert_eq!(estimate_tokens(&SampleRecord::text("t", "web", 57)).unwrap(), 57);
        // 15px -> 2 patches per side -> 1 merged token per side
        assert_eq!(estimate_tokens(&img(15, 15, 3)).unwrap(), 4);
        // 350px: 25 patches -> 13 merged tokens; 336px -> 12
        assert_eq!(estimate_tokens(&img(350, 336, 0)).unwrap(), 13 * 12);
    }

    #[test]
    fn estimate_errors() {
        assert!(matches!(
            estimate_tokens(&img(13, 100, 5)),
            Err(Error::ImageTooSmall { width: 13, .. })
        ));
        assert!(matches!(
            estimate_tokens(&SampleRecord::text("e", "web", 0)),
            Err(Error::ZeroLength { .. })
        ));
    }

    #[test]
    fn manifest_happy_path_and_format() {
        let text = concat!(
            "{\"id\":\"a\",\"source\":\"web\",\"text_tokens\":10}\n",
            "{\"id\":\"b\",\"source\":\"doc\",\"text_tokens\":5,\"image\":{\"w\":336,\"h\":336}}\n",
            "\n",
            "{\"id\":\"c\",\"source\":\"doc\",\"text_tokens\":1,\"image\":{\"w\":28,\"h\":28},\"patch\":28,\"merge\":1}\n",
        );
        let recs = read_manifest(text.as_bytes()).unwrap();
        let lens: Vec<u32> = to_pack_items(&recs).unwrap().iter().map(|i| i.length).collect();
        assert_eq!(lens, vec![10, 149, 2]);
        let mut out = Vec::new();
        write_manifest(&mut out, &recs).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text.replace("\n\n", "\n"));
    }

    #[test]
    fn manifest_rejects_duplicates_and_bad_lines() {
        let dup = "{\"id\":\"a\",\"source\":\"w\",\"text_tokens\":1}\n{\"id\":\"a\",\"source\":\"w\",\"text_tokens\":2}\n";
        match read_manifest(dup.as_bytes()) {
            Err(Error::DuplicateId { id }) => assert_eq!(id, "a"),
            other => panic!("{other:?}"),
        }
        let bad = "{\"id\":\"a\",\"source\":\"w\",\"text_tokens\":1}\n{oops\n";
        assert!(matches!(read_manifest(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let small = "{\"id\":\"a\",\"source\":\"w\",\"text_tokens\":1,\"image\":{\"w\":2,\"h\":99}}\n";
        assert!(matches!(read_manifest(small.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn pack_items_accept_both_forms() {
        let text = concat!(
            "{\"id\":\"a\",\"source\":\"web\",\"length\":700}\n",
            "{\"id\":\"b\",\"source\":\"doc\",\"text_tokens\":5,\"image\":{\"w\":448,\"h\":448}}\n",
        );
        let items = read_pack_items(text.as_bytes()).unwrap();
        assert_eq!(items[0], PackItem::new("a", 700, "web"));
        assert_eq!(items[1], PackItem::new("b", 261, "doc"));
        assert!(read_pack_items(&b"{\"id\":\"z\",\"source\":\"w\",\"length\":0}\n"[..]).is_err());
    }

    #[test]
    fn synth_is_deterministic_and_valid() {
        let cfg = SynthConfig {
            n_samples: 20_000,
            seed: 7,
            ..SynthConfig::default()
        };
        let a = synth_corpus(&cfg).unwrap();
        let b = synth_corpus(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 20_000);
        assert!(a.assignments.iter().all(|x| x.k() == 5));
        assert!(a.records.iter().all(|r| (32..=8192).contains(&r.text_tokens)));
        let other = synth_corpus(&SynthConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.records, other.records);
    }

    #[test]
    fn synth_source_mixture() {
        let cfg = SynthConfig {
            n_samples: 50_000,
            ..SynthConfig::default()
        };
        let c = synth_corpus(&cfg).unwrap();
        let web = c.records.iter().filter(|r| r.source == "web").count() as f64 / 50_000.0;
        assert!((web - 0.6).abs() < 0.01);
    }

    #[test]
    fn synth_zipf_zero_is_uniform() {
        let cfg = SynthConfig {
            n_samples: 200_000,
            zipf_exponent: 0.0,
            vocab_size: 20,
            k: 1,
            ..SynthConfig::default()
        };
        let c = synth_corpus(&cfg).unwrap();
        let mut counts = [0u64; 20];
        for a in &c.assignments {
            counts[a.concepts()[0].index] += 1;
        }
        let ratio = *counts.iter().max().unwrap() as f64 / *counts.iter().min().unwrap() as f64;
        assert!(ratio < 1.06, "max/min {ratio}");
    }

    #[test]
    fn synth_k_equals_m_uses_whole_vocab() {
        let cfg = SynthConfig {
            n_samples: 50,
            vocab_size: 6,
            k: 6,
            zipf_exponent: 3.0,
            ..SynthConfig::default()
        };
        for a in synth_corpus(&cfg).unwrap().assignments {
            let mut idx: Vec<_> = a.indices().collect();
            idx.sort();
            assert_eq!(idx, (0..6).collect::<Vec<_>>());
        }
    }

    #[test]
    fn synth_config_validation() {
        let ok = SynthConfig::default();
        assert!(ok.validate().is_ok());
        assert!(SynthConfig { k: 1001, ..ok.clone() }.validate().is_err());
        assert!(SynthConfig { zipf_exponent: -1.0, ..ok.clone() }.validate().is_err());
        let mut lopsided = ok.clone();
        lopsided.sources.insert("extra".into(), 0.1);
        assert!(lopsided.validate().is_err());
        let mut bounds = ok;
        bounds.length.min = 9000;
        assert!(bounds.validate().is_err());
    }

    #[test]
    fn synthetic_embeddings_recover_top_concept() {
        let cfg = SynthConfig {
            n_samples: 300,
            vocab_size: 50,
            k: 3,
            ..SynthConfig::default()
        };
        let c = synth_corpus(&cfg).unwrap();
        let e = synth_embeddings(&c.assignments, 50, 64, 0.05, 1).unwrap();
        let vocab = crate::concepts::ConceptVocabulary::new(e.names, e.concepts).unwrap();
        let got = crate::concepts::topk_concepts(&e.images, &vocab, 1).unwrap();
        let hits = got
            .iter()
            .zip(&c.assignments)
            .filter(|(g, want)| g.concepts()[0].index == want.concepts()[0].index)
            .count();
        assert!(hits as f64 / 300.0 > 0.8, "hits {hits}");
    }

    proptest! {
        #[test]
        fn estimate_is_monotone(
            w in 14u32..3000, h in 14u32..3000, t in 0u32..5000,
            dw in 0u32..500, dh in 0u32..500, dt in 0u32..500,
        ) {
            let base = estimate_tokens(&img(w, h, t)).unwrap();
            prop_assert!(estimate_tokens(&img(w + dw, h, t)).unwrap() >= base);
            prop_assert!(estimate_tokens(&img(w, h + dh, t)).unwrap() >= base);
            prop_assert!(estimate_tokens(&img(w, h, t + dt)).unwrap() >= base);
        }

        #[test]
        fn divisible_grids_are_exact(gw in 1u32..60, gh in 1u32..60, patch in 1u32..32, merge in 1u32..4) {
            let (w, h) = (gw * merge * patch, gh * merge * patch);
            let rec = SampleRecord { patch, merge, ..img(w, h, 0) };
            let expected = u64::from(w / patch) * u64::from(h / patch) / u64::from(merge * merge);
            prop_assert_eq!(estimate_tokens(&rec).unwrap(), expected);
        }
    }
}

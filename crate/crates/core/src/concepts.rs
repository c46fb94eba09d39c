//! Concept embeddings and exact top-K concept assignment.
//!
//! Matrices are ingested precomputed; nothing here runs an encoder. The binary
//! embedding layout is
//!
//! ```text
//! b"EMB1" | rows: u32 LE | dim: u32 LE | rows * dim f32 LE, row-major
//! ```

use std::borrow::Cow;
use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"EMB1";
const HEADER_LEN: u64 = 12;

/// Rows with a Euclidean norm below this are rejected by [`l2_normalize`].
pub const NORM_EPSILON: f64 = 1e-12;

/// Tolerance on `|‖row‖ − 1|` under which a matrix counts as normalized.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Separator between concept names in a pseudo-caption.
pub const CAPTION_SEPARATOR: &str = ", ";

/// Dense row-major `f32` matrix. Always non-empty with finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || dim == 0 || rows.checked_mul(dim) != Some(data.len()) {
            return Err(Error::Shape {
                rows,
                dim,
                len: data.len(),
            });
        }
        if let Some((i, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                offset: HEADER_LEN + 4 * i as u64,
                value,
            });
        }
        Ok(EmbeddingMatrix { rows, dim, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    fn is_unit_normalized(&self) -> bool {
        self.iter_rows()
            .all(|r| (row_norm(r) - 1.0).abs() <= UNIT_NORM_TOLERANCE)
    }
}

pub fn read_embeddings<R: Read>(mut reader: R) -> Result<EmbeddingMatrix> {
    let mut header = [0u8; HEADER_LEN as usize];
    let got = read_up_to(&mut reader, &mut header)?;
    if got >= 4 && header[..4] != EMBEDDING_MAGIC {
        return Err(Error::BadMagic {
            found: header[..4].try_into().unwrap(),
        });
    }
    if got < header.len() {
        if got < 4 && header[..got] != EMBEDDING_MAGIC[..got] {
            let mut found = [0u8; 4];
            found[..got].copy_from_slice(&header[..got]);
            return Err(Error::BadMagic { found });
        }
        return Err(Error::Truncated {
            offset: got as u64,
            expected: HEADER_LEN,
            found: got as u64,
        });
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    if rows == 0 || dim == 0 {
        return Err(Error::Shape { rows, dim, len: 0 });
    }

    let expected = rows as u64 * dim as u64 * 4;
    let mut payload = Vec::with_capacity(expected.min(1 << 30) as usize);
    reader.by_ref().take(expected).read_to_end(&mut payload)?;
    if (payload.len() as u64) < expected {
        return Err(Error::Truncated {
            offset: HEADER_LEN + payload.len() as u64,
            expected,
            found: payload.len() as u64,
        });
    }
    let mut extra = [0u8; 1];
    if read_up_to(&mut reader, &mut extra)? > 0 {
        return Err(Error::TrailingBytes {
            offset: HEADER_LEN + expected,
        });
    }

    let mut data = Vec::with_capacity(rows * dim);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let value = f32::from_le_bytes(chunk.try_into().unwrap());
        if !value.is_finite() {
            return Err(Error::NonFinite {
                offset: HEADER_LEN + 4 * i as u64,
                value,
            });
        }
        data.push(value);
    }
    EmbeddingMatrix::new(rows, dim, data)
}

fn read_up_to<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(filled)
}

pub fn write_embeddings<W: Write>(mut writer: W, m: &EmbeddingMatrix) -> Result<()> {
    let rows = u32::try_from(m.rows).map_err(|_| Error::Config("too many rows".into()))?;
    let dim = u32::try_from(m.dim).map_err(|_| Error::Config("dimension too large".into()))?;
    writer.write_all(&EMBEDDING_MAGIC)?;
    writer.write_all(&rows.to_le_bytes())?;
    writer.write_all(&dim.to_le_bytes())?;
    for v in &m.data {
        writer.write_all(&v.to_le_bytes())?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file))
}

pub fn save_embeddings(path: impl AsRef<Path>, m: &EmbeddingMatrix) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_embeddings(BufWriter::new(file), m)
}

fn row_norm(row: &[f32]) -> f64 {
    row.iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt()
}

/// Scale every row to unit Euclidean norm.
pub fn l2_normalize(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut data = Vec::with_capacity(m.data.len());
    for (i, row) in m.iter_rows().enumerate() {
        let norm = row_norm(row);
        if norm < NORM_EPSILON {
            return Err(Error::ZeroRow { row: i, norm });
        }
        data.extend(row.iter().map(|&v| (f64::from(v) / norm) as f32));
    }
    Ok(EmbeddingMatrix {
        rows: m.rows,
        dim: m.dim,
        data,
    })
}

/// `f32` products accumulated in `f64`.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Concept names with their embeddings, indexed `0..size`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptVocabulary {
    names: Vec<String>,
    embeddings: EmbeddingMatrix,
}

impl ConceptVocabulary {
    /// Names are trimmed and must be unique and non-empty.
    pub fn new(names: Vec<String>, embeddings: EmbeddingMatrix) -> Result<Self> {
        if names.len() != embeddings.rows() {
            return Err(Error::DimensionMismatch {
                left: names.len(),
                right: embeddings.rows(),
            });
        }
        let mut seen = HashSet::with_capacity(names.len());
        let mut trimmed = Vec::with_capacity(names.len());
        for (index, name) in names.into_iter().enumerate() {
            let name = name.trim().to_string();
            if name.is_empty() {
                return Err(Error::Parse {
                    line: index + 1,
                    message: "empty concept name".into(),
                });
            }
            if !seen.insert(name.clone()) {
                return Err(Error::DuplicateConcept { name, index });
            }
            trimmed.push(name);
        }
        Ok(ConceptVocabulary {
            names: trimmed,
            embeddings,
        })
    }

    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix {
        &self.embeddings
    }

    pub fn load(tsv: impl AsRef<Path>, embeddings: impl AsRef<Path>) -> Result<Self> {
        let tsv = tsv.as_ref();
        let file = File::open(tsv).map_err(|e| Error::io(tsv, e))?;
        let names = read_vocab_tsv(BufReader::new(file))?;
        Self::new(names, load_embeddings(embeddings)?)
    }
}

/// Parse `index<TAB>name` lines. Indices must cover `0..n` exactly once.
pub fn read_vocab_tsv<R: BufRead>(reader: R) -> Result<Vec<String>> {
    let mut entries: Vec<(usize, String, usize)> = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = ln + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (idx, name) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: line_no,
            message: "expected index<TAB>name".into(),
        })?;
        let idx: usize = idx.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad concept index {idx:?}"),
        })?;
        entries.push((idx, name.to_string(), line_no));
    }
    entries.sort_by_key(|e| e.0);
    for (expected, (idx, _, line)) in entries.iter().enumerate() {
        if *idx != expected {
            return Err(Error::Parse {
                line: *line,
                message: format!("concept indices must cover 0..{} exactly once", entries.len()),
            });
        }
    }
    Ok(entries.into_iter().map(|e| e.1).collect())
}

pub fn write_vocab_tsv<W: Write>(mut writer: W, names: &[String]) -> Result<()> {
    for (i, name) in names.iter().enumerate() {
        writeln!(writer, "{i}\t{name}")?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredConcept {
    pub index: usize,
    pub similarity: f64,
}

/// Ranked concepts for one sample, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptAssignment {
    sample_index: usize,
    concepts: Vec<ScoredConcept>,
}

impl ConceptAssignment {
    /// Checks distinct indices, similarities in `[-1, 1]` and non-increasing.
    pub fn new(sample_index: usize, concepts: Vec<ScoredConcept>) -> Result<Self> {
        let bad = |message: String| Error::Parse {
            line: sample_index + 1,
            message,
        };
        if concepts.is_empty() {
            return Err(Error::NoConcepts {
                sample: sample_index,
            });
        }
        let mut seen = HashSet::with_capacity(concepts.len());
        for c in &concepts {
            if !seen.insert(c.index) {
                return Err(bad(format!("concept {} repeated", c.index)));
            }
            if !(-1.0..=1.0).contains(&c.similarity) {
                return Err(bad(format!("similarity {} outside [-1, 1]", c.similarity)));
            }
        }
        if concepts.windows(2).any(|w| w[1].similarity > w[0].similarity) {
            return Err(bad("similarities must be non-increasing".into()));
        }
        Ok(ConceptAssignment {
            sample_index,
            concepts,
        })
    }

    pub fn sample_index(&self) -> usize {
        self.sample_index
    }

    pub fn concepts(&self) -> &[ScoredConcept] {
        &self.concepts
    }

    pub fn k(&self) -> usize {
        self.concepts.len()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.concepts.iter().map(|c| c.index)
    }
}

/// Exact top-`k` concepts per image by cosine similarity.
///
/// Ties resolve to the lower concept index. Inputs that are not already unit
/// rows are normalized first. Image rows are scored in parallel; the result is
/// ordered by sample index regardless of thread count.
pub fn topk_concepts(
    images: &EmbeddingMatrix,
    vocab: &ConceptVocabulary,
    k: usize,
) -> Result<Vec<ConceptAssignment>> {
    let concepts = vocab.embeddings();
    if images.dim() != concepts.dim() {
        return Err(Error::DimensionMismatch {
            left: images.dim(),
            right: concepts.dim(),
        });
    }
    if k == 0 || k > vocab.size() {
        return Err(Error::KOutOfRange {
            k,
            max: vocab.size(),
        });
    }
    let images = ensure_unit(images)?;
    let concepts = ensure_unit(concepts)?;

    let assignments = (0..images.rows())
        .into_par_iter()
        .map(|i| {
            let ranked = rank_row(images.row(i), &concepts, k);
            ConceptAssignment {
                sample_index: i,
                concepts: ranked,
            }
        })
        .collect();
    Ok(assignments)
}

fn ensure_unit(m: &EmbeddingMatrix) -> Result<Cow<'_, EmbeddingMatrix>> {
    if m.is_unit_normalized() {
        Ok(Cow::Borrowed(m))
    } else {
        l2_normalize(m).map(Cow::Owned)
    }
}

fn rank_row(query: &[f32], concepts: &EmbeddingMatrix, k: usize) -> Vec<ScoredConcept> {
    // Scores are finite; -0.0 and 0.0 must tie.
    let by_rank = |a: &(f64, usize), b: &(f64, usize)| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
    };
    let mut scored: Vec<(f64, usize)> = concepts
        .iter_rows()
        .enumerate()
        .map(|(j, row)| (dot(query, row), j))
        .collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k - 1, by_rank);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_rank);
    scored
        .into_iter()
        .map(|(s, index)| ScoredConcept {
            index,
            similarity: s.clamp(-1.0, 1.0),
        })
        .collect()
}

/// Concept names in rank order, joined with [`CAPTION_SEPARATOR`].
pub fn build_pseudo_caption(a: &ConceptAssignment, vocab: &ConceptVocabulary) -> Result<String> {
    let names = a
        .indices()
        .map(|i| {
            vocab.name(i).ok_or(Error::ConceptOutOfRange {
                index: i,
                size: vocab.size(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(names.join(CAPTION_SEPARATOR))
}

#[derive(Serialize, Deserialize)]
struct AssignmentLine {
    i: usize,
    c: Vec<usize>,
    s: Vec<f64>,
}

pub fn write_assignments<W: Write>(mut writer: W, assignments: &[ConceptAssignment]) -> Result<()> {
    for a in assignments {
        let line = AssignmentLine {
            i: a.sample_index,
            c: a.indices().collect(),
            s: a.concepts.iter().map(|c| c.similarity).collect(),
        };
        serde_json::to_writer(&mut writer, &line).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_assignments<R: BufRead>(reader: R) -> Result<Vec<ConceptAssignment>> {
    let mut out = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: AssignmentLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: ln + 1,
            message: e.to_string(),
        })?;
        if parsed.c.len() != parsed.s.len() {
            return Err(Error::Parse {
                line: ln + 1,
                message: "\"c\" and \"s\" differ in length".into(),
            });
        }
        let concepts = parsed
            .c
            .into_iter()
            .zip(parsed.s)
            .map(|(index, similarity)| ScoredConcept { index, similarity })
            .collect();
        let a = ConceptAssignment::new(parsed.i, concepts).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                line: ln + 1,
                message,
            },
            other => other,
        })?;
        out.push(a);
    }
    Ok(out)
}

pub fn save_assignments(path: impl AsRef<Path>, assignments: &[ConceptAssignment]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_assignments(BufWriter::new(file), assignments)
}

pub fn load_assignments(path: impl AsRef<Path>) -> Result<Vec<ConceptAssignment>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_assignments(BufReader::new(file))
}

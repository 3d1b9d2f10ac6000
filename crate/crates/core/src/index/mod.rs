//! Immutable embedding corpus with exact cosine-similarity search.
//!
//! Rows are L2-normalized once at build time and queries are normalized on
//! entry, so a plain dot product is the cosine similarity. Search is an
//! exhaustive scan: ranks feed evaluation metrics and must be exact.
//!
//! Ordering is total and deterministic: higher score first, ties broken by
//! ascending insertion order.

mod format;

pub use format::{read_ids, read_matrix, write_ids, write_matrix, RawMatrix, MATRIX_MAGIC};

use std::cmp::Ordering;
use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("{ids} ids but {rows} vectors")]
    CountMismatch { ids: usize, rows: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("vector for id {0:?} has zero norm")]
    ZeroRow(String),
    #[error("vector for id {0:?} has non-finite entries")]
    NonFiniteRow(String),
    #[error("query vector has zero norm")]
    ZeroQuery,
    #[error("query vector has non-finite entries")]
    NonFiniteQuery,
    #[error("corpus must contain at least one vector")]
    EmptyCorpus,
    #[error("k = {k} out of range 1..={n}")]
    InvalidK { k: usize, n: usize },
    #[error("unknown id {0:?}")]
    UnknownId(String),
    #[error("bad magic: expected {:?}, found {:?}", String::from_utf8_lossy(expected), String::from_utf8_lossy(found))]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed embedding file: {0}")]
    Malformed(String),
}

/// One ranked candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub id: String,
    pub score: f32,
}

/// Candidates in rank order: scores non-increasing, ties by insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub entries: Vec<Scored>,
    pub k: usize,
}

impl Ranking {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    /// 1-based position of `id` within the returned entries.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id).map(|p| p + 1)
    }
}

/// Read access to a ranked corpus. Implemented by [`EmbeddingCorpus`];
/// wrappers may add instrumentation.
pub trait Retriever: Send + Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn contains(&self, id: &str) -> bool;
    fn search(&self, query: &[f32], k: usize) -> Result<Ranking, IndexError>;
    fn rank_of(&self, query: &[f32], target_id: &str) -> Result<usize, IndexError>;
}

/// `n × d` row-normalized float32 matrix with unique ids.
#[derive(Debug, Clone)]
pub struct EmbeddingCorpus {
    ids: Vec<String>,
    positions: HashMap<String, usize>,
    vectors: Vec<f32>,
    dim: usize,
}

impl EmbeddingCorpus {
    /// Builds from per-row vectors.
    pub fn build(ids: Vec<String>, rows: Vec<Vec<f32>>) -> Result<Self, IndexError> {
        let dim = rows.first().map(Vec::len).ok_or(IndexError::EmptyCorpus)?;
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(IndexError::DimensionMismatch { expected: dim, actual: bad.len() });
        }
        if ids.len() != rows.len() {
            return Err(IndexError::CountMismatch { ids: ids.len(), rows: rows.len() });
        }
        Self::from_flat(ids, rows.concat(), dim)
    }

    /// Builds from a row-major flat buffer of `ids.len() * dim` floats.
    pub fn from_flat(ids: Vec<String>, mut vectors: Vec<f32>, dim: usize) -> Result<Self, IndexError> {
        if ids.is_empty() {
            return Err(IndexError::EmptyCorpus);
        }
        if dim == 0 || vectors.len() != ids.len() * dim {
            return Err(IndexError::CountMismatch {
                ids: ids.len(),
                rows: vectors.len().checked_div(dim).unwrap_or(0),
            });
        }
        let mut positions = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if positions.insert(id.clone(), i).is_some() {
                return Err(IndexError::DuplicateId(id.clone()));
            }
        }
        for (row, id) in vectors.chunks_exact_mut(dim).zip(&ids) {
            if row.iter().any(|x| !x.is_finite()) {
                return Err(IndexError::NonFiniteRow(id.clone()));
            }
            let norm = l2_norm(row);
            if norm == 0.0 {
                return Err(IndexError::ZeroRow(id.clone()));
            }
            row.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(Self { ids, positions, vectors, dim })
    }

    /// Loads a matrix file plus its companion id file.
    pub fn load(matrix: &Path, ids: &Path) -> Result<Self, IndexError> {
        let raw = read_matrix(matrix)?;
        let ids = read_ids(ids)?;
        if ids.len() != raw.rows {
            return Err(IndexError::CountMismatch { ids: ids.len(), rows: raw.rows });
        }
        Self::from_flat(ids, raw.data, raw.dim)
    }

    /// Writes the normalized rows and ids.
    pub fn save(&self, matrix: &Path, ids: &Path) -> Result<(), IndexError> {
        write_matrix(matrix, self.dim, &self.vectors)?;
        write_ids(ids, &self.ids)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn vector(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    /// Bytes held by the vector matrix.
    pub fn matrix_bytes(&self) -> usize {
        self.vectors.len() * std::mem::size_of::<f32>()
    }

    fn normalized_query(&self, query: &[f32]) -> Result<Vec<f32>, IndexError> {
        normalize_query(query, self.dim)
    }

    /// Cosine score of every row against an already-normalized query.
    fn scores(&self, q: &[f32]) -> Vec<f32> {
        self.vectors.chunks_exact(self.dim).map(|row| dot(row, q)).collect()
    }
}

impl Retriever for EmbeddingCorpus {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.ids.len()
    }

    fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    fn search(&self, query: &[f32], k: usize) -> Result<Ranking, IndexError> {
        let n = self.ids.len();
        if k == 0 || k > n {
            return Err(IndexError::InvalidK { k, n });
        }
        let q = self.normalized_query(query)?;
        let scores = self.scores(&q);
        let better = |a: &usize, b: &usize| compare(scores[*a], *a, scores[*b], *b);
        let mut order: Vec<usize> = (0..n).collect();
        if k < n {
            order.select_nth_unstable_by(k - 1, better);
            order.truncate(k);
        }
        order.sort_unstable_by(better);
        let entries = order
            .into_iter()
            .map(|i| Scored { id: self.ids[i].clone(), score: scores[i] })
            .collect();
        Ok(Ranking { entries, k })
    }

    fn rank_of(&self, query: &[f32], target_id: &str) -> Result<usize, IndexError> {
        let t = self.position(target_id).ok_or_else(|| IndexError::UnknownId(target_id.to_owned()))?;
        let q = self.normalized_query(query)?;
        let target = dot(self.row(t), &q);
        let ahead = self
            .vectors
            .chunks_exact(self.dim)
            .enumerate()
            .filter(|&(i, row)| {
                let s = dot(row, &q);
                s > target || (s == target && i < t)
            })
            .count();
        Ok(ahead + 1)
    }
}

/// Rank order: descending score, then ascending position.
fn compare(sa: f32, ia: usize, sb: f32, ib: usize) -> Ordering {
    sb.total_cmp(&sa).then(ia.cmp(&ib))
}

/// Sequential dot product. Accumulation order is fixed so equal inputs give
/// bit-identical scores everywhere.
pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f32]) -> f32 {
    v.iter().map(|x| x * x).sum::<f32>().sqrt()
}

/// Validates and L2-normalizes a query of dimension `dim`.
pub fn normalize_query(query: &[f32], dim: usize) -> Result<Vec<f32>, IndexError> {
    if query.len() != dim {
        return Err(IndexError::DimensionMismatch { expected: dim, actual: query.len() });
    }
    if query.iter().any(|x| !x.is_finite()) {
        return Err(IndexError::NonFiniteQuery);
    }
    let norm = l2_norm(query);
    if norm == 0.0 {
        return Err(IndexError::ZeroQuery);
    }
    Ok(query.iter().map(|x| x / norm).collect())
}

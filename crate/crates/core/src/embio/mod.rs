//! Word embedding container, persistence, nearest-neighbour search and
//! 2-D projection.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

mod io;
mod neighbors;
mod pca;

pub use io::{load, load_binary, load_text, save, save_binary, save_text, read_binary, read_text, write_binary, write_text, BINARY_MAGIC};
pub use neighbors::{nearest_neighbors, rank_by_cosine, Neighbor, Query};
pub use pca::{pca_project, ProjectionResult};

/// A vocabulary paired with a dense `|V| × dim` matrix.
///
/// Storage is `f32`; all arithmetic over the matrix accumulates in `f64`.
#[derive(Clone, Debug)]
pub struct WordEmbeddings {
    vocab: Vocabulary,
    dim: usize,
    matrix: Vec<f32>,
    metadata: BTreeMap<String, String>,
    norms: OnceLock<Vec<f64>>,
}

impl WordEmbeddings {
    pub fn new(vocab: Vocabulary, dim: usize, matrix: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be at least 1".into()));
        }
        if matrix.len() != vocab.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: vocab.len() * dim,
                found: matrix.len(),
            });
        }
        if let Some(pos) = matrix.iter().position(|x| !x.is_finite()) {
            return Err(Error::NumericOverflow {
                matrix: "embedding",
                row: pos / dim,
            });
        }
        Ok(WordEmbeddings {
            vocab,
            dim,
            matrix,
            metadata: BTreeMap::new(),
            norms: OnceLock::new(),
        })
    }

    /// Build from `f64` rows, rounding to storage precision.
    pub fn from_f64(vocab: Vocabulary, dim: usize, matrix: &[f64]) -> Result<Self> {
        Self::new(vocab, dim, matrix.iter().map(|&x| x as f32).collect())
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.metadata
    }

    pub fn row(&self, id: u32) -> &[f32] {
        let start = id as usize * self.dim;
        &self.matrix[start..start + self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vocab.id(word).map(|id| self.row(id))
    }

    /// Row of `word` widened to `f64`.
    pub fn vector(&self, word: &str) -> Option<Vec<f64>> {
        self.get(word)
            .map(|row| row.iter().map(|&x| x as f64).collect())
    }

    pub(crate) fn norms(&self) -> &[f64] {
        self.norms.get_or_init(|| {
            self.matrix
                .chunks_exact(self.dim)
                .map(|row| row.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt())
                .collect()
        })
    }

    /// Element-wise mean of two embedding sets.
    ///
    /// By default both sets must have identical vocabularies (same words in
    /// the same order) and dimensions. With `intersect`, only words present
    /// in both are emitted, in the order of `self`.
    pub fn average(&self, other: &WordEmbeddings, intersect: bool) -> Result<WordEmbeddings> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        let pairs: Vec<(u32, u32)> = if intersect {
            self.vocab
                .words()
                .iter()
                .enumerate()
                .filter_map(|(i, w)| other.vocab.id(w).map(|j| (i as u32, j)))
                .collect()
        } else {
            if self.vocab.words() != other.vocab.words() {
                return Err(Error::VocabularyMismatch(format!(
                    "{} vs {} words or differing order; use intersect mode to average shared words",
                    self.len(),
                    other.len()
                )));
            }
            (0..self.len() as u32).map(|i| (i, i)).collect()
        };

        let mut matrix = Vec::with_capacity(pairs.len() * self.dim);
        for &(i, j) in &pairs {
            matrix.extend(
                self.row(i)
                    .iter()
                    .zip(other.row(j))
                    .map(|(&a, &b)| ((a as f64 + b as f64) / 2.0) as f32),
            );
        }
        let ids: Vec<u32> = pairs.iter().map(|p| p.0).collect();
        let vocab = self.vocab.subset(&ids);
        Ok(WordEmbeddings::new(vocab, self.dim, matrix)?.with_metadata("model", "average"))
    }
}

impl PartialEq for WordEmbeddings {
    fn eq(&self, other: &Self) -> bool {
        self.vocab.words() == other.vocab.words()
            && self.dim == other.dim
            && self.metadata == other.metadata
            && self.matrix.len() == other.matrix.len()
            && self
                .matrix
                .iter()
                .zip(&other.matrix)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

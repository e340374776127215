//! Word embedding matrices: text I/O, warm-start initialization, CBOW
//! training and normalization.

mod cbow;
mod init;
mod io;

pub use cbow::{train_cbow, CbowConfig, CbowOutput};
pub use init::{init_from_pretrained, WarmStart};
pub use io::{read_embedding, read_embedding_with, write_embedding, ReadOptions};

use nalgebra::DMatrix;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// An N×d embedding bound to its vocabulary.
///
/// Vectors are stored as the columns of a d×N matrix, so each word's
/// vector is contiguous and `W · X` maps every word at once.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    vocab: Vocabulary,
    vectors: DMatrix<f64>,
}

impl EmbeddingMatrix {
    /// `vectors` is d×N: column `i` is the vector of `vocab.word(i)`.
    pub fn new(vocab: Vocabulary, vectors: DMatrix<f64>) -> Result<Self> {
        if vectors.ncols() != vocab.len() {
            return Err(Error::argument(format!(
                "{} vectors for {} words",
                vectors.ncols(),
                vocab.len()
            )));
        }
        if vectors.nrows() == 0 {
            return Err(Error::argument("embedding dimension must be at least 1"));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("embedding contains non-finite entries"));
        }
        Ok(EmbeddingMatrix { vocab, vectors })
    }

    /// Builds from row-major data (one row per word).
    pub fn from_rows(vocab: Vocabulary, dim: usize, rows: &[f64]) -> Result<Self> {
        if dim == 0 || rows.len() != vocab.len() * dim {
            return Err(Error::argument(format!(
                "{} values do not form {} rows of dimension {dim}",
                rows.len(),
                vocab.len()
            )));
        }
        Self::new(vocab, DMatrix::from_column_slice(dim, rows.len() / dim, rows))
    }

    pub(crate) fn from_parts_unchecked(vocab: Vocabulary, vectors: DMatrix<f64>) -> Self {
        debug_assert_eq!(vocab.len(), vectors.ncols());
        EmbeddingMatrix { vocab, vectors }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// The d×N matrix of vectors (one column per word).
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vector(&self, idx: usize) -> &[f64] {
        let d = self.dim();
        &self.vectors.as_slice()[idx * d..(idx + 1) * d]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vocab.index_of(word).map(|i| self.vector(i))
    }

    /// The first `n` words (the most frequent ones for frequency-ordered vocabularies).
    pub fn truncated(&self, n: usize) -> EmbeddingMatrix {
        let n = n.min(self.len());
        let (vocab, _) = Vocabulary::from_words(self.vocab.words()[..n].iter().cloned());
        let vectors = self.vectors.columns(0, n).into_owned();
        EmbeddingMatrix { vocab, vectors }
    }

    pub fn into_vectors(self) -> DMatrix<f64> {
        self.vectors
    }

    pub(crate) fn with_vectors(&self, vectors: DMatrix<f64>) -> EmbeddingMatrix {
        debug_assert_eq!(vectors.ncols(), self.len());
        EmbeddingMatrix {
            vocab: self.vocab.clone(),
            vectors,
        }
    }

    /// True when every non-zero vector has norm within `tol` of 1.
    pub fn is_unit_normalized(&self, tol: f64) -> bool {
        self.vectors.column_iter().all(|c| {
            let n = c.norm();
            n == 0.0 || (n - 1.0).abs() <= tol
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NormScheme {
    #[default]
    None,
    Unit,
    CenterUnit,
}

impl std::str::FromStr for NormScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NormScheme::None),
            "unit" => Ok(NormScheme::Unit),
            "center_unit" | "center-unit" => Ok(NormScheme::CenterUnit),
            _ => Err(Error::argument(format!("unknown normalization scheme {s:?}"))),
        }
    }
}

/// Returns the normalized embedding. Zero vectors stay zero (with a warning).
pub fn normalize(emb: &EmbeddingMatrix, scheme: NormScheme) -> EmbeddingMatrix {
    let mut v = emb.vectors.clone();
    if scheme == NormScheme::None {
        return emb.with_vectors(v);
    }
    if scheme == NormScheme::CenterUnit && v.ncols() > 0 {
        let mean = v.column_mean();
        for mut col in v.column_iter_mut() {
            col -= &mean;
        }
    }
    let zeros = unit_columns(&mut v);
    if zeros > 0 {
        log::warn!("{zeros} zero vectors left unnormalized");
    }
    emb.with_vectors(v)
}

/// Scales every column to unit norm; returns the number of zero columns.
pub(crate) fn unit_columns(v: &mut DMatrix<f64>) -> usize {
    let mut zeros = 0;
    for mut col in v.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        } else {
            zeros += 1;
        }
    }
    zeros
}

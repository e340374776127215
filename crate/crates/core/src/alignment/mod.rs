//! Linear maps from a source embedding space into a target space.
//!
//! Three ways to learn one are provided: orthogonal Procrustes on a seed
//! dictionary, adversarial training followed by iterative refinement (no
//! dictionary), and direct optimization of the relaxed CSLS retrieval
//! criterion. All of them expect unit-normalized embeddings and normalize
//! their inputs (with a warning) when that is not the case.

mod adversarial;
mod procrustes;
mod rcsls;
mod refine;

pub use adversarial::{adversarial_align, AdversarialConfig, AdversarialTrainer};
pub use procrustes::{procrustes, procrustes_pairs};
pub use rcsls::{rcsls_align, rcsls_objective, RcslsConfig, RcslsOutput};
pub use refine::{build_synthetic_lexicon, mutual_csls_score, refine, refine_report, RefineReport};

use std::borrow::Cow;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::embedding::{normalize, EmbeddingMatrix, NormScheme};
use crate::error::{Error, Result};

/// Tolerance on ‖WᵀW − I‖_max for maps flagged orthogonal.
pub const ORTHOGONALITY_TOL: f64 = 1e-6;
const UNIT_TOL: f64 = 1e-6;

/// A square matrix `W` mapping source vectors `x` to `W x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
    orthogonal: bool,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>, orthogonal: bool) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::argument(format!(
                "map must be a non-empty square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("map has non-finite entries".into()));
        }
        let map = LinearMap { matrix, orthogonal };
        if orthogonal && map.orthogonality_error() > ORTHOGONALITY_TOL {
            return Err(Error::argument(format!(
                "map flagged orthogonal but ‖WᵀW − I‖_max = {:e}",
                map.orthogonality_error()
            )));
        }
        Ok(map)
    }

    pub fn identity(d: usize) -> Self {
        LinearMap {
            matrix: DMatrix::identity(d, d),
            orthogonal: true,
        }
    }

    /// The nearest orthogonal matrix to `m` in Frobenius norm (`U Vᵀ` of its SVD).
    pub fn nearest_orthogonal(m: &DMatrix<f64>) -> Result<Self> {
        LinearMap::new(orthogonal_factor(m), true)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_orthogonal(&self) -> bool {
        self.orthogonal
    }

    /// ‖WᵀW − I‖_max.
    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.matrix)
    }

    pub fn transpose(&self) -> LinearMap {
        LinearMap {
            matrix: self.matrix.transpose(),
            orthogonal: self.orthogonal,
        }
    }

    /// Parses the text form: a line with `d`, then `d` rows of `d` numbers.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().filter(|(_, l)| {
            l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true)
        });
        let (_, first) = lines.next().ok_or(Error::Format {
            line: 1,
            msg: "empty map file".into(),
        })?;
        let d: usize = first?.trim().parse().map_err(|_| Error::Format {
            line: 1,
            msg: "first line must hold the dimension".into(),
        })?;
        let mut data = Vec::with_capacity(d * d);
        for r in 0..d {
            let (i, line) = lines.next().ok_or(Error::Format {
                line: r + 2,
                msg: format!("expected {d} rows"),
            })?;
            let line = line?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format {
                    line: i + 1,
                    msg: "non-numeric entry".into(),
                })?;
            if row.len() != d {
                return Err(Error::Format {
                    line: i + 1,
                    msg: format!("expected {d} entries, found {}", row.len()),
                });
            }
            data.extend(row);
        }
        let matrix = DMatrix::from_row_slice(d, d, &data);
        let orthogonal = orthogonality_error(&matrix) <= ORTHOGONALITY_TOL;
        LinearMap::new(matrix, orthogonal)
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<()> {
        let d = self.dim();
        writeln!(sink, "{d}")?;
        for r in 0..d {
            let row: Vec<String> = self.matrix.row(r).iter().map(|v| v.to_string()).collect();
            writeln!(sink, "{}", row.join(" "))?;
        }
        sink.flush()?;
        Ok(())
    }
}

pub(crate) fn orthogonality_error(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m - DMatrix::<f64>::identity(m.ncols(), m.ncols());
    g.amax()
}

/// `U Vᵀ` for the SVD `m = U Σ Vᵀ`.
pub(crate) fn orthogonal_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    svd.u.expect("svd u") * svd.v_t.expect("svd v_t")
}

/// One step of `W ← (1+β)W − β(W Wᵀ)W`, which pulls `W` towards orthogonality.
pub fn orthogonalize_step(w: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
    w * (1.0 + beta) - (w * w.transpose() * w) * beta
}

/// Replaces every vector `x` with `W x`.
pub fn apply_map(map: &LinearMap, emb: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if map.dim() != emb.dim() {
        return Err(Error::argument(format!(
            "map dimension {} does not match embedding dimension {}",
            map.dim(),
            emb.dim()
        )));
    }
    Ok(emb.with_vectors(&map.matrix * emb.vectors()))
}

/// Returns `emb` unit-normalized, warning if it was not already.
pub(crate) fn ensure_unit<'a>(emb: &'a EmbeddingMatrix, side: &str) -> Cow<'a, EmbeddingMatrix> {
    if emb.is_unit_normalized(UNIT_TOL) {
        Cow::Borrowed(emb)
    } else {
        log::warn!("{side} embedding is not unit-normalized; normalizing");
        Cow::Owned(normalize(emb, NormScheme::Unit))
    }
}

use nalgebra::DMatrix;

use super::{ensure_unit, LinearMap};
use crate::corpus::{filter_lexicon, BilingualLexicon};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};

/// Orthogonal `W` minimizing ‖W X − Y‖_F for paired columns of `x` and `y` (both d×n).
///
/// Closed form: `W = U Vᵀ` where `U Σ Vᵀ` is the SVD of `Y Xᵀ`.
pub fn procrustes_pairs(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<LinearMap> {
    if x.shape() != y.shape() {
        return Err(Error::argument(format!(
            "paired matrices differ in shape: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::Alignment("no training pairs".into()));
    }
    let m = y * x.transpose();
    LinearMap::nearest_orthogonal(&m)
}

/// Gathers the paired columns for `(source index, target index)` pairs.
pub(crate) fn paired_columns(
    src: &DMatrix<f64>,
    tgt: &DMatrix<f64>,
    pairs: &[(usize, usize)],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = src.nrows();
    let mut x = DMatrix::zeros(d, pairs.len());
    let mut y = DMatrix::zeros(d, pairs.len());
    for (c, &(i, j)) in pairs.iter().enumerate() {
        x.set_column(c, &src.column(i));
        y.set_column(c, &tgt.column(j));
    }
    (x, y)
}

pub(crate) fn lexicon_indices(
    lex: &BilingualLexicon,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
) -> Vec<(usize, usize)> {
    lex.pairs()
        .iter()
        .filter_map(|(s, t)| Some((src.vocab().index_of(s)?, tgt.vocab().index_of(t)?)))
        .collect()
}

/// Supervised orthogonal alignment on the dictionary pairs covered by both embeddings.
pub fn procrustes(
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    train_lex: &BilingualLexicon,
) -> Result<LinearMap> {
    if src.dim() != tgt.dim() {
        return Err(Error::argument("source and target dimensions differ"));
    }
    let src = ensure_unit(src, "source");
    let tgt = ensure_unit(tgt, "target");
    let (lex, dropped) = filter_lexicon(train_lex, src.vocab(), tgt.vocab());
    if dropped > 0 {
        log::warn!("{dropped} training pairs are out of vocabulary");
    }
    if lex.is_empty() {
        return Err(Error::Alignment("training lexicon is empty after filtering".into()));
    }
    if lex.len() < src.dim() {
        log::warn!(
            "only {} training pairs for dimension {}; the solution is underdetermined",
            lex.len(),
            src.dim()
        );
    }
    let pairs = lexicon_indices(&lex, &src, &tgt);
    let (x, y) = paired_columns(src.vectors(), tgt.vectors(), &pairs);
    procrustes_pairs(&x, &y)
}

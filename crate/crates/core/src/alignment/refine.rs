use nalgebra::DMatrix;

use super::procrustes::{paired_columns, procrustes_pairs};
use super::{apply_map, ensure_unit, LinearMap};
use crate::corpus::BilingualLexicon;
use crate::embedding::{unit_columns, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::retrieval::{for_each_block, knn_mean_similarity};

/// A mutual CSLS nearest-neighbour pair: source index, target index, CSLS score.
pub(crate) type MutualPair = (usize, usize, f64);

/// Mutual CSLS nearest neighbours between the first `max_rank` columns of
/// `mapped` and of `tgt`. Both matrices must have unit columns.
///
/// CSLS for a fixed source differs from cosine only by the target-side
/// hubness term (the source term is constant), so the forward argmax only
/// needs `r_S` and the backward argmax only needs `r_T`.
pub(crate) fn mutual_pairs(
    mapped: &DMatrix<f64>,
    tgt: &DMatrix<f64>,
    k: usize,
    max_rank: usize,
) -> Vec<MutualPair> {
    let ns = max_rank.min(mapped.ncols());
    let nt = max_rank.min(tgt.ncols());
    if ns == 0 || nt == 0 {
        return Vec::new();
    }
    let k = k.clamp(1, ns.min(nt));
    let s = mapped.columns(0, ns).into_owned();
    let t = tgt.columns(0, nt).into_owned();
    let r_s = knn_mean_similarity(&t, &s, k);
    let r_t = knn_mean_similarity(&s, &t, k);

    let best = |queries: &DMatrix<f64>, pool: &DMatrix<f64>, pool_hub: &[f64]| -> Vec<usize> {
        for_each_block(queries, pool, |_, block| {
            (0..block.nrows())
                .map(|i| {
                    let mut arg = 0;
                    let mut top = f64::NEG_INFINITY;
                    for (j, hub) in pool_hub.iter().enumerate() {
                        let v = 2.0 * block[(i, j)] - hub;
                        if v > top {
                            top = v;
                            arg = j;
                        }
                    }
                    arg
                })
                .collect::<Vec<_>>()
        })
        .concat()
    };
    let fwd = best(&s, &t, &r_s);
    let bwd = best(&t, &s, &r_t);
    fwd.iter()
        .enumerate()
        .filter(|&(i, &j)| bwd[j] == i)
        .map(|(i, &j)| {
            let cos = s.column(i).dot(&t.column(j));
            (i, j, 2.0 * cos - r_t[i] - r_s[j])
        })
        .collect()
}

fn proxy_score(pairs: &[MutualPair]) -> f64 {
    if pairs.is_empty() {
        f64::NEG_INFINITY
    } else {
        pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64
    }
}

fn unit_mapped(map: &LinearMap, src: &EmbeddingMatrix) -> Result<DMatrix<f64>> {
    let mut m = apply_map(map, src)?.into_vectors();
    unit_columns(&mut m);
    Ok(m)
}

/// Pairs `(s, t)` among the `max_rank` most frequent words of each side such
/// that `t` is the CSLS-nearest target of `s` and `s` the CSLS-nearest source of `t`.
pub fn build_synthetic_lexicon(
    src_mapped: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    k: usize,
    max_rank: usize,
) -> Result<BilingualLexicon> {
    if src_mapped.dim() != tgt.dim() {
        return Err(Error::argument("source and target dimensions differ"));
    }
    let mut s = src_mapped.vectors().clone();
    let mut t = tgt.vectors().clone();
    unit_columns(&mut s);
    unit_columns(&mut t);
    let pairs = mutual_pairs(&s, &t, k, max_rank);
    Ok(BilingualLexicon::from_pairs(pairs.iter().map(|&(i, j, _)| {
        (src_mapped.vocab().word(i), tgt.vocab().word(j))
    })))
}

/// Mean CSLS of mutual nearest-neighbour pairs under `map`; the unsupervised
/// model-selection score. Negative infinity when there are no mutual pairs.
pub fn mutual_csls_score(
    map: &LinearMap,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    k: usize,
    max_rank: usize,
) -> Result<f64> {
    let src = ensure_unit(src, "source");
    let tgt = ensure_unit(tgt, "target");
    let mapped = unit_mapped(map, &src)?;
    Ok(proxy_score(&mutual_pairs(&mapped, tgt.vectors(), k, max_rank)))
}

/// Result of [`refine_report`].
#[derive(Clone, Debug)]
pub struct RefineReport {
    pub map: LinearMap,
    /// Proxy score of the initial map followed by one entry per completed iteration.
    pub scores: Vec<f64>,
    /// Synthetic lexicon size at each completed iteration.
    pub lexicon_sizes: Vec<usize>,
    /// Index into `scores` of the returned map (0 is the initial map).
    pub best: usize,
}

/// Alternates synthetic-lexicon induction and Procrustes, keeping the best iterate.
pub fn refine(
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    initial: &LinearMap,
    iterations: usize,
    k: usize,
    max_rank: usize,
) -> Result<LinearMap> {
    refine_report(src, tgt, initial, iterations, k, max_rank).map(|r| r.map)
}

pub fn refine_report(
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    initial: &LinearMap,
    iterations: usize,
    k: usize,
    max_rank: usize,
) -> Result<RefineReport> {
    if src.dim() != tgt.dim() || initial.dim() != src.dim() {
        return Err(Error::argument("map, source and target dimensions differ"));
    }
    if iterations == 0 {
        return Ok(RefineReport {
            map: initial.clone(),
            scores: Vec::new(),
            lexicon_sizes: Vec::new(),
            best: 0,
        });
    }
    let src = ensure_unit(src, "source");
    let tgt = ensure_unit(tgt, "target");
    let mut current = initial.clone();
    let mut pairs = mutual_pairs(&unit_mapped(&current, &src)?, tgt.vectors(), k, max_rank);
    let mut scores = vec![proxy_score(&pairs)];
    let mut sizes = Vec::with_capacity(iterations);
    let mut best = (scores[0], 0, current.clone());
    for it in 1..=iterations {
        if pairs.is_empty() {
            log::warn!("synthetic lexicon is empty at iteration {it}; stopping refinement");
            break;
        }
        let idx: Vec<(usize, usize)> = pairs.iter().map(|&(i, j, _)| (i, j)).collect();
        let (x, y) = paired_columns(src.vectors(), tgt.vectors(), &idx);
        current = procrustes_pairs(&x, &y)?;
        sizes.push(idx.len());
        pairs = mutual_pairs(&unit_mapped(&current, &src)?, tgt.vectors(), k, max_rank);
        let score = proxy_score(&pairs);
        log::debug!("refine iteration {it}: {} pairs, proxy {score:.5}", idx.len());
        scores.push(score);
        if score > best.0 {
            best = (score, it, current.clone());
        }
    }
    Ok(RefineReport {
        map: best.2,
        scores,
        lexicon_sizes: sizes,
        best: best.1,
    })
}

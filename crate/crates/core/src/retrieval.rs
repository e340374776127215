//! Word-translation retrieval and its evaluation.
//!
//! Candidates are ranked either by plain cosine (`nn`) or by cross-domain
//! similarity local scaling (`csls`):
//!
//! ```text
//! csls(Wx, y) = 2 cos(Wx, y) - r_T(Wx) - r_S(y)
//! ```
//!
//! where `r_T(Wx)` is the mean cosine of `Wx` to its `k` nearest targets and
//! `r_S(y)` the mean cosine of `y` to its `k` nearest mapped sources.
//! Ties are always broken by ascending target index.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alignment::{apply_map, LinearMap};
use crate::corpus::{filter_lexicon, BilingualLexicon};
use crate::embedding::{unit_columns, EmbeddingMatrix};
use crate::error::{Error, Result};

pub const DEFAULT_CSLS_K: usize = 10;
/// Precision cut-offs reported by [`evaluate`].
pub const REPORT_KS: [usize; 3] = [1, 5, 10];

const CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Nn,
    Csls,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn" => Ok(Method::Nn),
            "csls" => Ok(Method::Csls),
            _ => Err(Error::argument(format!("unknown retrieval method {s:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Nn => "nn",
            Method::Csls => "csls",
        })
    }
}

/// Descending score, ascending index.
#[inline]
fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `top` best entries of `scores` in rank order.
pub fn top_ranked(scores: &[f64], top: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
    let top = top.min(all.len());
    if top == 0 {
        return Vec::new();
    }
    if top < all.len() {
        all.select_nth_unstable_by(top - 1, rank_order);
        all.truncate(top);
    }
    all.sort_unstable_by(rank_order);
    all
}

fn mean_top_k(row: &mut [f64], k: usize) -> f64 {
    let k = k.min(row.len());
    if k == 0 {
        return 0.0;
    }
    if k < row.len() {
        row.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    }
    row[..k].iter().sum::<f64>() / k as f64
}

/// Calls `f(first_query_index, block)` for consecutive query chunks, where
/// `block` is the chunk×pool matrix of dot products. Chunks are processed
/// in parallel and the results returned in query order.
pub(crate) fn for_each_block<T, F>(queries: &DMatrix<f64>, pool: &DMatrix<f64>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &DMatrix<f64>) -> T + Sync,
{
    let n = queries.ncols();
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    starts
        .into_par_iter()
        .map(|start| {
            let len = CHUNK.min(n - start);
            let q = queries.columns(start, len);
            let block = q.transpose() * pool;
            f(start, &block)
        })
        .collect()
}

/// For each query column, the mean of its `k` largest dot products with the pool columns.
pub fn knn_mean_similarity(queries: &DMatrix<f64>, pool: &DMatrix<f64>, k: usize) -> Vec<f64> {
    for_each_block(queries, pool, |_, block| {
        let mut row = vec![0.0; block.ncols()];
        (0..block.nrows())
            .map(|i| {
                for (j, r) in row.iter_mut().enumerate() {
                    *r = block[(i, j)];
                }
                mean_top_k(&mut row, k)
            })
            .collect::<Vec<_>>()
    })
    .concat()
}

/// Indices of the `k` nearest pool columns of each query (unordered within a row).
pub(crate) fn knn_indices(queries: &DMatrix<f64>, pool: &DMatrix<f64>, k: usize) -> Vec<Vec<usize>> {
    for_each_block(queries, pool, |_, block| {
        (0..block.nrows())
            .map(|i| {
                let scores: Vec<f64> = block.row(i).iter().copied().collect();
                top_ranked(&scores, k).into_iter().map(|(j, _)| j).collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    })
    .concat()
}

fn unit(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = m.clone();
    unit_columns(&mut m);
    m
}

fn check_k(k: usize, a: usize, b: usize) -> Result<()> {
    if k == 0 || k > a || k > b {
        return Err(Error::argument(format!(
            "csls k must be in 1..={}, got {k}",
            a.min(b)
        )));
    }
    Ok(())
}

/// Precomputed target-side neighbourhood terms for CSLS scoring.
#[derive(Clone, Debug)]
pub struct CslsIndex {
    targets: DMatrix<f64>,
    target_hubness: Vec<f64>,
    k: usize,
}

impl CslsIndex {
    /// `targets` and `sources_mapped` are d×N matrices; columns are normalized internally.
    pub fn new(targets: &DMatrix<f64>, sources_mapped: &DMatrix<f64>, k: usize) -> Result<Self> {
        check_k(k, targets.ncols(), sources_mapped.ncols())?;
        let targets = unit(targets);
        let sources = unit(sources_mapped);
        let target_hubness = knn_mean_similarity(&targets, &sources, k);
        Ok(CslsIndex {
            targets,
            target_hubness,
            k,
        })
    }

    /// `r_S(y)` for every target.
    pub fn target_hubness(&self) -> &[f64] {
        &self.target_hubness
    }

    /// Scores of one (mapped) query against every target.
    pub fn scores(&self, query: &[f64]) -> Vec<f64> {
        let q = DMatrix::from_column_slice(query.len(), 1, query);
        let q = unit(&q);
        let sims = (q.transpose() * &self.targets).row(0).iter().copied().collect::<Vec<_>>();
        let mut tmp = sims.clone();
        let r_t = mean_top_k(&mut tmp, self.k);
        sims.iter()
            .zip(&self.target_hubness)
            .map(|(s, r_s)| 2.0 * s - r_t - r_s)
            .collect()
    }

    /// Scores for a batch of mapped queries (d×m), one row per query.
    fn score_block(&self, queries: &DMatrix<f64>) -> Vec<Vec<f64>> {
        let queries = unit(queries);
        for_each_block(&queries, &self.targets, |_, block| {
            (0..block.nrows())
                .map(|i| {
                    let mut row: Vec<f64> = block.row(i).iter().copied().collect();
                    let r_t = mean_top_k(&mut row.clone(), self.k);
                    for (r, r_s) in row.iter_mut().zip(&self.target_hubness) {
                        *r = 2.0 * *r - r_t - r_s;
                    }
                    row
                })
                .collect::<Vec<_>>()
        })
        .concat()
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// CSLS score of one mapped query vector against every target word.
pub fn csls_score(
    query: &[f64],
    targets: &EmbeddingMatrix,
    sources_mapped: &EmbeddingMatrix,
    k: usize,
) -> Result<Vec<f64>> {
    if query.len() != targets.dim() || sources_mapped.dim() != targets.dim() {
        return Err(Error::argument("query, target and source dimensions differ"));
    }
    let index = CslsIndex::new(targets.vectors(), sources_mapped.vectors(), k)?;
    Ok(index.scores(query))
}

/// Ranks all targets for a batch of source word indices.
fn rank_queries(
    mapped_src: &DMatrix<f64>,
    tgt: &DMatrix<f64>,
    queries: &[usize],
    method: Method,
    k: usize,
    top: usize,
) -> Result<Vec<Vec<(usize, f64)>>> {
    let d = mapped_src.nrows();
    let mut q = DMatrix::zeros(d, queries.len());
    for (c, &i) in queries.iter().enumerate() {
        q.set_column(c, &mapped_src.column(i));
    }
    match method {
        Method::Nn => {
            let q = unit(&q);
            let t = unit(tgt);
            Ok(for_each_block(&q, &t, |_, block| {
                (0..block.nrows())
                    .map(|i| {
                        let row: Vec<f64> = block.row(i).iter().copied().collect();
                        top_ranked(&row, top)
                    })
                    .collect::<Vec<_>>()
            })
            .concat())
        }
        Method::Csls => {
            let index = CslsIndex::new(tgt, mapped_src, k)?;
            Ok(index
                .score_block(&q)
                .into_iter()
                .map(|row| top_ranked(&row, top))
                .collect())
        }
    }
}

fn mapped_unit(map: &LinearMap, src: &EmbeddingMatrix) -> Result<DMatrix<f64>> {
    let mapped = apply_map(map, &crate::alignment::ensure_unit(src, "source"))?;
    Ok(unit(mapped.vectors()))
}

/// Ranked translations of `query_word` among all target words.
pub fn retrieve(
    query_word: &str,
    map: &LinearMap,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    method: Method,
    k: usize,
    top: usize,
) -> Result<Vec<(String, f64)>> {
    let qi = src
        .vocab()
        .index_of(query_word)
        .ok_or_else(|| Error::Lookup(query_word.to_owned()))?;
    let mapped = mapped_unit(map, src)?;
    let tgt_unit = unit(tgt.vectors());
    let ranked = rank_queries(&mapped, &tgt_unit, &[qi], method, k, top)?;
    Ok(ranked[0]
        .iter()
        .map(|&(j, s)| (tgt.vocab().word(j).to_owned(), s))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryOutcome {
    pub source: String,
    /// Best-first candidates with their scores.
    pub ranked: Vec<(String, f64)>,
    pub references: Vec<String>,
    /// Whether the top candidate is a reference translation.
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalReport {
    pub method: Method,
    pub p_at_1: f64,
    /// (k, precision at k) for each of [`REPORT_KS`].
    pub p_at_k: Vec<(usize, f64)>,
    pub n_queries: usize,
    pub per_query: Vec<QueryOutcome>,
}

impl RetrievalReport {
    pub fn precision_at(&self, k: usize) -> Option<f64> {
        self.p_at_k.iter().find(|(kk, _)| *kk == k).map(|(_, p)| *p)
    }

    /// `P@1 <v> P@5 <v> P@10 <v> queries <n>`
    pub fn summary_line(&self) -> String {
        let mut s = String::new();
        for (k, p) in &self.p_at_k {
            let _ = write!(s, "P@{k} {p:.4} ");
        }
        let _ = write!(s, "queries {}", self.n_queries);
        s
    }

    /// One `src -> predicted [correct|wrong] (references...)` line per query.
    pub fn query_lines(&self) -> Vec<String> {
        self.per_query
            .iter()
            .map(|q| {
                let predicted = q.ranked.first().map(|(w, _)| w.as_str()).unwrap_or("-");
                format!(
                    "{} -> {} [{}] ({})",
                    q.source,
                    predicted,
                    if q.correct { "correct" } else { "wrong" },
                    q.references.join(", ")
                )
            })
            .collect()
    }
}

/// Precision at 1/5/10 of `map` on the pairs of `lex` covered by both vocabularies.
///
/// Every distinct source word is one query; it counts as correct at rank `r`
/// when any of its reference targets is among the top `r` candidates.
pub fn evaluate(
    map: &LinearMap,
    lex: &BilingualLexicon,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    method: Method,
    k: usize,
) -> Result<RetrievalReport> {
    let (lex, dropped) = filter_lexicon(lex, src.vocab(), tgt.vocab());
    if dropped > 0 {
        log::warn!("{dropped} lexicon pairs are out of vocabulary and were skipped");
    }
    if lex.is_empty() {
        return Err(Error::Evaluation("no lexicon pairs covered by both vocabularies".into()));
    }
    let groups = lex.grouped();
    let queries: Vec<usize> = groups
        .iter()
        .map(|(s, _)| src.vocab().index_of(s).unwrap())
        .collect();
    let max_k = *REPORT_KS.iter().max().unwrap();
    let mapped = mapped_unit(map, src)?;
    let tgt_unit = unit(tgt.vectors());
    let ranked = rank_queries(&mapped, &tgt_unit, &queries, method, k, max_k)?;

    let mut hits = [0usize; REPORT_KS.len()];
    let mut per_query = Vec::with_capacity(groups.len());
    for ((source, refs), cands) in groups.iter().zip(&ranked) {
        let ref_idx: HashSet<usize> = refs
            .iter()
            .map(|t| tgt.vocab().index_of(t).unwrap())
            .collect();
        let first_hit = cands.iter().position(|(j, _)| ref_idx.contains(j));
        for (h, &kk) in hits.iter_mut().zip(REPORT_KS.iter()) {
            if first_hit.is_some_and(|r| r < kk) {
                *h += 1;
            }
        }
        per_query.push(QueryOutcome {
            source: source.to_string(),
            ranked: cands
                .iter()
                .map(|&(j, s)| (tgt.vocab().word(j).to_owned(), s))
                .collect(),
            references: refs.iter().map(|s| s.to_string()).collect(),
            correct: first_hit == Some(0),
        });
    }
    let n = groups.len();
    let p_at_k: Vec<(usize, f64)> = REPORT_KS
        .iter()
        .zip(hits)
        .map(|(&kk, h)| (kk, h as f64 / n as f64))
        .collect();
    Ok(RetrievalReport {
        method,
        p_at_1: p_at_k[0].1,
        p_at_k,
        n_queries: n,
        per_query,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomBaseline {
    /// Mean over queries of (#reference targets / #distinct targets).
    pub analytic: f64,
    pub monte_carlo: f64,
}

/// Precision at 1 of guessing uniformly among the lexicon's own target words.
pub fn random_baseline(lex: &BilingualLexicon, trials: usize, seed: u64) -> Result<RandomBaseline> {
    if trials == 0 {
        return Err(Error::argument("trials must be at least 1"));
    }
    if lex.is_empty() {
        return Err(Error::Evaluation("empty lexicon".into()));
    }
    let targets = lex.target_words();
    let groups = lex.grouped();
    let refs: Vec<HashSet<usize>> = groups
        .iter()
        .map(|(_, ts)| {
            ts.iter()
                .map(|t| targets.iter().position(|x| x == t).unwrap())
                .collect()
        })
        .collect();
    let n_t = targets.len() as f64;
    let analytic = refs.iter().map(|r| r.len() as f64 / n_t).sum::<f64>() / refs.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..trials {
        for r in &refs {
            if r.contains(&rng.random_range(0..targets.len())) {
                hits += 1;
            }
        }
    }
    let monte_carlo = hits as f64 / (trials as f64 * refs.len() as f64);
    Ok(RandomBaseline {
        analytic,
        monte_carlo,
    })
}

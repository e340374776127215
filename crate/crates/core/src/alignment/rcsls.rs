use nalgebra::DMatrix;

use super::procrustes::{lexicon_indices, paired_columns};
use super::{ensure_unit, procrustes, LinearMap};
use crate::corpus::{filter_lexicon, BilingualLexicon};
use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::retrieval::knn_indices;

#[derive(Clone, Debug, PartialEq)]
pub struct RcslsConfig {
    pub k: usize,
    pub lr: f64,
    pub epochs: usize,
    pub neighborhood_refresh: usize,
    /// Project W onto the unit spectral ball after every step.
    pub spectral: bool,
    /// Neighbours are searched among the first `max_neighbors` words of each vocabulary.
    pub max_neighbors: usize,
    pub seed: u64,
}

impl Default for RcslsConfig {
    fn default() -> Self {
        RcslsConfig {
            k: 10,
            lr: 1.0,
            epochs: 20,
            neighborhood_refresh: 1,
            spectral: true,
            max_neighbors: 200_000,
            seed: 1,
        }
    }
}

impl RcslsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::argument("rcsls k must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::argument("rcsls lr must be positive"));
        }
        if self.neighborhood_refresh == 0 {
            return Err(Error::argument("neighborhood_refresh must be at least 1"));
        }
        if self.max_neighbors == 0 {
            return Err(Error::argument("max_neighbors must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RcslsOutput {
    pub map: LinearMap,
    /// Objective of the initial map followed by the objective after each epoch.
    pub objectives: Vec<f64>,
    /// Index into `objectives` of the returned map.
    pub best: usize,
}

/// The training pairs and neighbour pools, fixed for one optimization run.
struct Problem {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    src_pool: DMatrix<f64>,
    tgt_pool: DMatrix<f64>,
    k_t: usize,
    k_s: usize,
}

/// For each pair, the target neighbours of `W x_i` and the mapped-source neighbours of `y_i`.
#[derive(Clone)]
struct Neighbours {
    of_mapped: Vec<Vec<usize>>,
    of_target: Vec<Vec<usize>>,
}

impl Problem {
    fn new(
        src: &EmbeddingMatrix,
        tgt: &EmbeddingMatrix,
        lex: &BilingualLexicon,
        k: usize,
        max_neighbors: usize,
    ) -> Result<Self> {
        let (lex, dropped) = filter_lexicon(lex, src.vocab(), tgt.vocab());
        if dropped > 0 {
            log::warn!("{dropped} training pairs are out of vocabulary");
        }
        if lex.is_empty() {
            return Err(Error::Alignment("training lexicon is empty after filtering".into()));
        }
        let pairs = lexicon_indices(&lex, src, tgt);
        let (x, y) = paired_columns(src.vectors(), tgt.vectors(), &pairs);
        let ns = max_neighbors.min(src.len());
        let nt = max_neighbors.min(tgt.len());
        Ok(Problem {
            x,
            y,
            src_pool: src.vectors().columns(0, ns).into_owned(),
            tgt_pool: tgt.vectors().columns(0, nt).into_owned(),
            k_t: k.min(nt),
            k_s: k.min(ns),
        })
    }

    fn neighbours(&self, w: &DMatrix<f64>) -> Neighbours {
        let wx = w * &self.x;
        let mapped_pool = w * &self.src_pool;
        Neighbours {
            of_mapped: knn_indices(&wx, &self.tgt_pool, self.k_t),
            of_target: knn_indices(&self.y, &mapped_pool, self.k_s),
        }
    }

    /// Column `i` holds the sum of the neighbour vectors of pair `i`:
    /// targets near `W x_i` and (unmapped) sources whose image is near `y_i`.
    fn neighbour_sums(&self, nb: &Neighbours) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.x.nrows();
        let n = self.x.ncols();
        let mut t_sum = DMatrix::zeros(d, n);
        let mut s_sum = DMatrix::zeros(d, n);
        for i in 0..n {
            let mut tc = t_sum.column_mut(i);
            for &j in &nb.of_mapped[i] {
                tc += self.tgt_pool.column(j);
            }
            let mut sc = s_sum.column_mut(i);
            for &j in &nb.of_target[i] {
                sc += self.src_pool.column(j);
            }
        }
        (t_sum, s_sum)
    }

    /// Mean over pairs of `2 (Wx)·y − mean_k (Wx)·t − mean_k (Wx')·y`.
    fn objective(&self, w: &DMatrix<f64>, nb: &Neighbours) -> f64 {
        let (t_sum, s_sum) = self.neighbour_sums(nb);
        let wx = w * &self.x;
        let ws = w * s_sum;
        let n = self.x.ncols();
        let total: f64 = (0..n)
            .map(|i| {
                let y = self.y.column(i);
                let q = wx.column(i);
                2.0 * q.dot(&y)
                    - q.dot(&t_sum.column(i)) / self.k_t as f64
                    - ws.column(i).dot(&y) / self.k_s as f64
            })
            .sum();
        total / n as f64
    }

    /// Gradient of [`Problem::objective`] with the neighbour sets held fixed.
    fn gradient(&self, nb: &Neighbours) -> DMatrix<f64> {
        let (t_sum, s_sum) = self.neighbour_sums(nb);
        let xt = self.x.transpose();
        let g = &self.y * &xt * 2.0
            - t_sum * &xt / self.k_t as f64
            - &self.y * s_sum.transpose() / self.k_s as f64;
        g / self.x.ncols() as f64
    }
}

/// Clips the singular values of `w` to at most 1.
fn spectral_projection(w: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = w.clone().svd(true, true);
    let s = svd.singular_values.map(|v| v.min(1.0));
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    u * DMatrix::from_diagonal(&s) * v_t
}

/// Relaxed CSLS objective of `map` on the training pairs (higher is better).
pub fn rcsls_objective(
    map: &LinearMap,
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    train_lex: &BilingualLexicon,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::argument("rcsls k must be at least 1"));
    }
    if map.dim() != src.dim() || src.dim() != tgt.dim() {
        return Err(Error::argument("map, source and target dimensions differ"));
    }
    let src = ensure_unit(src, "source");
    let tgt = ensure_unit(tgt, "target");
    let p = Problem::new(&src, &tgt, train_lex, k, usize::MAX)?;
    let w = map.matrix();
    Ok(p.objective(w, &p.neighbours(w)))
}

/// Full-batch gradient ascent on the relaxed CSLS objective.
///
/// A step that lowers the objective is undone and the learning rate halved.
/// The best iterate (possibly the initial map) is returned.
pub fn rcsls_align(
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    train_lex: &BilingualLexicon,
    config: &RcslsConfig,
    initial: Option<&LinearMap>,
) -> Result<RcslsOutput> {
    config.validate()?;
    if src.dim() != tgt.dim() {
        return Err(Error::argument("source and target dimensions differ"));
    }
    let src = ensure_unit(src, "source");
    let tgt = ensure_unit(tgt, "target");
    let problem = Problem::new(&src, &tgt, train_lex, config.k, config.max_neighbors)?;
    let start = match initial {
        Some(m) if m.dim() != src.dim() => {
            return Err(Error::argument("initial map dimension differs from embeddings"))
        }
        Some(m) => m.clone(),
        None => procrustes(&src, &tgt, train_lex)?,
    };

    let mut w = start.matrix().clone();
    // `fresh` always holds the exact neighbour sets of `w`; `nb` is what the
    // gradient uses and is only replaced every `neighborhood_refresh` epochs.
    let mut fresh = problem.neighbours(&w);
    let mut nb = fresh.clone();
    let mut obj = problem.objective(&w, &fresh);
    if !obj.is_finite() {
        return Err(Error::Numerical("rcsls objective is not finite at the initial map".into()));
    }
    let mut objectives = vec![obj];
    let mut best = (obj, 0, w.clone());
    let mut lr = config.lr;
    for epoch in 1..=config.epochs {
        if epoch > 1 && (epoch - 1) % config.neighborhood_refresh == 0 {
            nb = fresh.clone();
        }
        let mut next = &w + problem.gradient(&nb) * lr;
        if config.spectral {
            next = spectral_projection(&next);
        }
        let next_nb = problem.neighbours(&next);
        let next_obj = problem.objective(&next, &next_nb);
        if !next_obj.is_finite() {
            return Err(Error::Numerical(format!("rcsls objective diverged at epoch {epoch}")));
        }
        log::debug!("rcsls epoch {epoch}: objective {next_obj:.6} lr {lr:e}");
        if next_obj < obj {
            lr /= 2.0;
        } else {
            w = next;
            fresh = next_nb;
            obj = next_obj;
            if obj > best.0 {
                best = (obj, epoch, w.clone());
            }
        }
        objectives.push(obj);
    }
    let map = if best.1 == 0 {
        start
    } else {
        LinearMap::new(best.2, false)?
    };
    Ok(RcslsOutput {
        map,
        objectives,
        best: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::embedding::unit_columns;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn pair(d: usize, n: usize, noise: f64, seed: u64) -> (EmbeddingMatrix, EmbeddingMatrix, BilingualLexicon) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        unit_columns(&mut x);
        let mut y = &x + DMatrix::from_fn(d, n, |_, _| noise * rng.sample::<f64, _>(StandardNormal));
        unit_columns(&mut y);
        let (sv, _) = Vocabulary::from_words((0..n).map(|i| format!("s{i}")));
        let (tv, _) = Vocabulary::from_words((0..n).map(|i| format!("t{i}")));
        let lex = BilingualLexicon::from_pairs((0..n / 2).map(|i| (format!("s{i}"), format!("t{i}"))));
        (EmbeddingMatrix::new(sv, x).unwrap(), EmbeddingMatrix::new(tv, y).unwrap(), lex)
    }

    #[test]
    fn zero_epochs_returns_initial() {
        let (s, t, lex) = pair(5, 40, 0.1, 1);
        let init = LinearMap::new(DMatrix::from_diagonal_element(5, 5, 0.9), false).unwrap();
        let cfg = RcslsConfig { epochs: 0, ..Default::default() };
        let out = rcsls_align(&s, &t, &lex, &cfg, Some(&init)).unwrap();
        assert_eq!(out.map, init);
    }

    #[test]
    fn objective_never_below_initial() {
        let (s, t, lex) = pair(8, 200, 0.2, 2);
        let cfg = RcslsConfig { epochs: 10, ..Default::default() };
        let init = procrustes(&s, &t, &lex).unwrap();
        let out = rcsls_align(&s, &t, &lex, &cfg, None).unwrap();
        let a = rcsls_objective(&init, &s, &t, &lex, cfg.k).unwrap();
        let b = rcsls_objective(&out.map, &s, &t, &lex, cfg.k).unwrap();
        assert!(b >= a - 1e-12, "{b} < {a}");
        assert!((out.objectives[0] - a).abs() < 1e-9);
    }

    #[test]
    fn spectral_norm_stays_bounded() {
        let (s, t, lex) = pair(6, 120, 0.3, 3);
        let cfg = RcslsConfig { epochs: 5, lr: 10.0, ..Default::default() };
        let out = rcsls_align(&s, &t, &lex, &cfg, None).unwrap();
        let top = out.map.matrix().clone().singular_values().max();
        assert!(top <= 1.0 + 1e-9);
        assert!(!out.map.is_orthogonal());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (s, t, lex) = pair(4, 30, 0.3, 4);
        let p = Problem::new(&s, &t, &lex, 3, usize::MAX).unwrap();
        let w = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.9 } else { 0.05 * (i + 2 * j) as f64 });
        let nb = p.neighbours(&w);
        let g = p.gradient(&nb);
        let h = 1e-6;
        for r in 0..4 {
            for c in 0..4 {
                let mut wp = w.clone();
                wp[(r, c)] += h;
                let mut wm = w.clone();
                wm[(r, c)] -= h;
                // Neighbour sets held fixed: the objective is linear in W.
                let fd = (p.objective(&wp, &nb) - p.objective(&wm, &nb)) / (2.0 * h);
                assert!((fd - g[(r, c)]).abs() < 1e-6, "{r},{c}: {fd} vs {}", g[(r, c)]);
            }
        }
    }

    #[test]
    fn empty_lexicon_is_alignment_error() {
        let (s, t, _) = pair(4, 20, 0.1, 5);
        let lex = BilingualLexicon::from_pairs([("nope", "t0")]);
        let r = rcsls_align(&s, &t, &lex, &RcslsConfig::default(), Some(&LinearMap::identity(4)));
        assert!(matches!(r, Err(Error::Alignment(_))));
    }
}

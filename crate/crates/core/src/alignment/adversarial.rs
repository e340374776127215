use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::refine::mutual_pairs;
use super::{ensure_unit, orthogonal_factor, orthogonalize_step, LinearMap};
use crate::embedding::{unit_columns, EmbeddingMatrix};
use crate::error::{Error, Result};

const LEAKY_SLOPE: f64 = 0.2;

/// Per-layer (weight, bias) gradients.
type LayerGrads = Vec<(DMatrix<f64>, DVector<f64>)>;

#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialConfig {
    pub disc_hidden: usize,
    /// Number of hidden layers.
    pub disc_layers: usize,
    /// Dropout applied to the discriminator input.
    pub disc_dropout: f64,
    /// Label smoothing: targets are `1 − smoothing` and `smoothing`.
    pub smoothing: f64,
    pub map_lr: f64,
    pub disc_lr: f64,
    pub epochs: usize,
    /// Source samples drawn per epoch; an epoch has `epoch_size / batch_size` iterations.
    pub epoch_size: usize,
    pub batch_size: usize,
    /// Discriminator updates per mapper update.
    pub disc_steps: usize,
    pub ortho_beta: f64,
    pub vocab_cap: usize,
    /// Multiplicative decay of `map_lr` after every epoch.
    pub lr_decay: f64,
    /// Extra factor applied to `map_lr` when an epoch's proxy score drops.
    pub lr_shrink: f64,
    pub min_lr: f64,
    /// CSLS neighbourhood size of the model-selection proxy.
    pub proxy_k: usize,
    /// Candidate words per side for the model-selection proxy.
    pub proxy_max_rank: usize,
    /// Also train from a reflection of the identity. Gradient steps with the
    /// orthogonalization update cannot change the sign of det W, so a single
    /// start only explores half of the orthogonal group.
    pub both_orientations: bool,
    pub seed: u64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        AdversarialConfig {
            disc_hidden: 2048,
            disc_layers: 2,
            disc_dropout: 0.1,
            smoothing: 0.2,
            map_lr: 0.1,
            disc_lr: 0.1,
            epochs: 5,
            epoch_size: 100_000,
            batch_size: 32,
            disc_steps: 5,
            ortho_beta: 0.01,
            vocab_cap: 50_000,
            lr_decay: 0.98,
            lr_shrink: 0.5,
            min_lr: 1e-6,
            proxy_k: 10,
            proxy_max_rank: 10_000,
            both_orientations: true,
            seed: 1,
        }
    }
}

impl AdversarialConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("disc_hidden", self.disc_hidden),
            ("disc_layers", self.disc_layers),
            ("epoch_size", self.epoch_size),
            ("batch_size", self.batch_size),
            ("disc_steps", self.disc_steps),
            ("vocab_cap", self.vocab_cap),
            ("proxy_k", self.proxy_k),
            ("proxy_max_rank", self.proxy_max_rank),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::argument(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.disc_dropout) {
            return Err(Error::argument("disc_dropout must be in [0, 1)"));
        }
        if !(0.0..0.5).contains(&self.smoothing) {
            return Err(Error::argument("smoothing must be in [0, 0.5)"));
        }
        for (name, v) in [
            ("map_lr", self.map_lr),
            ("disc_lr", self.disc_lr),
            ("lr_decay", self.lr_decay),
            ("lr_shrink", self.lr_shrink),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::argument(format!("{name} must be positive")));
            }
        }
        if !(self.ortho_beta >= 0.0 && self.ortho_beta.is_finite()) {
            return Err(Error::argument("ortho_beta must be non-negative"));
        }
        Ok(())
    }
}

struct Dense {
    w: DMatrix<f64>,
    b: DVector<f64>,
}

impl Dense {
    fn new<R: Rng>(rng: &mut R, input: usize, output: usize) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Dense {
            w: DMatrix::from_fn(output, input, |_, _| rng.random_range(-bound..bound)),
            b: DVector::from_fn(output, |_, _| rng.random_range(-bound..bound)),
        }
    }

    fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.w * x;
        for mut col in z.column_iter_mut() {
            col += &self.b;
        }
        z
    }
}

/// Feed-forward binary classifier: input dropout, LeakyReLU hidden layers, one logit.
struct Discriminator {
    layers: Vec<Dense>,
    dropout: f64,
}

/// Activations kept from a forward pass for backpropagation.
struct Trace {
    /// `inputs[l]` is the input of layer `l`; `inputs[0]` is the (dropped-out) batch.
    inputs: Vec<DMatrix<f64>>,
    /// Input dropout mask already scaled by `1/(1 − p)`; `None` in eval mode.
    mask: Option<DMatrix<f64>>,
    logits: Vec<f64>,
}

impl Discriminator {
    fn new<R: Rng>(rng: &mut R, dim: usize, hidden: usize, n_hidden: usize, dropout: f64) -> Self {
        let mut layers = Vec::with_capacity(n_hidden + 1);
        let mut input = dim;
        for _ in 0..n_hidden {
            layers.push(Dense::new(rng, input, hidden));
            input = hidden;
        }
        layers.push(Dense::new(rng, input, 1));
        Discriminator { layers, dropout }
    }

    fn forward<R: Rng>(&self, x: &DMatrix<f64>, rng: Option<&mut R>) -> Trace {
        let (input, mask) = match rng {
            Some(rng) if self.dropout > 0.0 => {
                let keep = 1.0 - self.dropout;
                let mask = DMatrix::from_fn(x.nrows(), x.ncols(), |_, _| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                (x.component_mul(&mask), Some(mask))
            }
            _ => (x.clone(), None),
        };
        let mut inputs = vec![input];
        let last = self.layers.len() - 1;
        for layer in &self.layers[..last] {
            let mut z = layer.forward(inputs.last().expect("input"));
            z.apply(|v| {
                if *v < 0.0 {
                    *v *= LEAKY_SLOPE
                }
            });
            inputs.push(z);
        }
        let logits = self.layers[last]
            .forward(inputs.last().expect("input"))
            .row(0)
            .iter()
            .copied()
            .collect();
        Trace { inputs, mask, logits }
    }

    /// Backpropagates `d_logits` (1 per column). Returns per-layer gradients
    /// and the gradient with respect to the undropped input.
    fn backward(
        &self,
        trace: &Trace,
        d_logits: &[f64],
        want_params: bool,
    ) -> (LayerGrads, DMatrix<f64>) {
        let mut delta = DMatrix::from_row_slice(1, d_logits.len(), d_logits);
        let mut grads = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[l];
            if want_params {
                let gw = &delta * input.transpose();
                let gb = delta.column_sum();
                grads.push((gw, gb));
            }
            let mut back = layer.w.transpose() * &delta;
            if l > 0 {
                // `input` is the LeakyReLU output; its sign matches the pre-activation.
                back.zip_apply(input, |g, a| {
                    if a < 0.0 {
                        *g *= LEAKY_SLOPE
                    }
                });
            }
            delta = back;
        }
        grads.reverse();
        if let Some(mask) = &trace.mask {
            delta.component_mul_assign(mask);
        }
        (grads, delta)
    }

    fn sgd(&mut self, grads: &[(DMatrix<f64>, DVector<f64>)], lr: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads) {
            layer.w -= gw * lr;
            layer.b -= gb * lr;
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy on logits, and its gradient per logit.
fn bce(logits: &[f64], targets: &[f64]) -> (f64, Vec<f64>) {
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(targets)
        .map(|(&z, &y)| {
            loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
            (sigmoid(z) - y) / n
        })
        .collect();
    (loss / n, grad)
}

/// The two-player game between the mapping `W` and the discriminator.
pub struct AdversarialTrainer {
    config: AdversarialConfig,
    src: DMatrix<f64>,
    tgt: DMatrix<f64>,
    w: DMatrix<f64>,
    disc: Discriminator,
    rng: ChaCha8Rng,
    map_lr: f64,
}

impl AdversarialTrainer {
    /// Both embeddings are unit-normalized; only their first `vocab_cap` words are sampled.
    pub fn new(src: &EmbeddingMatrix, tgt: &EmbeddingMatrix, config: &AdversarialConfig) -> Result<Self> {
        config.validate()?;
        if src.dim() != tgt.dim() {
            return Err(Error::argument("source and target dimensions differ"));
        }
        if src.is_empty() || tgt.is_empty() {
            return Err(Error::argument("embeddings must not be empty"));
        }
        let src = ensure_unit(src, "source");
        let tgt = ensure_unit(tgt, "target");
        let d = src.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let disc = Discriminator::new(&mut rng, d, config.disc_hidden, config.disc_layers, config.disc_dropout);
        Ok(AdversarialTrainer {
            config: config.clone(),
            src: src.vectors().columns(0, config.vocab_cap.min(src.len())).into_owned(),
            tgt: tgt.vectors().columns(0, config.vocab_cap.min(tgt.len())).into_owned(),
            w: DMatrix::identity(d, d),
            disc,
            rng,
            map_lr: config.map_lr,
        })
    }

    pub fn map_matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn set_map(&mut self, w: DMatrix<f64>) -> Result<()> {
        if w.shape() != self.w.shape() {
            return Err(Error::argument("map dimension differs from embeddings"));
        }
        self.w = w;
        Ok(())
    }

    fn sample(&mut self, pool: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(pool.nrows(), n);
        for c in 0..n {
            let i = self.rng.random_range(0..pool.ncols());
            out.set_column(c, &pool.column(i));
        }
        out
    }

    /// Mapped source batch (label "source") followed by a target batch.
    fn batch(&mut self) -> (DMatrix<f64>, DMatrix<f64>) {
        let bs = self.config.batch_size;
        let src = self.src.clone();
        let tgt = self.tgt.clone();
        let x = self.sample(&src, bs);
        let y = self.sample(&tgt, bs);
        (x, y)
    }

    fn joined(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
        let wx = &self.w * x;
        let mut both = DMatrix::zeros(wx.nrows(), wx.ncols() + y.ncols());
        both.columns_mut(0, wx.ncols()).copy_from(&wx);
        both.columns_mut(wx.ncols(), y.ncols()).copy_from(y);
        both
    }

    /// Smoothed labels: mapped sources are class 1, targets class 0.
    fn labels(&self, n_src: usize, n_tgt: usize, flipped: bool) -> Vec<f64> {
        let s = self.config.smoothing;
        let (hi, lo) = if flipped { (s, 1.0 - s) } else { (1.0 - s, s) };
        std::iter::repeat_n(hi, n_src).chain(std::iter::repeat_n(lo, n_tgt)).collect()
    }

    /// One discriminator SGD step; returns its loss.
    pub fn disc_step(&mut self) -> f64 {
        let (x, y) = self.batch();
        let input = self.joined(&x, &y);
        let labels = self.labels(x.ncols(), y.ncols(), false);
        let trace = self.disc.forward(&input, Some(&mut self.rng));
        let (loss, d_logits) = bce(&trace.logits, &labels);
        let (grads, _) = self.disc.backward(&trace, &d_logits, true);
        self.disc.sgd(&grads, self.config.disc_lr);
        loss
    }

    /// One mapper SGD step against flipped labels, followed by the
    /// orthogonalization update; returns the mapper loss.
    pub fn map_step(&mut self) -> f64 {
        let (x, y) = self.batch();
        let input = self.joined(&x, &y);
        let labels = self.labels(x.ncols(), y.ncols(), true);
        let trace = self.disc.forward::<ChaCha8Rng>(&input, None);
        let (loss, d_logits) = bce(&trace.logits, &labels);
        let (_, d_input) = self.disc.backward(&trace, &d_logits, false);
        let grad_w = d_input.columns(0, x.ncols()) * x.transpose();
        self.w -= grad_w * self.map_lr;
        self.w = orthogonalize_step(&self.w, self.config.ortho_beta);
        loss
    }

    /// Fraction of `n` fresh mapped-source and `n` fresh target samples the
    /// discriminator (in eval mode) classifies correctly.
    pub fn discriminator_accuracy(&mut self, n: usize) -> f64 {
        let src = self.src.clone();
        let tgt = self.tgt.clone();
        let x = self.sample(&src, n);
        let y = self.sample(&tgt, n);
        let input = self.joined(&x, &y);
        let trace = self.disc.forward::<ChaCha8Rng>(&input, None);
        let correct = trace
            .logits
            .iter()
            .enumerate()
            .filter(|&(i, &z)| (z > 0.0) == (i < n))
            .count();
        correct as f64 / (2 * n) as f64
    }

    fn decay_lr(&mut self, shrink: bool) {
        let mut lr = self.map_lr * self.config.lr_decay;
        if shrink {
            lr *= self.config.lr_shrink;
        }
        self.map_lr = lr.max(self.config.min_lr);
    }
}

/// Mean CSLS of mutual nearest neighbours for the map `w` on unit embeddings.
fn proxy(w: &DMatrix<f64>, src: &DMatrix<f64>, tgt: &DMatrix<f64>, k: usize, max_rank: usize) -> f64 {
    let mut mapped = w * src;
    unit_columns(&mut mapped);
    let pairs = mutual_pairs(&mapped, tgt, k, max_rank);
    if pairs.is_empty() {
        f64::NEG_INFINITY
    } else {
        pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64
    }
}

/// Learns an orthogonal map without any dictionary.
///
/// The mapper starts at the identity (and, with `both_orientations`, at a
/// reflection of it in a second run). After each epoch the unsupervised
/// proxy score is computed; the best epoch's map over all runs is
/// projected onto the orthogonal group and returned.
pub fn adversarial_align(
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    config: &AdversarialConfig,
) -> Result<LinearMap> {
    let d = src.dim();
    let mut starts = vec![DMatrix::identity(d, d)];
    if config.both_orientations {
        let mut flip = DMatrix::identity(d, d);
        flip[(d - 1, d - 1)] = -1.0;
        starts.push(flip);
    }
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for (run, start) in starts.into_iter().enumerate() {
        let (score, w) = train_from(src, tgt, config, start, run)?;
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, w));
        }
    }
    let (_, w) = best.expect("at least one run");
    LinearMap::new(orthogonal_factor(&w), true)
}

/// One adversarial run from `start`; returns the best proxy score and its map.
fn train_from(
    src: &EmbeddingMatrix,
    tgt: &EmbeddingMatrix,
    config: &AdversarialConfig,
    start: DMatrix<f64>,
    run: usize,
) -> Result<(f64, DMatrix<f64>)> {
    let mut trainer = AdversarialTrainer::new(src, tgt, config)?;
    trainer.set_map(start)?;
    let src = ensure_unit(src, "source");
    let tgt = ensure_unit(tgt, "target");
    let score = |w: &DMatrix<f64>| {
        proxy(w, src.vectors(), tgt.vectors(), config.proxy_k, config.proxy_max_rank)
    };
    let mut best = (score(trainer.map_matrix()), 0, trainer.map_matrix().clone());
    let iters = config.epoch_size.div_ceil(config.batch_size);
    for epoch in 1..=config.epochs {
        let mut disc_loss = 0.0;
        let mut map_loss = 0.0;
        for _ in 0..iters {
            for _ in 0..config.disc_steps {
                disc_loss += trainer.disc_step();
            }
            map_loss += trainer.map_step();
        }
        if !(disc_loss.is_finite() && map_loss.is_finite())
            || trainer.map_matrix().iter().any(|v| !v.is_finite())
        {
            return Err(Error::Numerical(format!("adversarial training diverged at epoch {epoch}")));
        }
        let s = score(trainer.map_matrix());
        log::info!(
            "adversarial run {run} epoch {epoch}: disc loss {:.4} map loss {:.4} proxy {s:.5}",
            disc_loss / (iters * config.disc_steps) as f64,
            map_loss / iters as f64
        );
        let improved = s > best.0;
        if improved {
            best = (s, epoch, trainer.map_matrix().clone());
        }
        trainer.decay_lr(!improved && epoch > 1);
    }
    log::info!("adversarial run {run}: keeping epoch {} (proxy {:.5})", best.1, best.0);
    Ok((best.0, best.2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use rand_distr::StandardNormal;

    fn cloud(d: usize, n: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::from_fn(d, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        unit_columns(&mut m);
        let (vocab, _) = Vocabulary::from_words((0..n).map(|i| format!("w{i}")));
        EmbeddingMatrix::new(vocab, m).unwrap()
    }

    fn small() -> AdversarialConfig {
        AdversarialConfig {
            disc_hidden: 32,
            disc_layers: 2,
            epochs: 2,
            epoch_size: 640,
            vocab_cap: 200,
            proxy_max_rank: 200,
            ..Default::default()
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut disc = Discriminator::new(&mut rng, 3, 4, 2, 0.0);
        let x = DMatrix::from_fn(3, 5, |i, j| ((i * 5 + j) as f64 * 0.7).sin());
        let y = [0.8, 0.2, 0.8, 0.2, 0.8];
        let trace = disc.forward::<ChaCha8Rng>(&x, None);
        let (_, dl) = bce(&trace.logits, &y);
        let (grads, dx) = disc.backward(&trace, &dl, true);
        let loss_at = |d: &Discriminator, x: &DMatrix<f64>| bce(&d.forward::<ChaCha8Rng>(x, None).logits, &y).0;
        let h = 1e-6;
        for (r, c) in [(0, 0), (2, 1), (3, 2)] {
            let orig = disc.layers[0].w[(r, c)];
            disc.layers[0].w[(r, c)] = orig + h;
            let up = loss_at(&disc, &x);
            disc.layers[0].w[(r, c)] = orig - h;
            let down = loss_at(&disc, &x);
            disc.layers[0].w[(r, c)] = orig;
            assert!(((up - down) / (2.0 * h) - grads[0].0[(r, c)]).abs() < 1e-7);
        }
        for (r, c) in [(0, 0), (1, 3), (2, 4)] {
            let mut xp = x.clone();
            xp[(r, c)] += h;
            let mut xm = x.clone();
            xm[(r, c)] -= h;
            let fd = (loss_at(&disc, &xp) - loss_at(&disc, &xm)) / (2.0 * h);
            assert!((fd - dx[(r, c)]).abs() < 1e-7);
        }
    }

    #[test]
    fn bce_is_stable_for_large_logits() {
        let (loss, g) = bce(&[800.0, -800.0], &[1.0, 0.0]);
        assert!(loss.is_finite() && loss < 1e-12);
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn discriminator_learns_separable_clouds() {
        // Target is the source shifted along one axis: easy to tell apart.
        let src = cloud(4, 300, 1);
        let mut shifted = src.vectors().clone();
        for mut c in shifted.column_iter_mut() {
            c[0] = c[0].abs() + 0.5;
        }
        unit_columns(&mut shifted);
        let tgt = EmbeddingMatrix::new(src.vocab().clone(), shifted).unwrap();
        let mut src_only = src.vectors().clone();
        for mut c in src_only.column_iter_mut() {
            c[0] = -c[0].abs() - 0.5;
        }
        unit_columns(&mut src_only);
        let src = EmbeddingMatrix::new(src.vocab().clone(), src_only).unwrap();
        let mut t = AdversarialTrainer::new(&src, &tgt, &small()).unwrap();
        for _ in 0..400 {
            t.disc_step();
        }
        assert!(t.discriminator_accuracy(500) > 0.9);
    }

    #[test]
    fn output_is_orthogonal() {
        let e = cloud(5, 200, 2);
        let w = adversarial_align(&e, &e, &small()).unwrap();
        assert!(w.is_orthogonal());
        assert!(w.orthogonality_error() <= 1e-6);
    }

    #[test]
    fn deterministic_per_seed() {
        let e = cloud(5, 200, 4);
        let a = adversarial_align(&e, &e, &small()).unwrap();
        let b = adversarial_align(&e, &e, &small()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_config_rejected() {
        let e = cloud(3, 10, 5);
        let cfg = AdversarialConfig { smoothing: 0.5, ..small() };
        assert!(matches!(adversarial_align(&e, &e, &cfg), Err(Error::Argument(_))));
    }
}

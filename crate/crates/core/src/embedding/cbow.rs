//! Continuous bag-of-words training with negative sampling.
//!
//! The update rule follows the reference word2vec implementation: the
//! hidden vector is the mean of the context vectors, every context word
//! receives the full accumulated error, and the learning rate decays
//! linearly with the number of processed tokens. Work is cut into batches
//! of roughly `batch_size` tokens; the learning rate is held constant
//! within a batch and each batch draws from its own seeded generator.
//!
//! With `threads > 1` batches are processed concurrently with lock-free
//! relaxed updates to the shared weights, which gives up bit-determinism.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::init::{init_from_pretrained, random_vector};
use super::EmbeddingMatrix;
use crate::corpus::{build_vocabulary, Sentence, Vocabulary};
use crate::error::{Error, Result};

const MIN_ALPHA_FRACTION: f64 = 1e-4;
const PROBE_TOKENS: usize = 2000;

#[derive(Clone, Debug, PartialEq)]
pub struct CbowConfig {
    pub dim: usize,
    pub epochs: usize,
    pub negatives: usize,
    pub window: usize,
    /// Tokens per work batch; the learning rate is updated between batches.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub min_count: u64,
    pub seed: u64,
    /// Frequent-word subsampling threshold; `None` disables subsampling.
    pub sample: Option<f64>,
    /// Keep rows copied from the warm-start embedding fixed.
    pub freeze_init: bool,
    pub threads: usize,
}

impl Default for CbowConfig {
    fn default() -> Self {
        CbowConfig {
            dim: 300,
            epochs: 5,
            negatives: 8,
            window: 5,
            batch_size: 3000,
            learning_rate: 0.025,
            min_count: 1,
            seed: 1,
            sample: None,
            freeze_init: false,
            threads: 1,
        }
    }
}

impl CbowConfig {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("negatives", self.negatives),
            ("window", self.window),
            ("batch_size", self.batch_size),
            ("threads", self.threads),
        ];
        for (name, v) in positive {
            if v < 1 {
                return Err(Error::argument(format!("{name} must be at least 1")));
            }
        }
        if self.min_count < 1 {
            return Err(Error::argument("min_count must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::argument("learning_rate must be positive"));
        }
        if let Some(s) = self.sample {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::argument("sample threshold must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CbowOutput {
    /// Input (context) vectors, one row per vocabulary word.
    pub embedding: EmbeddingMatrix,
    /// Mean negative-sampling loss over the tokens of each training epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss on a fixed probe batch before training and after every epoch.
    pub probe_losses: Vec<f64>,
    /// Warm-start vocabulary coverage, when an initial embedding was given.
    pub coverage: Option<f64>,
}

/// Shared parameters updated with relaxed atomic loads and stores. With a
/// single worker this is plain sequential SGD.
struct Weights(Vec<AtomicU64>);

impl Weights {
    fn from_values(v: impl IntoIterator<Item = f64>) -> Self {
        Weights(v.into_iter().map(|x| AtomicU64::new(x.to_bits())).collect())
    }

    #[inline]
    fn get(&self, i: usize) -> f64 {
        f64::from_bits(self.0[i].load(Ordering::Relaxed))
    }

    #[inline]
    fn set(&self, i: usize, v: f64) {
        self.0[i].store(v.to_bits(), Ordering::Relaxed)
    }

    fn into_values(self) -> Vec<f64> {
        self.0.into_iter().map(|a| f64::from_bits(a.into_inner())).collect()
    }
}

/// Draws word indices from counts^0.75.
struct UnigramSampler {
    cumulative: Vec<f64>,
}

impl UnigramSampler {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        UnigramSampler { cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Model<'a> {
    syn0: &'a Weights,
    syn1: &'a Weights,
    frozen: &'a [bool],
    dim: usize,
    negatives: usize,
    sampler: &'a UnigramSampler,
}

impl Model<'_> {
    fn mean_context(&self, context: &[usize], h: &mut [f64]) {
        h.iter_mut().for_each(|x| *x = 0.0);
        for &c in context {
            let base = c * self.dim;
            for (k, hk) in h.iter_mut().enumerate() {
                *hk += self.syn0.get(base + k);
            }
        }
        let inv = 1.0 / context.len() as f64;
        h.iter_mut().for_each(|x| *x *= inv);
    }

    fn dot_out(&self, h: &[f64], word: usize) -> f64 {
        let base = word * self.dim;
        h.iter()
            .enumerate()
            .map(|(k, hk)| hk * self.syn1.get(base + k))
            .sum()
    }

    /// One SGD step for `target` given `context`; returns the loss before the step.
    fn step<R: Rng>(
        &self,
        target: usize,
        context: &[usize],
        alpha: f64,
        rng: &mut R,
        h: &mut [f64],
        err: &mut [f64],
    ) -> f64 {
        self.mean_context(context, h);
        err.iter_mut().for_each(|x| *x = 0.0);
        let mut loss = 0.0;
        for n in 0..=self.negatives {
            let (word, label) = if n == 0 {
                (target, 1.0)
            } else {
                let w = self.sampler.sample(rng);
                if w == target {
                    continue;
                }
                (w, 0.0)
            };
            let f = self.dot_out(h, word);
            loss -= if label > 0.0 { log_sigmoid(f) } else { log_sigmoid(-f) };
            let g = (label - sigmoid(f)) * alpha;
            let base = word * self.dim;
            for k in 0..self.dim {
                let w1 = self.syn1.get(base + k);
                err[k] += g * w1;
                self.syn1.set(base + k, w1 + g * h[k]);
            }
        }
        for &c in context {
            if self.frozen[c] {
                continue;
            }
            let base = c * self.dim;
            for (k, e) in err.iter().enumerate() {
                self.syn0.set(base + k, self.syn0.get(base + k) + e);
            }
        }
        loss
    }

    /// Loss for fixed (target, context, negatives) without updating.
    fn loss(&self, target: usize, context: &[usize], negs: &[usize], h: &mut [f64]) -> f64 {
        self.mean_context(context, h);
        let mut loss = -log_sigmoid(self.dot_out(h, target));
        for &w in negs {
            loss -= log_sigmoid(-self.dot_out(h, w));
        }
        loss
    }
}

fn gather_context(sentence: &[usize], pos: usize, reach: usize, out: &mut Vec<usize>) {
    out.clear();
    let lo = pos.saturating_sub(reach);
    let hi = (pos + reach).min(sentence.len() - 1);
    out.extend((lo..=hi).filter(|&j| j != pos).map(|j| sentence[j]));
}

fn batch_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    // splitmix64 over the (seed, epoch, batch) triple
    let mut z = seed
        ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (batch as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A fixed evaluation batch: (target, context, negatives) triples.
struct Probe {
    items: Vec<(usize, Vec<usize>, Vec<usize>)>,
}

impl Probe {
    fn new(sentences: &[Vec<usize>], cfg: &CbowConfig, sampler: &UnigramSampler) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(batch_seed(cfg.seed, usize::MAX, usize::MAX));
        let total: usize = sentences.iter().map(Vec::len).sum();
        let stride = (total / PROBE_TOKENS).max(1);
        let mut items = Vec::new();
        let mut ctx = Vec::new();
        let mut t = 0usize;
        for s in sentences {
            for pos in 0..s.len() {
                t += 1;
                if !t.is_multiple_of(stride) || items.len() >= PROBE_TOKENS {
                    continue;
                }
                gather_context(s, pos, cfg.window, &mut ctx);
                if ctx.is_empty() {
                    continue;
                }
                let negs = (0..cfg.negatives)
                    .map(|_| sampler.sample(&mut rng))
                    .filter(|&w| w != s[pos])
                    .collect();
                items.push((s[pos], ctx.clone(), negs));
            }
        }
        Probe { items }
    }

    fn mean_loss(&self, model: &Model) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        let mut h = vec![0.0; model.dim];
        let sum: f64 = self
            .items
            .iter()
            .map(|(t, c, n)| model.loss(*t, c, n, &mut h))
            .sum();
        sum / self.items.len() as f64
    }
}

struct Batch {
    sentences: std::ops::Range<usize>,
    tokens: usize,
}

fn make_batches(sentences: &[Vec<usize>], batch_size: usize) -> Vec<Batch> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut tokens = 0;
    for (i, s) in sentences.iter().enumerate() {
        tokens += s.len();
        if tokens >= batch_size {
            out.push(Batch {
                sentences: start..i + 1,
                tokens,
            });
            start = i + 1;
            tokens = 0;
        }
    }
    if start < sentences.len() {
        out.push(Batch {
            sentences: start..sentences.len(),
            tokens,
        });
    }
    out
}

/// Trains CBOW vectors for the vocabulary of `corpus`.
///
/// When `init` is given, words it covers start from its vectors; the rest
/// start from small uniform noise.
pub fn train_cbow(
    corpus: &[Sentence],
    config: &CbowConfig,
    init: Option<&EmbeddingMatrix>,
) -> Result<CbowOutput> {
    config.validate()?;
    let vocab = build_vocabulary(corpus, config.min_count)?;
    if vocab.is_empty() {
        return Err(Error::Training("corpus has no words above min_count".into()));
    }
    let dim = config.dim;

    let (init_vectors, frozen, coverage) = match init {
        Some(pre) => {
            let ws = init_from_pretrained(pre, &vocab, dim, config.seed)?;
            log::info!("warm start covers {:.1}% of the vocabulary", ws.coverage * 100.0);
            let frozen = if config.freeze_init {
                ws.copied
            } else {
                vec![false; vocab.len()]
            };
            (ws.embedding.vectors().as_slice().to_vec(), frozen, Some(ws.coverage))
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut v = vec![0.0; vocab.len() * dim];
            for row in v.chunks_mut(dim) {
                random_vector(&mut rng, row);
            }
            (v, vec![false; vocab.len()], None)
        }
    };

    let encoded: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.tokens().iter().filter_map(|t| vocab.index_of(t)).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect();
    let total_tokens: usize = encoded.iter().map(Vec::len).sum();
    let sampler = UnigramSampler::new(vocab.counts());
    let batches = make_batches(&encoded, config.batch_size);
    let keep_prob = keep_probabilities(&vocab, config.sample);
    let probe = Probe::new(&encoded, config, &sampler);

    let syn0 = Weights::from_values(init_vectors);
    let syn1 = Weights::from_values(std::iter::repeat_n(0.0, vocab.len() * dim));
    let (epoch_losses, probe_losses) = train_loop(
        &syn0, &syn1, &frozen, config, &sampler, &encoded, &batches, &keep_prob, total_tokens, &probe,
    );
    let syn0 = syn0.into_values();

    if syn0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("CBOW weights diverged".into()));
    }
    let embedding =
        EmbeddingMatrix::from_parts_unchecked(vocab, DMatrix::from_vec(dim, syn0.len() / dim, syn0));
    Ok(CbowOutput {
        embedding,
        epoch_losses,
        probe_losses,
        coverage,
    })
}

fn keep_probabilities(vocab: &Vocabulary, sample: Option<f64>) -> Option<Vec<f64>> {
    let s = sample?;
    let total = vocab.total_count() as f64;
    Some(
        vocab
            .counts()
            .iter()
            .map(|&c| {
                let f = c as f64;
                let t = s * total;
                ((f / t).sqrt() + 1.0) * t / f
            })
            .collect(),
    )
}

#[allow(clippy::too_many_arguments)]
fn train_loop(
    syn0: &Weights,
    syn1: &Weights,
    frozen: &[bool],
    cfg: &CbowConfig,
    sampler: &UnigramSampler,
    sentences: &[Vec<usize>],
    batches: &[Batch],
    keep_prob: &Option<Vec<f64>>,
    total_tokens: usize,
    probe: &Probe,
) -> (Vec<f64>, Vec<f64>) {
    let model = Model {
        syn0,
        syn1,
        frozen,
        dim: cfg.dim,
        negatives: cfg.negatives,
        sampler,
    };
    let mut probe_losses = vec![probe.mean_loss(&model)];
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let schedule_len = (cfg.epochs * total_tokens) as f64 + 1.0;

    let mut offsets = Vec::with_capacity(batches.len());
    let mut acc = 0usize;
    for b in batches {
        offsets.push(acc);
        acc += b.tokens;
    }

    let run_batch = |epoch: usize, bi: usize| -> (f64, usize) {
        let batch = &batches[bi];
        let done = epoch * total_tokens + offsets[bi];
        let alpha = cfg.learning_rate * (1.0 - done as f64 / schedule_len).max(MIN_ALPHA_FRACTION);
        let mut rng = ChaCha8Rng::seed_from_u64(batch_seed(cfg.seed, epoch, bi));
        let mut h = vec![0.0; cfg.dim];
        let mut err = vec![0.0; cfg.dim];
        let mut ctx = Vec::with_capacity(2 * cfg.window);
        let mut kept = Vec::new();
        let (mut loss, mut n) = (0.0, 0usize);
        for s in &sentences[batch.sentences.clone()] {
            let s: &[usize] = match keep_prob {
                Some(p) => {
                    kept.clear();
                    kept.extend(s.iter().copied().filter(|&w| p[w] >= rng.random::<f64>()));
                    &kept
                }
                None => s,
            };
            for pos in 0..s.len() {
                let reach = rng.random_range(1..=cfg.window);
                gather_context(s, pos, reach, &mut ctx);
                if ctx.is_empty() {
                    continue;
                }
                loss += model.step(s[pos], &ctx, alpha, &mut rng, &mut h, &mut err);
                n += 1;
            }
        }
        (loss, n)
    };

    for epoch in 0..cfg.epochs {
        let results: Vec<(f64, usize)> = if cfg.threads == 1 {
            (0..batches.len()).map(|bi| run_batch(epoch, bi)).collect()
        } else {
            let next = AtomicUsize::new(0);
            let slots: Vec<std::sync::Mutex<(f64, usize)>> =
                (0..batches.len()).map(|_| Default::default()).collect();
            std::thread::scope(|scope| {
                for _ in 0..cfg.threads {
                    scope.spawn(|| loop {
                        let bi = next.fetch_add(1, Ordering::Relaxed);
                        if bi >= batches.len() {
                            break;
                        }
                        *slots[bi].lock().unwrap() = run_batch(epoch, bi);
                    });
                }
            });
            slots.into_iter().map(|m| m.into_inner().unwrap()).collect()
        };
        let (loss, n) = results
            .iter()
            .fold((0.0, 0usize), |(l, c), (bl, bn)| (l + bl, c + bn));
        let mean = if n == 0 { 0.0 } else { loss / n as f64 };
        log::debug!("epoch {epoch}: mean loss {mean:.5}");
        epoch_losses.push(mean);
        probe_losses.push(probe.mean_loss(&model));
    }
    (epoch_losses, probe_losses)
}

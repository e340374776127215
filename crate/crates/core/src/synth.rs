//! Synthetic embedding pairs related by a known orthogonal map.
//!
//! Target vectors are `normalize(Q x + ε)` for unit source vectors `x`, so
//! every alignment method can be scored against the ground truth `Q`.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::alignment::LinearMap;
use crate::corpus::{write_lexicon, BilingualLexicon, Vocabulary};
use crate::embedding::{unit_columns, write_embedding, EmbeddingMatrix};
use crate::error::{Error, Result};

pub const SOURCE_FILE: &str = "src.vec";
pub const TARGET_FILE: &str = "tgt.vec";
pub const LEXICON_FILE: &str = "lexicon.txt";
pub const TRUTH_FILE: &str = "truth.map";

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// When non-zero, source vectors come from a mixture of this many
    /// Gaussian clusters instead of a single isotropic Gaussian.
    pub clusters: usize,
    /// Within-cluster standard deviation relative to the (unit) centre norm.
    pub cluster_spread: f64,
    /// Coordinate `j` of the (pre-normalization) source Gaussian has standard
    /// deviation `exp(−spectrum_decay · j / d)`; 0 keeps it isotropic.
    pub spectrum_decay: f64,
    /// Norm of a common offset added to every source vector before normalization.
    pub mean_shift: f64,
}

impl SynthConfig {
    pub fn new(n: usize, d: usize, noise_sigma: f64, seed: u64) -> Self {
        SynthConfig {
            n,
            d,
            noise_sigma,
            seed,
            clusters: 0,
            cluster_spread: 0.5,
            spectrum_decay: 0.0,
            mean_shift: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthInstance {
    pub src: EmbeddingMatrix,
    pub tgt: EmbeddingMatrix,
    pub truth: LinearMap,
    /// Pairs `(s{i}, t{i})` for every `i`.
    pub lexicon: BilingualLexicon,
    pub noise_sigma: f64,
}

fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn named(prefix: &str, n: usize) -> Vocabulary {
    Vocabulary::from_words((0..n).map(|i| format!("{prefix}{i}"))).0
}

/// Isotropic instance: unit-normalized Gaussian sources.
pub fn generate(n: usize, d: usize, noise_sigma: f64, seed: u64) -> Result<SynthInstance> {
    generate_with(&SynthConfig::new(n, d, noise_sigma, seed))
}

pub fn generate_with(config: &SynthConfig) -> Result<SynthInstance> {
    let SynthConfig { n, d, noise_sigma, .. } = *config;
    if d == 0 || n < d {
        return Err(Error::argument(format!("need n ≥ d ≥ 1, got n={n} d={d}")));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::argument("noise sigma must be non-negative"));
    }
    for (name, v) in [
        ("cluster spread", config.cluster_spread),
        ("spectrum decay", config.spectrum_decay),
        ("mean shift", config.mean_shift),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::argument(format!("{name} must be non-negative")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let q = gaussian(&mut rng, d, d).qr().q();

    let mut x = if config.clusters == 0 {
        gaussian(&mut rng, d, n)
    } else {
        let mut centres = gaussian(&mut rng, d, config.clusters);
        unit_columns(&mut centres);
        let scale = config.cluster_spread / (d as f64).sqrt();
        let mut x = gaussian(&mut rng, d, n) * scale;
        for mut col in x.column_iter_mut() {
            let c = rng.random_range(0..config.clusters);
            col += centres.column(c);
        }
        x
    };
    if config.spectrum_decay > 0.0 {
        for (j, mut row) in x.row_iter_mut().enumerate() {
            row *= (-config.spectrum_decay * j as f64 / d as f64).exp();
        }
    }
    if config.mean_shift > 0.0 {
        let mut mu = gaussian(&mut rng, d, 1);
        mu *= config.mean_shift / mu.norm();
        for mut col in x.column_iter_mut() {
            col += &mu;
        }
    }
    unit_columns(&mut x);

    let mut y = &q * &x;
    if noise_sigma > 0.0 {
        y += gaussian(&mut rng, d, n) * noise_sigma;
    }
    unit_columns(&mut y);

    let lexicon = BilingualLexicon::from_pairs((0..n).map(|i| (format!("s{i}"), format!("t{i}"))));
    Ok(SynthInstance {
        src: EmbeddingMatrix::new(named("s", n), x)?,
        tgt: EmbeddingMatrix::new(named("t", n), y)?,
        truth: LinearMap::new(q, true)?,
        lexicon,
        noise_sigma,
    })
}

impl SynthInstance {
    /// Disjoint random train and test subsets of the full lexicon.
    pub fn train_test(&self, n_train: usize, n_test: usize, seed: u64) -> Result<(BilingualLexicon, BilingualLexicon)> {
        let n = self.lexicon.len();
        if n_train == 0 || n_test == 0 || n_train + n_test > n {
            return Err(Error::argument(format!(
                "cannot take {n_train} train and {n_test} test pairs from {n}"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pick = |ids: &[usize]| {
            BilingualLexicon::from_pairs(ids.iter().map(|&i| self.lexicon.pairs()[i].clone()))
        };
        Ok((pick(&idx[..n_train]), pick(&idx[n_train..n_train + n_test])))
    }

    /// Writes the source and target embeddings, the full lexicon and the truth map into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_embedding(&self.src, BufWriter::new(File::create(dir.join(SOURCE_FILE))?))?;
        write_embedding(&self.tgt, BufWriter::new(File::create(dir.join(TARGET_FILE))?))?;
        write_lexicon(&self.lexicon, BufWriter::new(File::create(dir.join(LEXICON_FILE))?))?;
        self.truth.write(BufWriter::new(File::create(dir.join(TRUTH_FILE))?))?;
        Ok(())
    }
}

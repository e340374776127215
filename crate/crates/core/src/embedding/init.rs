use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::EmbeddingMatrix;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// Output of [`init_from_pretrained`].
#[derive(Clone, Debug)]
pub struct WarmStart {
    pub embedding: EmbeddingMatrix,
    /// `copied[i]` is true when word `i` took its vector from the pretrained embedding.
    pub copied: Vec<bool>,
    /// Fraction of target words found in the pretrained vocabulary.
    pub coverage: f64,
}

/// Draws a word2vec-style random vector: i.i.d. uniform in ±0.5/dim.
pub(crate) fn random_vector<R: Rng>(rng: &mut R, out: &mut [f64]) {
    let half = 0.5 / out.len() as f64;
    for v in out {
        *v = rng.random_range(-half..=half);
    }
}

/// Lays out `target_vocab` with pretrained vectors where available and
/// small random vectors elsewhere.
pub fn init_from_pretrained(
    pretrained: &EmbeddingMatrix,
    target_vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<WarmStart> {
    if pretrained.dim() != dim {
        return Err(Error::argument(format!(
            "pretrained dimension {} does not match {dim}",
            pretrained.dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = target_vocab.len();
    let mut vectors = DMatrix::zeros(dim, n);
    let mut copied = vec![false; n];
    for (i, word) in target_vocab.words().iter().enumerate() {
        let col = &mut vectors.as_mut_slice()[i * dim..(i + 1) * dim];
        match pretrained.get(word) {
            Some(v) => {
                col.copy_from_slice(v);
                copied[i] = true;
            }
            None => random_vector(&mut rng, col),
        }
    }
    let hits = copied.iter().filter(|&&c| c).count();
    let coverage = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    Ok(WarmStart {
        embedding: EmbeddingMatrix::from_parts_unchecked(target_vocab.clone(), vectors),
        copied,
        coverage,
    })
}

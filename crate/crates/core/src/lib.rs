//! Cross-lingual word embeddings for low-resource language pairs.
//!
//! The pipeline: clean a monolingual corpus, train CBOW vectors
//! warm-started from a pretrained embedding of a related language, learn a
//! linear map into the other language's space (supervised Procrustes,
//! adversarial training with refinement, or the relaxed CSLS retrieval
//! criterion), and score word-translation retrieval against a dictionary.

pub mod alignment;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod retrieval;
pub mod synth;

pub use alignment::LinearMap;
pub use corpus::{BilingualLexicon, CorpusStats, Sentence, Vocabulary};
pub use embedding::{EmbeddingMatrix, NormScheme};
pub use error::{Error, Result};
pub use retrieval::{Method, RetrievalReport};

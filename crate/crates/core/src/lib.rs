//! Static word embeddings: corpus handling, negative-sampling and GloVe
//! trainers, distillation from contextual vectors, evaluation and I/O.

pub mod corpus;
pub mod distill;
pub mod embio;
pub mod error;
pub mod eval;
pub mod glove;
mod math;
pub mod sgns;

pub use corpus::{NegativeSamplingTable, Sentence, Vocabulary};
pub use embio::WordEmbeddings;
pub use error::{Error, Result};

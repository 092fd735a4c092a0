//! Back-end classifiers, feature pipelines and score fusion for dialect
//! identification from utterance embeddings and ASR transcripts.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod gan;
pub mod gb;
pub mod lda;
pub mod neural;
pub mod rng;
mod stats;
pub mod svm;
pub mod text;
pub mod ubnf;

pub use error::{AdiError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Data model, candidate construction, retrieval metrics and corpus
//! analyses for image-grounded visual dialog benchmarks.

pub mod analysis;
pub mod candidates;
pub mod dialog;
pub mod embeddings;
pub mod metrics;
pub mod rng;
pub mod synth;
pub mod text;

pub use dialog::{parse_dataset, split_dataset, write_dataset, DatasetError, Dialog, Format, QaRound};
pub use text::{build_vocabulary, preprocess_text, TokenSeq, Vocabulary, UNK_TOKEN};

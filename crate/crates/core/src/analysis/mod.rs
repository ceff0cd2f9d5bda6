//! Corpus statistics and structure experiments over dialog datasets.

pub mod lm;
pub mod prefix;
pub mod shuffle;
pub mod stats;
pub mod topics;

pub use lm::{perplexity, perplexity_of, train_lm, LmConfig, LmExample, NgramLm, Smoothing};
pub use prefix::{ngram_prefix_tree, prefix_tree_from_sequences, PrefixNode, Side};
pub use shuffle::{dialog_examples, lm_corpus, shuffle_classification, ShuffleReport};
pub use stats::{coverage_fractions, dataset_stats, StatsReport};
pub use topics::{load_annotations, topic_continuity, topic_transition_probability, TopicAnnotation};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("no input to analyze")]
    EmptyInput,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed input: {0}")]
    Malformed(String),
}

/// Mean and sample standard deviation (n - 1); sd is 0 for fewer than two values.
pub fn mean_sd(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let values: Vec<f64> = values.into_iter().collect();
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sd_small_cases() {
        assert_eq!(mean_sd([]), (0.0, 0.0));
        assert_eq!(mean_sd([3.0]), (3.0, 0.0));
        let (m, s) = mean_sd([1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}

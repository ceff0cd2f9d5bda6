//! Topic continuity statistics over per-round topic annotations.

use std::collections::HashSet;
use std::io::Read;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_sd, AnalysisError};
use crate::dialog::ROUNDS_PER_DIALOG;
use crate::rng::rng_from_parts;

pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_BOOTSTRAP: usize = 500;
pub const DEFAULT_TRANSITION_PERMUTATIONS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicAnnotation {
    pub image_id: String,
    pub topics: Vec<String>,
}

/// Reads `[{"image_id": str, "topics": [str; 10]}, ...]`.
pub fn load_annotations<R: Read>(reader: R) -> Result<Vec<TopicAnnotation>, AnalysisError> {
    let anns: Vec<TopicAnnotation> =
        serde_json::from_reader(reader).map_err(|e| AnalysisError::Malformed(e.to_string()))?;
    for a in &anns {
        if a.topics.len() != ROUNDS_PER_DIALOG {
            return Err(AnalysisError::Malformed(format!(
                "annotation {:?} has {} topics, expected {ROUNDS_PER_DIALOG}",
                a.image_id,
                a.topics.len()
            )));
        }
    }
    Ok(anns)
}

fn distinct<S: AsRef<str>>(topics: &[S]) -> usize {
    topics.iter().map(AsRef::as_ref).collect::<HashSet<&str>>().len()
}

/// Mean number of distinct topics over all length-`window` sliding windows.
fn windowed_distinct(topics: &[String], window: usize) -> f64 {
    let windows: Vec<usize> = topics.windows(window).map(distinct).collect();
    windows.iter().sum::<usize>() as f64 / windows.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopicContinuity {
    pub dialogs: usize,
    pub mean_topics: f64,
    pub mean_topics_sd: f64,
    pub window: usize,
    pub windowed_mean: f64,
    pub windowed_sd: f64,
    pub bootstrap: usize,
    pub batch: usize,
}

/// Distinct topics per dialog and per sliding window. Means are over the
/// full set; the `sd` fields are the spread of the mean over `bootstrap`
/// resamples of `batch` dialogs drawn with replacement.
pub fn topic_continuity(
    annotations: &[TopicAnnotation],
    window: usize,
    bootstrap: usize,
    batch: Option<usize>,
    seed: u64,
) -> Result<TopicContinuity, AnalysisError> {
    if annotations.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    if window == 0 || window > ROUNDS_PER_DIALOG {
        return Err(AnalysisError::InvalidParameter(format!(
            "window must be in 1..={ROUNDS_PER_DIALOG}, got {window}"
        )));
    }
    let per_dialog: Vec<(f64, f64)> =
        annotations.iter().map(|a| (distinct(&a.topics) as f64, windowed_distinct(&a.topics, window))).collect();
    let n = per_dialog.len();
    let batch = batch.unwrap_or(n).max(1);
    let mean_topics = per_dialog.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let windowed_mean = per_dialog.iter().map(|p| p.1).sum::<f64>() / n as f64;

    let resamples: Vec<(f64, f64)> = (0..bootstrap as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from_parts(seed, &[&"topic-bootstrap", &b]);
            let (mut s0, mut s1) = (0.0, 0.0);
            for _ in 0..batch {
                let p = per_dialog[rng.gen_range(0..n)];
                s0 += p.0;
                s1 += p.1;
            }
            (s0 / batch as f64, s1 / batch as f64)
        })
        .collect();
    let (_, mean_topics_sd) = mean_sd(resamples.iter().map(|r| r.0));
    let (_, windowed_sd) = mean_sd(resamples.iter().map(|r| r.1));
    Ok(TopicContinuity {
        dialogs: n,
        mean_topics,
        mean_topics_sd,
        window,
        windowed_mean,
        windowed_sd,
        bootstrap,
        batch,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionStats {
    pub in_order: f64,
    pub permuted_mean: f64,
    pub permuted_sd: f64,
    pub permutations: usize,
}

fn transition_rate<S: AsRef<str>>(dialogs: impl Iterator<Item = Vec<S>>) -> f64 {
    let (mut changes, mut possible) = (0usize, 0usize);
    for topics in dialogs {
        changes += topics.windows(2).filter(|w| w[0].as_ref() != w[1].as_ref()).count();
        possible += topics.len().saturating_sub(1);
    }
    if possible == 0 {
        0.0
    } else {
        changes as f64 / possible as f64
    }
}

/// Fraction of consecutive round pairs whose topics differ, in order and
/// under `permutations` seeded shuffles of each dialog's rounds.
pub fn topic_transition_probability(
    annotations: &[TopicAnnotation],
    permutations: usize,
    seed: u64,
) -> Result<TransitionStats, AnalysisError> {
    if annotations.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    if permutations == 0 {
        return Err(AnalysisError::InvalidParameter("permutations must be at least 1".into()));
    }
    let in_order = transition_rate(annotations.iter().map(|a| a.topics.iter().collect::<Vec<_>>()));
    let rates: Vec<f64> = (0..permutations as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = rng_from_parts(seed, &[&"topic-permutation", &p]);
            transition_rate(annotations.iter().map(|a| {
                let mut t: Vec<&String> = a.topics.iter().collect();
                t.shuffle(&mut rng);
                t
            }))
        })
        .collect();
    let (permuted_mean, permuted_sd) = mean_sd(rates.iter().copied());
    Ok(TransitionStats { in_order, permuted_mean, permuted_sd, permutations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(topics: &[&str]) -> TopicAnnotation {
        TopicAnnotation { image_id: "x".into(), topics: topics.iter().map(|s| s.to_string()).collect() }
    }

    #[test]
    fn constant_topic() {
        let a = vec![ann(&["t"; 10]); 4];
        let c = topic_continuity(&a, 3, 50, None, 1).unwrap();
        assert_eq!((c.mean_topics, c.windowed_mean), (1.0, 1.0));
        assert_eq!(c.mean_topics_sd, 0.0);
        let t = topic_transition_probability(&a, 20, 1).unwrap();
        assert_eq!((t.in_order, t.permuted_mean, t.permuted_sd), (0.0, 0.0, 0.0));
    }

    #[test]
    fn all_distinct() {
        let topics: Vec<String> = (0..10).map(|i| format!("t{i}")).collect();
        let refs: Vec<&str> = topics.iter().map(String::as_str).collect();
        let a = vec![ann(&refs); 3];
        let c = topic_continuity(&a, 3, 50, None, 1).unwrap();
        assert_eq!((c.mean_topics, c.windowed_mean), (10.0, 3.0));
        let t = topic_transition_probability(&a, 20, 1).unwrap();
        assert_eq!((t.in_order, t.permuted_mean), (1.0, 1.0));
    }

    #[test]
    fn hand_counted_mixed() {
        // a a b b b c a a a a: 3 topics, 3 changes out of 9.
        let a = vec![ann(&["a", "a", "b", "b", "b", "c", "a", "a", "a", "a"])];
        let c = topic_continuity(&a, 3, 10, None, 1).unwrap();
        assert_eq!(c.mean_topics, 3.0);
        // windows: aab abb bbb bbc bca caa aaa aaa -> 2 2 1 2 3 2 1 1 = 14/8
        assert_eq!(c.windowed_mean, 14.0 / 8.0);
        let t = topic_transition_probability(&a, 10, 1).unwrap();
        assert!((t.in_order - 3.0 / 9.0).abs() < 1e-15);
        assert!(t.permuted_mean >= t.in_order);
    }

    #[test]
    fn errors() {
        assert!(matches!(topic_continuity(&[], 3, 1, None, 0), Err(AnalysisError::EmptyInput)));
        assert!(topic_continuity(&[ann(&["a"; 10])], 11, 1, None, 0).is_err());
        assert!(topic_transition_probability(&[ann(&["a"; 10])], 0, 0).is_err());
        assert!(load_annotations(r#"[{"image_id":"x","topics":["a"]}]"#.as_bytes()).is_err());
    }
}

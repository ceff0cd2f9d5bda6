//! Original-versus-shuffled round order classification by perplexity.
//!
//! Each question is predicted from the previous round's question and
//! answer (the caption stands in before round 1). Shuffling rounds breaks
//! that conditioning, so a model that captures round order should find the
//! shuffled dialog less likely.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lm::{canonical_sum, LmExample, NgramLm};
use super::{mean_sd, AnalysisError};
use crate::dialog::Dialog;
use crate::rng::rng_from_parts;
use crate::text::preprocess_text;

pub const DEFAULT_PERMUTATIONS: usize = 10;

/// Examples for a dialog whose rounds are visited in `order`.
pub fn dialog_examples(dialog: &Dialog, order: &[usize]) -> Vec<LmExample> {
    let mut context = preprocess_text(&dialog.caption).into_inner();
    let mut out = Vec::with_capacity(order.len());
    for &r in order {
        let round = &dialog.rounds[r];
        let question = preprocess_text(&round.question).into_inner();
        out.push(LmExample { context: std::mem::take(&mut context), target: question.clone() });
        context = question;
        context.extend(preprocess_text(&round.answer).into_inner());
    }
    out
}

/// Training examples for every dialog in its original order.
pub fn lm_corpus(dialogs: &[Dialog]) -> Vec<LmExample> {
    dialogs.iter().flat_map(|d| dialog_examples(d, &(0..d.rounds.len()).collect::<Vec<_>>())).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShuffleReport {
    pub dialogs: usize,
    pub permutations: usize,
    /// Corpus perplexity with rounds in their original order.
    pub ppl_original: f64,
    /// Corpus perplexity under each permutation draw, summarized.
    pub ppl_shuffled_mean: f64,
    pub ppl_shuffled_sd: f64,
    /// Fraction of (dialog, permutation) pairs where the shuffled dialog has
    /// strictly higher perplexity; ties count half.
    pub accuracy: f64,
    /// Spread of per-draw accuracy across permutation draws.
    pub accuracy_sd: f64,
    pub tie_policy: String,
}

struct DialogScores {
    /// (sum of log-probs, predicted symbol count)
    original: (f64, usize),
    shuffled: Vec<(f64, usize)>,
}

fn score(lm: &NgramLm, examples: &[LmExample]) -> (f64, usize) {
    let logs: Vec<f64> = examples.iter().flat_map(|e| lm.token_log_probs(e)).collect();
    let n = logs.len();
    (canonical_sum(logs), n)
}

fn ppl((log_sum, n): (f64, usize)) -> f64 {
    (-log_sum / n as f64).exp()
}

fn pair_outcome(original: f64, shuffled: f64) -> f64 {
    if shuffled > original {
        1.0
    } else if shuffled == original {
        0.5
    } else {
        0.0
    }
}

/// Runs `permutations` seeded round shuffles per dialog. Permutation `p` of
/// a dialog depends only on `(seed, image_id, p)`.
pub fn shuffle_classification(
    lm: &NgramLm,
    dialogs: &[Dialog],
    permutations: usize,
    seed: u64,
) -> Result<ShuffleReport, AnalysisError> {
    shuffle_with(lm, dialogs, permutations, |d, p| {
        let mut rng = rng_from_parts(seed, &[&"shuffle", &d.image_id, &(p as u64)]);
        let mut order: Vec<usize> = (0..d.rounds.len()).collect();
        order.shuffle(&mut rng);
        order
    })
}

/// Same experiment with caller-chosen round orders.
pub fn shuffle_with<F>(
    lm: &NgramLm,
    dialogs: &[Dialog],
    permutations: usize,
    order_for: F,
) -> Result<ShuffleReport, AnalysisError>
where
    F: Fn(&Dialog, usize) -> Vec<usize> + Sync,
{
    if dialogs.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    if permutations == 0 {
        return Err(AnalysisError::InvalidParameter("permutations must be at least 1".into()));
    }
    let scores: Vec<DialogScores> = dialogs
        .par_iter()
        .map(|d| {
            let identity: Vec<usize> = (0..d.rounds.len()).collect();
            DialogScores {
                original: score(lm, &dialog_examples(d, &identity)),
                shuffled: (0..permutations).map(|p| score(lm, &dialog_examples(d, &order_for(d, p)))).collect(),
            }
        })
        .collect();

    let corpus = |pick: &dyn Fn(&DialogScores) -> (f64, usize)| {
        let parts: Vec<(f64, usize)> = scores.iter().map(pick).collect();
        let n = parts.iter().map(|p| p.1).sum();
        ppl((canonical_sum(parts.iter().map(|p| p.0).collect()), n))
    };
    let ppl_original = corpus(&|s| s.original);
    let per_draw_ppl: Vec<f64> = (0..permutations).map(|p| corpus(&|s| s.shuffled[p])).collect();
    let per_draw_acc: Vec<f64> = (0..permutations)
        .map(|p| {
            let wins: f64 = scores.iter().map(|s| pair_outcome(ppl(s.original), ppl(s.shuffled[p]))).sum();
            wins / scores.len() as f64
        })
        .collect();
    let (ppl_shuffled_mean, ppl_shuffled_sd) = mean_sd(per_draw_ppl);
    let (accuracy, accuracy_sd) = mean_sd(per_draw_acc);
    Ok(ShuffleReport {
        dialogs: dialogs.len(),
        permutations,
        ppl_original,
        ppl_shuffled_mean,
        ppl_shuffled_sd,
        accuracy,
        accuracy_sd,
        tie_policy: "equal perplexity counts 0.5".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::lm::{train_lm, LmConfig, Smoothing};
    use crate::dialog::tests::sample_dialog;

    #[test]
    fn examples_chain_previous_round() {
        let d = sample_dialog("x");
        let ex = dialog_examples(&d, &[0, 1]);
        assert_eq!(ex[0].context, preprocess_text(&d.caption).into_inner());
        let mut ctx = preprocess_text(&d.rounds[0].question).into_inner();
        ctx.extend(preprocess_text(&d.rounds[0].answer).into_inner());
        assert_eq!(ex[1].context, ctx);
        assert_eq!(ex[1].target, preprocess_text(&d.rounds[1].question).into_inner());
    }

    #[test]
    fn identity_permutation_ties() {
        let dialogs = vec![sample_dialog("a"), sample_dialog("b")];
        let lm = train_lm(&lm_corpus(&dialogs), LmConfig::default()).unwrap();
        let r = shuffle_with(&lm, &dialogs, 3, |d, _| (0..d.rounds.len()).collect()).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.ppl_original, r.ppl_shuffled_mean);
    }

    #[test]
    fn unigram_is_order_blind() {
        let dialogs = vec![sample_dialog("a"), sample_dialog("b")];
        let cfg = LmConfig { order: 1, smoothing: Smoothing::AddK(0.5), min_count: 1 };
        let lm = train_lm(&lm_corpus(&dialogs), cfg).unwrap();
        let r = shuffle_classification(&lm, &dialogs, 20, 9).unwrap();
        assert_eq!(r.accuracy, 0.5);
    }

    #[test]
    fn rejects_empty() {
        let lm = train_lm(&[LmExample::default()], LmConfig::default()).unwrap();
        assert!(matches!(shuffle_classification(&lm, &[], 1, 0), Err(AnalysisError::EmptyInput)));
    }
}

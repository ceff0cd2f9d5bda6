//! Count-based n-gram language model used as the perplexity oracle.
//!
//! A training example is a conditioning context followed by a target
//! sequence; only target tokens and the closing end marker are predicted.
//! The symbol stream seen by the model is
//! `<s>^(n-1) context <sep> target </s>` (the separator is omitted when
//! the context is empty).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::text::{build_vocabulary, Vocabulary};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const SEP: &str = "<sep>";

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_ADD_K: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "k", rename_all = "snake_case")]
pub enum Smoothing {
    /// Maximum likelihood; unseen histories back off to shorter ones.
    None,
    /// `(c(h,w) + k) / (c(h) + k|V|)` at full order.
    AddK(f64),
    /// Add-k whose prior is the next-lower order instead of uniform:
    /// `(c(h,w) + k|V| P(w|h')) / (c(h) + k|V|)`, bottoming out in add-k
    /// unigrams.
    Interpolated(f64),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LmExample {
    pub context: Vec<String>,
    pub target: Vec<String>,
}

impl LmExample {
    pub fn plain(target: Vec<String>) -> Self {
        LmExample { context: Vec::new(), target }
    }
}

#[derive(Clone, Debug, Default)]
struct HistoryCounts {
    total: u64,
    next: HashMap<u32, u64>,
}

#[derive(Clone, Debug)]
pub struct NgramLm {
    order: usize,
    smoothing: Smoothing,
    vocab: Vocabulary,
    /// `counts[h]` holds histories of length `h`.
    counts: Vec<HashMap<Vec<u32>, HistoryCounts>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub order: usize,
    pub smoothing: Smoothing,
    /// Tokens rarer than this map to UNK.
    pub min_count: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { order: DEFAULT_ORDER, smoothing: Smoothing::Interpolated(DEFAULT_ADD_K), min_count: 1 }
    }
}

impl NgramLm {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Number of predictable symbols: vocabulary (with UNK) plus `</s>`.
    pub fn outcome_count(&self) -> usize {
        self.vocab.len() + 1
    }

    fn eos_id(&self) -> u32 {
        self.vocab.len() as u32
    }

    fn bos_id(&self) -> u32 {
        self.vocab.len() as u32 + 1
    }

    fn sep_id(&self) -> u32 {
        self.vocab.len() as u32 + 2
    }

    /// Symbol stream for an example and the index where predictions start.
    fn encode(&self, example: &LmExample) -> (Vec<u32>, usize) {
        let pad = self.order - 1;
        let mut ids = vec![self.bos_id(); pad];
        ids.extend(example.context.iter().map(|t| self.vocab.id(t)));
        if !example.context.is_empty() {
            ids.push(self.sep_id());
        }
        let start = ids.len();
        ids.extend(example.target.iter().map(|t| self.vocab.id(t)));
        ids.push(self.eos_id());
        (ids, start)
    }

    fn count(&self, history: &[u32], next: u32) -> (u64, u64) {
        match self.counts[history.len()].get(history) {
            Some(h) => (h.next.get(&next).copied().unwrap_or(0), h.total),
            None => (0, 0),
        }
    }

    /// `history` holds up to `order - 1` preceding symbol ids.
    fn prob_ids(&self, history: &[u32], next: u32) -> f64 {
        let h = &history[history.len().saturating_sub(self.order - 1)..];
        let v = self.outcome_count() as f64;
        match self.smoothing {
            Smoothing::None => {
                for len in (0..=h.len()).rev() {
                    let (c, total) = self.count(&h[h.len() - len..], next);
                    if total > 0 {
                        return c as f64 / total as f64;
                    }
                }
                1.0 / v
            }
            Smoothing::AddK(k) => {
                let (c, total) = self.count(h, next);
                (c as f64 + k) / (total as f64 + k * v)
            }
            Smoothing::Interpolated(k) => {
                let (c, total) = self.count(&[], next);
                let mut p = (c as f64 + k) / (total as f64 + k * v);
                for len in 1..=h.len() {
                    let (c, total) = self.count(&h[h.len() - len..], next);
                    p = (c as f64 + k * v * p) / (total as f64 + k * v);
                }
                p
            }
        }
    }

    /// P(`next` | `history`) for string tokens. `history` may contain the
    /// markers [`BOS`] and [`SEP`]; `next` may be [`EOS`].
    pub fn prob(&self, history: &[&str], next: &str) -> f64 {
        let hist: Vec<u32> = history.iter().map(|t| self.symbol_id(t)).collect();
        self.prob_ids(&hist, self.symbol_id(next))
    }

    fn symbol_id(&self, token: &str) -> u32 {
        match token {
            EOS => self.eos_id(),
            BOS => self.bos_id(),
            SEP => self.sep_id(),
            t => self.vocab.id(t),
        }
    }

    /// Full next-symbol distribution after `history`, indexed by vocabulary
    /// id with `</s>` last.
    pub fn next_distribution(&self, history: &[&str]) -> Vec<f64> {
        let hist: Vec<u32> = history.iter().map(|t| self.symbol_id(t)).collect();
        (0..self.outcome_count() as u32).map(|w| self.prob_ids(&hist, w)).collect()
    }

    /// Natural-log probability of each predicted symbol of `example`.
    pub fn token_log_probs(&self, example: &LmExample) -> Vec<f64> {
        let (ids, start) = self.encode(example);
        (start..ids.len()).map(|i| self.prob_ids(&ids[..i], ids[i]).ln()).collect()
    }

    /// Histories (as strings) seen during training, for sampling contexts.
    pub fn seen_histories(&self) -> Vec<Vec<String>> {
        let name = |id: u32| -> String {
            if id == self.bos_id() {
                BOS.into()
            } else if id == self.sep_id() {
                SEP.into()
            } else if id == self.eos_id() {
                EOS.into()
            } else {
                self.vocab.token(id).unwrap_or_default().to_string()
            }
        };
        let mut out: Vec<Vec<String>> =
            self.counts.iter().flat_map(|m| m.keys()).map(|h| h.iter().map(|&id| name(id)).collect()).collect();
        out.sort();
        out
    }
}

/// Counts every n-gram ending on a target symbol of every example.
pub fn train_lm(examples: &[LmExample], config: LmConfig) -> Result<NgramLm, AnalysisError> {
    if config.order == 0 {
        return Err(AnalysisError::InvalidParameter("order must be at least 1".into()));
    }
    if examples.is_empty() {
        return Err(AnalysisError::EmptyCorpus);
    }
    match config.smoothing {
        Smoothing::AddK(k) | Smoothing::Interpolated(k) if !(k > 0.0 && k.is_finite()) => {
            return Err(AnalysisError::InvalidParameter(format!("smoothing constant must be positive, got {k}")));
        }
        _ => {}
    }
    let corpus: Vec<Vec<String>> =
        examples.iter().map(|e| e.context.iter().chain(&e.target).cloned().collect()).collect();
    let vocab = match build_vocabulary(&corpus, config.min_count.max(1)) {
        Ok(v) => v,
        // Only end markers to predict: a vocabulary of UNK alone.
        Err(crate::text::VocabError::EmptyCorpus) => {
            build_vocabulary(&[vec![String::from("x")]], usize::MAX).expect("non-empty corpus")
        }
        Err(e) => return Err(AnalysisError::InvalidParameter(e.to_string())),
    };
    let mut lm =
        NgramLm { order: config.order, smoothing: config.smoothing, vocab, counts: vec![HashMap::new(); config.order] };
    for example in examples {
        let (ids, start) = lm.encode(example);
        for i in start..ids.len() {
            for len in 0..config.order {
                let h = lm.counts[len].entry(ids[i - len..i].to_vec()).or_default();
                h.total += 1;
                *h.next.entry(ids[i]).or_default() += 1;
            }
        }
    }
    Ok(lm)
}

/// Sums log-probabilities in sorted order so the result depends only on
/// the multiset of values, not on the order examples were scored in.
pub(crate) fn canonical_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.into_iter().sum()
}

/// `exp(-(1/T) Σ ln P)` over all predicted symbols of `examples`.
pub fn perplexity_of(lm: &NgramLm, examples: &[LmExample]) -> f64 {
    let logs: Vec<f64> = examples.iter().flat_map(|e| lm.token_log_probs(e)).collect();
    let t = logs.len();
    (-canonical_sum(logs) / t as f64).exp()
}

/// Perplexity of a single unconditioned token sequence.
pub fn perplexity(lm: &NgramLm, sequence: &[String]) -> f64 {
    perplexity_of(lm, &[LmExample::plain(sequence.to_vec())])
}

//! Retrieval metrics over candidate score matrices.
//!
//! Ranks use competition ranking: the ground truth's rank is one plus the
//! number of options scored strictly higher, so ties never hurt it.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::CandidateRecord;
use crate::dialog::{Dialog, ROUNDS_PER_DIALOG};

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];
pub const DEFAULT_DIALOG_K: usize = 5;
pub const TIE_POLICY: &str = "competition (ties resolved in favour of the ground truth)";

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("gt_index {gt_index} out of range for {len} scores")]
    IndexOutOfRange { gt_index: usize, len: usize },
    #[error("no questions to evaluate")]
    EmptyInput,
    #[error("dialog {dialog} has {found} ranks, expected {ROUNDS_PER_DIALOG}")]
    WrongRoundCount { dialog: String, found: usize },
    #[error("{image_id:?} round {round}: {found} scores for {expected} options")]
    LengthMismatch { image_id: String, round: u8, expected: usize, found: usize },
    #[error("{image_id:?} round {round} is not in the options manifest")]
    UnknownQuestion { image_id: String, round: u8 },
    #[error("{image_id:?} round {round}: non-finite score at position {position}")]
    NonFiniteScore { image_id: String, round: u8, position: usize },
    #[error("{image_id:?} round {round} appears more than once")]
    DuplicateQuestion { image_id: String, round: u8 },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `1 + |{j : scores[j] > scores[gt_index]}|`.
pub fn rank_of_gt(scores: &[f64], gt_index: usize) -> Result<usize, MetricsError> {
    let gt = *scores.get(gt_index).ok_or(MetricsError::IndexOutOfRange { gt_index, len: scores.len() })?;
    Ok(1 + scores.iter().filter(|&&s| s > gt).count())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredQuestion {
    pub image_id: String,
    pub round: u8,
    pub scores: Vec<f64>,
    pub gt_index: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreMatrix {
    pub entries: Vec<ScoredQuestion>,
}

impl ScoreMatrix {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ranks(&self) -> Result<Vec<usize>, MetricsError> {
        self.entries.par_iter().map(|e| rank_of_gt(&e.scores, e.gt_index)).collect()
    }
}

/// Option count and ground-truth position for each (image, round).
#[derive(Clone, Debug, Default)]
pub struct OptionsManifest {
    entries: HashMap<(String, u8), (usize, usize)>,
}

impl OptionsManifest {
    pub fn insert(&mut self, image_id: impl Into<String>, round: u8, option_count: usize, gt_index: usize) {
        self.entries.insert((image_id.into(), round), (option_count, gt_index));
    }

    pub fn from_records(records: &[CandidateRecord]) -> Self {
        let mut m = OptionsManifest::default();
        for r in records {
            m.insert(r.image_id.clone(), r.round, r.answer_options.len(), r.gt_index);
        }
        m
    }

    /// Manifest from the answer options embedded in a dataset file.
    pub fn from_dialogs(dialogs: &[Dialog]) -> Self {
        let mut m = OptionsManifest::default();
        for d in dialogs {
            for r in &d.rounds {
                if let Some(c) = &r.candidates {
                    m.insert(d.image_id.clone(), r.round_index, c.options.len(), c.gt_index);
                }
            }
        }
        m
    }

    pub fn get(&self, image_id: &str, round: u8) -> Option<(usize, usize)> {
        self.entries.get(&(image_id.to_string(), round)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    image_id: String,
    round: u8,
    scores: Vec<Option<f64>>,
}

/// Reads a score JSONL file and aligns it with the manifest.
/// `null` entries are treated as non-finite scores.
pub fn load_scores<R: BufRead>(reader: R, manifest: &OptionsManifest) -> Result<ScoreMatrix, MetricsError> {
    let mut seen = std::collections::HashSet::new();
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: ScoreLine =
            serde_json::from_str(&line).map_err(|e| MetricsError::Malformed { line: i + 1, message: e.to_string() })?;
        let (count, gt_index) = manifest
            .get(&raw.image_id, raw.round)
            .ok_or_else(|| MetricsError::UnknownQuestion { image_id: raw.image_id.clone(), round: raw.round })?;
        if raw.scores.len() != count {
            return Err(MetricsError::LengthMismatch {
                image_id: raw.image_id,
                round: raw.round,
                expected: count,
                found: raw.scores.len(),
            });
        }
        let mut scores = Vec::with_capacity(count);
        for (position, s) in raw.scores.iter().enumerate() {
            match s {
                Some(v) if v.is_finite() => scores.push(*v),
                _ => return Err(MetricsError::NonFiniteScore { image_id: raw.image_id, round: raw.round, position }),
            }
        }
        if !seen.insert((raw.image_id.clone(), raw.round)) {
            return Err(MetricsError::DuplicateQuestion { image_id: raw.image_id, round: raw.round });
        }
        entries.push(ScoredQuestion { image_id: raw.image_id, round: raw.round, scores, gt_index });
    }
    Ok(ScoreMatrix { entries })
}

pub fn write_scores<W: Write>(mut writer: W, matrix: &ScoreMatrix) -> std::io::Result<()> {
    for e in &matrix.entries {
        let line = ScoreLine {
            image_id: e.image_id.clone(),
            round: e.round,
            scores: e.scores.iter().copied().map(Some).collect(),
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Summary statistics over a set of ground-truth ranks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankStats {
    pub count: usize,
    pub mrr: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub mean_rank: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub count: usize,
    pub mrr: f64,
    pub recall_at: BTreeMap<usize, f64>,
    pub mean_rank: f64,
    pub per_round: BTreeMap<u8, RankStats>,
    pub tie_policy: String,
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0f64, 0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn rank_stats(ranks: &[usize], ks: &[usize]) -> RankStats {
    let n = ranks.len();
    let nf = n.max(1) as f64;
    let mrr = compensated_sum(ranks.iter().map(|&r| 1.0 / r as f64)) / nf;
    let mean_rank = ranks.iter().map(|&r| r as u128).sum::<u128>() as f64 / nf;
    let recall_at = ks.iter().map(|&k| (k, ranks.iter().filter(|&&r| r <= k).count() as f64 / nf)).collect();
    RankStats { count: n, mrr, recall_at, mean_rank }
}

/// MRR, recall@k and mean rank overall and per round.
pub fn evaluate(scores: &ScoreMatrix, ks: &[usize]) -> Result<RankReport, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let ranks = scores.ranks()?;
    let overall = rank_stats(&ranks, ks);
    let mut by_round: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (e, &r) in scores.entries.iter().zip(&ranks) {
        by_round.entry(e.round).or_default().push(r);
    }
    Ok(RankReport {
        count: overall.count,
        mrr: overall.mrr,
        recall_at: overall.recall_at,
        mean_rank: overall.mean_rank,
        per_round: by_round.into_iter().map(|(round, rs)| (round, rank_stats(&rs, ks))).collect(),
        tie_policy: TIE_POLICY.to_string(),
    })
}

impl RankReport {
    /// Plain-text table: MRR, R@1, R@5, R@10, Mean.
    pub fn to_table(&self) -> String {
        let r = |k: usize| self.recall_at.get(&k).map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v));
        let mut out = String::new();
        writeln!(out, "{:<8}{:>8}{:>8}{:>8}{:>8}{:>8}", "", "MRR", "R@1", "R@5", "R@10", "Mean").unwrap();
        writeln!(out, "{:<8}{:>8.4}{:>8}{:>8}{:>8}{:>8.2}", "all", self.mrr, r(1), r(5), r(10), self.mean_rank)
            .unwrap();
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogPoint {
    pub k: usize,
    pub rounds_correct_mean: f64,
    pub mean_first_failure_round: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogReport {
    pub k: usize,
    pub dialogs: usize,
    pub rounds_correct_mean: f64,
    /// Round of the first rank above k; 11 when no round fails.
    pub mean_first_failure_round: f64,
    pub curves: Vec<DialogPoint>,
}

fn dialog_point(ranks: &[[usize; ROUNDS_PER_DIALOG]], k: usize) -> DialogPoint {
    let n = ranks.len() as f64;
    let mut correct = 0usize;
    let mut first_fail = 0usize;
    for d in ranks {
        correct += d.iter().filter(|&&r| r <= k).count();
        first_fail += d.iter().position(|&r| r > k).map_or(ROUNDS_PER_DIALOG + 1, |p| p + 1);
    }
    DialogPoint { k, rounds_correct_mean: correct as f64 / n, mean_first_failure_round: first_fail as f64 / n }
}

/// Dialog-level success statistics at `k`, plus curves for `curve_ks`.
pub fn dialog_eval<V: AsRef<[usize]>>(
    per_dialog_ranks: &[V],
    k: usize,
    curve_ks: &[usize],
) -> Result<DialogReport, MetricsError> {
    if per_dialog_ranks.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut ranks = Vec::with_capacity(per_dialog_ranks.len());
    for (i, d) in per_dialog_ranks.iter().enumerate() {
        let d = d.as_ref();
        let arr: [usize; ROUNDS_PER_DIALOG] =
            d.try_into().map_err(|_| MetricsError::WrongRoundCount { dialog: format!("#{i}"), found: d.len() })?;
        ranks.push(arr);
    }
    let main = dialog_point(&ranks, k);
    Ok(DialogReport {
        k,
        dialogs: ranks.len(),
        rounds_correct_mean: main.rounds_correct_mean,
        mean_first_failure_round: main.mean_first_failure_round,
        curves: curve_ks.iter().map(|&k| dialog_point(&ranks, k)).collect(),
    })
}

/// Groups ranks by image id into round-ordered vectors. Every image must
/// have exactly rounds 1..=10.
pub fn ranks_by_dialog(scores: &ScoreMatrix) -> Result<Vec<(String, Vec<usize>)>, MetricsError> {
    let ranks = scores.ranks()?;
    let mut grouped: BTreeMap<&str, Vec<(u8, usize)>> = BTreeMap::new();
    for (e, r) in scores.entries.iter().zip(ranks) {
        grouped.entry(e.image_id.as_str()).or_default().push((e.round, r));
    }
    grouped
        .into_iter()
        .map(|(id, mut rs)| {
            rs.sort_unstable();
            let rounds: Vec<u8> = rs.iter().map(|x| x.0).collect();
            if rounds != (1..=ROUNDS_PER_DIALOG as u8).collect::<Vec<_>>() {
                return Err(MetricsError::WrongRoundCount { dialog: id.to_string(), found: rs.len() });
            }
            Ok((id.to_string(), rs.into_iter().map(|x| x.1).collect()))
        })
        .collect()
}

/// Largest option count in the matrix, for full dialog curves.
pub fn max_option_count(scores: &ScoreMatrix) -> usize {
    scores.entries.iter().map(|e| e.scores.len()).max().unwrap_or(0)
}

//! Corpus statistics: lengths, answer coverage, pronouns, question types and
//! binary question/answer rates.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::dialog::{Dialog, ROUNDS_PER_DIALOG};
use crate::text::{preprocess_text, TokenSeq};

pub const PRONOUNS: [&str; 10] = ["he", "she", "his", "her", "it", "their", "they", "this", "that", "those"];

/// First words that mark a question as binary (yes/no).
pub const BINARY_QUESTION_PREFIXES: [&str; 10] =
    ["do", "did", "have", "has", "is", "are", "was", "were", "can", "could"];

/// Sampled coverage points: every N up to this, then every 1000.
const COVERAGE_DENSE_UNTIL: usize = 1000;
const COVERAGE_STRIDE: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub count: u64,
    pub mean: f64,
    /// token count → occurrences
    pub histogram: BTreeMap<usize, u64>,
    pub per_round_mean: Vec<f64>,
    /// Keyed by the first token of the question in the same round.
    pub by_question_type_mean: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub top_n: usize,
    pub fraction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PronounRound {
    pub round: u8,
    pub question_rate: f64,
    pub answer_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PronounStats {
    pub question_rate: f64,
    pub answer_rate: f64,
    /// Dialogs with a pronoun in any question or answer (captions excluded).
    pub dialog_rate: f64,
    pub per_round: Vec<PronounRound>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionTypeStats {
    /// first word → count, overall
    pub overall: BTreeMap<String, u64>,
    /// first word → count, per round (index 0 is round 1)
    pub per_round: Vec<BTreeMap<String, u64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinaryStats {
    pub binary_questions: u64,
    pub binary_question_rate: f64,
    /// Answers to binary questions that are exactly "yes" or "no".
    pub exact_yes_no: u64,
    /// Answers to binary questions that begin with "yes"/"no" and continue.
    pub starts_with_yes_no: u64,
    pub yes: u64,
    pub no: u64,
    /// yes / (yes + no) over both categories.
    pub yes_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsMetadata {
    pub length_unit: String,
    pub answer_identity: String,
    pub pronouns: Vec<String>,
    pub binary_question_prefixes: Vec<String>,
    pub captions_in_pronoun_stats: bool,
}

impl Default for StatsMetadata {
    fn default() -> Self {
        StatsMetadata {
            length_unit: "tokens after preprocessing".into(),
            answer_identity: "raw answer string with surrounding whitespace trimmed".into(),
            pronouns: PRONOUNS.iter().map(|s| s.to_string()).collect(),
            binary_question_prefixes: BINARY_QUESTION_PREFIXES.iter().map(|s| s.to_string()).collect(),
            captions_in_pronoun_stats: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub dialogs: u64,
    pub questions: u64,
    pub question_length: LengthStats,
    pub answer_length: LengthStats,
    pub unique_answer_count: usize,
    pub coverage_curve: Vec<CoveragePoint>,
    pub pronoun: PronounStats,
    pub qtype: QuestionTypeStats,
    pub binary: BinaryStats,
    pub metadata: StatsMetadata,
}

#[derive(Default)]
struct LengthAcc {
    sum: u64,
    count: u64,
    histogram: HashMap<usize, u64>,
    per_round: [(u64, u64); ROUNDS_PER_DIALOG],
    by_type: HashMap<String, (u64, u64)>,
}

impl LengthAcc {
    fn add(&mut self, len: usize, round: usize, qtype: &str) {
        self.sum += len as u64;
        self.count += 1;
        *self.histogram.entry(len).or_default() += 1;
        self.per_round[round].0 += len as u64;
        self.per_round[round].1 += 1;
        let t = self.by_type.entry(qtype.to_string()).or_default();
        t.0 += len as u64;
        t.1 += 1;
    }

    fn merge(&mut self, other: LengthAcc) {
        self.sum += other.sum;
        self.count += other.count;
        for (k, v) in other.histogram {
            *self.histogram.entry(k).or_default() += v;
        }
        for (a, b) in self.per_round.iter_mut().zip(other.per_round) {
            a.0 += b.0;
            a.1 += b.1;
        }
        for (k, v) in other.by_type {
            let t = self.by_type.entry(k).or_default();
            t.0 += v.0;
            t.1 += v.1;
        }
    }

    fn finish(self) -> LengthStats {
        let ratio = |s: u64, c: u64| if c == 0 { 0.0 } else { s as f64 / c as f64 };
        LengthStats {
            count: self.count,
            mean: ratio(self.sum, self.count),
            histogram: self.histogram.into_iter().collect(),
            per_round_mean: self.per_round.iter().map(|&(s, c)| ratio(s, c)).collect(),
            by_question_type_mean: self.by_type.into_iter().map(|(k, (s, c))| (k, ratio(s, c))).collect(),
        }
    }
}

#[derive(Default)]
struct Acc {
    dialogs: u64,
    questions: u64,
    qlen: LengthAcc,
    alen: LengthAcc,
    answers: HashMap<String, u64>,
    pron_q: [u64; ROUNDS_PER_DIALOG],
    pron_a: [u64; ROUNDS_PER_DIALOG],
    per_round_questions: [u64; ROUNDS_PER_DIALOG],
    pron_dialogs: u64,
    qtype: Vec<HashMap<String, u64>>,
    binary_questions: u64,
    exact_yes_no: u64,
    starts_with_yes_no: u64,
    yes: u64,
    no: u64,
}

fn has_pronoun(tokens: &TokenSeq) -> bool {
    tokens.iter().any(|t| PRONOUNS.contains(&t.as_str()))
}

impl Acc {
    fn new() -> Self {
        Acc { qtype: vec![HashMap::new(); ROUNDS_PER_DIALOG], ..Default::default() }
    }

    fn add(&mut self, d: &Dialog) {
        self.dialogs += 1;
        let mut dialog_has_pronoun = false;
        for (r, round) in d.rounds.iter().enumerate().take(ROUNDS_PER_DIALOG) {
            let q = preprocess_text(&round.question);
            let a = preprocess_text(&round.answer);
            let qtype = q.first().map_or("", String::as_str);
            self.questions += 1;
            self.per_round_questions[r] += 1;
            self.qlen.add(q.len(), r, qtype);
            self.alen.add(a.len(), r, qtype);
            *self.answers.entry(round.answer.trim().to_string()).or_default() += 1;
            *self.qtype[r].entry(qtype.to_string()).or_default() += 1;

            let (qp, ap) = (has_pronoun(&q), has_pronoun(&a));
            self.pron_q[r] += qp as u64;
            self.pron_a[r] += ap as u64;
            dialog_has_pronoun |= qp || ap;

            if BINARY_QUESTION_PREFIXES.contains(&qtype) {
                self.binary_questions += 1;
                if let Some(first @ ("yes" | "no")) = a.first().map(String::as_str) {
                    if a.len() == 1 {
                        self.exact_yes_no += 1;
                    } else {
                        self.starts_with_yes_no += 1;
                    }
                    if first == "yes" {
                        self.yes += 1;
                    } else {
                        self.no += 1;
                    }
                }
            }
        }
        self.pron_dialogs += dialog_has_pronoun as u64;
    }
}

/// Computes every corpus statistic in one pass.
pub fn dataset_stats(dialogs: &[Dialog]) -> Result<StatsReport, AnalysisError> {
    if dialogs.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }
    let acc = dialogs
        .par_chunks(4096)
        .map(|chunk| {
            let mut acc = Acc::new();
            for d in chunk {
                acc.add(d);
            }
            acc
        })
        .reduce(Acc::new, merge_acc);
    Ok(finish(acc))
}

fn merge_acc(mut a: Acc, mut b: Acc) -> Acc {
    if a.answers.len() < b.answers.len() {
        std::mem::swap(&mut a.answers, &mut b.answers);
    }
    for (k, v) in b.answers.drain() {
        *a.answers.entry(k).or_default() += v;
    }
    a.dialogs += b.dialogs;
    a.questions += b.questions;
    a.qlen.merge(std::mem::take(&mut b.qlen));
    a.alen.merge(std::mem::take(&mut b.alen));
    for r in 0..ROUNDS_PER_DIALOG {
        a.pron_q[r] += b.pron_q[r];
        a.pron_a[r] += b.pron_a[r];
        a.per_round_questions[r] += b.per_round_questions[r];
        for (k, v) in b.qtype[r].drain() {
            *a.qtype[r].entry(k).or_default() += v;
        }
    }
    a.pron_dialogs += b.pron_dialogs;
    a.binary_questions += b.binary_questions;
    a.exact_yes_no += b.exact_yes_no;
    a.starts_with_yes_no += b.starts_with_yes_no;
    a.yes += b.yes;
    a.no += b.no;
    a
}

/// Cumulative fraction of all answers covered by the `N` most frequent
/// distinct answers, for every N in 1..=counts.len().
pub fn coverage_fractions(counts: &[u64]) -> Vec<f64> {
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let total: u64 = sorted.iter().sum();
    let mut cum = 0u64;
    sorted
        .into_iter()
        .map(|c| {
            cum += c;
            cum as f64 / total as f64
        })
        .collect()
}

fn sample_coverage(full: &[f64]) -> Vec<CoveragePoint> {
    let u = full.len();
    let mut points: Vec<usize> = (1..=u.min(COVERAGE_DENSE_UNTIL)).collect();
    let mut n = COVERAGE_DENSE_UNTIL + COVERAGE_STRIDE;
    while n < u {
        points.push(n);
        n += COVERAGE_STRIDE;
    }
    if points.last() != Some(&u) && u > 0 {
        points.push(u);
    }
    points.into_iter().map(|n| CoveragePoint { top_n: n, fraction: full[n - 1] }).collect()
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn finish(acc: Acc) -> StatsReport {
    let counts: Vec<u64> = acc.answers.values().copied().collect();
    let full = coverage_fractions(&counts);
    let total_q: u64 = acc.questions;
    let pronoun = PronounStats {
        question_rate: ratio(acc.pron_q.iter().sum(), total_q),
        answer_rate: ratio(acc.pron_a.iter().sum(), total_q),
        dialog_rate: ratio(acc.pron_dialogs, acc.dialogs),
        per_round: (0..ROUNDS_PER_DIALOG)
            .map(|r| PronounRound {
                round: (r + 1) as u8,
                question_rate: ratio(acc.pron_q[r], acc.per_round_questions[r]),
                answer_rate: ratio(acc.pron_a[r], acc.per_round_questions[r]),
            })
            .collect(),
    };
    let mut overall: BTreeMap<String, u64> = BTreeMap::new();
    for m in &acc.qtype {
        for (k, v) in m {
            *overall.entry(k.clone()).or_default() += v;
        }
    }
    StatsReport {
        dialogs: acc.dialogs,
        questions: acc.questions,
        question_length: acc.qlen.finish(),
        answer_length: acc.alen.finish(),
        unique_answer_count: counts.len(),
        coverage_curve: sample_coverage(&full),
        pronoun,
        qtype: QuestionTypeStats {
            overall,
            per_round: acc.qtype.into_iter().map(|m| m.into_iter().collect()).collect(),
        },
        binary: BinaryStats {
            binary_questions: acc.binary_questions,
            binary_question_rate: ratio(acc.binary_questions, total_q),
            exact_yes_no: acc.exact_yes_no,
            starts_with_yes_no: acc.starts_with_yes_no,
            yes: acc.yes,
            no: acc.no,
            yes_rate: ratio(acc.yes, acc.yes + acc.no),
        },
        metadata: StatsMetadata::default(),
    }
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv output is utf-8")
}

impl StatsReport {
    /// CSV tables for plotting, as (file name, contents).
    pub fn csv_tables(&self) -> Vec<(&'static str, String)> {
        let lengths = csv_string(
            &["round", "question_mean_tokens", "answer_mean_tokens"],
            (0..ROUNDS_PER_DIALOG).map(|r| {
                vec![
                    (r + 1).to_string(),
                    self.question_length.per_round_mean[r].to_string(),
                    self.answer_length.per_round_mean[r].to_string(),
                ]
            }),
        );
        let mut qtype_rows = Vec::new();
        for (word, &total) in &self.qtype.overall {
            let mut row = vec![word.clone(), total.to_string()];
            for r in 0..ROUNDS_PER_DIALOG {
                let round_total: u64 = self.qtype.per_round[r].values().sum();
                let c = self.qtype.per_round[r].get(word).copied().unwrap_or(0);
                row.push(ratio(c, round_total).to_string());
            }
            qtype_rows.push(row);
        }
        let mut qtype_header = vec!["first_word".to_string(), "count".to_string()];
        qtype_header.extend((1..=ROUNDS_PER_DIALOG).map(|r| format!("round_{r}")));
        let qtype_header: Vec<&str> = qtype_header.iter().map(String::as_str).collect();
        let qtype = csv_string(&qtype_header, qtype_rows);
        let coverage = csv_string(
            &["top_n", "fraction"],
            self.coverage_curve.iter().map(|p| vec![p.top_n.to_string(), p.fraction.to_string()]),
        );
        let pronoun = csv_string(
            &["round", "question_rate", "answer_rate"],
            self.pronoun
                .per_round
                .iter()
                .map(|p| vec![p.round.to_string(), p.question_rate.to_string(), p.answer_rate.to_string()]),
        );
        let histogram = |l: &LengthStats| -> Vec<Vec<String>> {
            l.histogram.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]).collect()
        };
        let mut hist_rows: Vec<Vec<String>> = histogram(&self.question_length)
            .into_iter()
            .map(|mut r| {
                r.insert(0, "question".into());
                r
            })
            .collect();
        hist_rows.extend(histogram(&self.answer_length).into_iter().map(|mut r| {
            r.insert(0, "answer".into());
            r
        }));
        let hist = csv_string(&["side", "tokens", "count"], hist_rows);
        vec![
            ("lengths_by_round.csv", lengths),
            ("length_histogram.csv", hist),
            ("qtype_by_round.csv", qtype),
            ("coverage.csv", coverage),
            ("pronoun_by_round.csv", pronoun),
        ]
    }
}

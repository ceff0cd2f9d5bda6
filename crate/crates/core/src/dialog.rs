//! Canonical dialog data model, dataset file parsing and splitting.
//!
//! The on-disk schema is a top-level object
//! `{"version": str, "dialogs": [dialog, ...]}` or, for JSONL, one dialog
//! object per line. A dialog object is
//! `{"image_id", "image_url", "caption", "dialog": [round; 10]}` and a round
//! is `{"question", "answer", "answer_options", "gt_index"}`.

use std::collections::HashSet;
use std::io::{BufRead, Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::rng::seeded_rng;
use crate::text::preprocess_text;

/// Rounds per dialog.
pub const ROUNDS_PER_DIALOG: usize = 10;

/// Options per question in a standard candidate set.
pub const OPTIONS_PER_QUESTION: usize = 100;

pub const DATASET_VERSION: &str = "0.9";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed input at line {line}, column {column}: {message}")]
    Malformed { line: usize, column: usize, message: String },
    #[error("schema violation in dialog {image_id:?}: {message}")]
    Schema { image_id: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DatasetError {
    fn schema(image_id: impl Into<String>, message: impl Into<String>) -> Self {
        DatasetError::Schema { image_id: image_id.into(), message: message.into() }
    }

    fn from_json(err: serde_json::Error, line_offset: usize) -> Self {
        DatasetError::Malformed { line: err.line() + line_offset, column: err.column(), message: err.to_string() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Jsonl,
}

impl Format {
    /// Guesses the format from a file extension, defaulting to JSON.
    pub fn from_path(path: &std::path::Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => Format::Jsonl,
            _ => Format::Json,
        }
    }
}

/// Answer options attached to a round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerOptions {
    pub options: Vec<String>,
    pub gt_index: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QaRound {
    /// 1-based position in the dialog.
    pub round_index: u8,
    pub question: String,
    pub answer: String,
    pub candidates: Option<AnswerOptions>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dialog {
    pub image_id: String,
    pub image_url: Option<String>,
    pub caption: String,
    pub rounds: Vec<QaRound>,
}

impl Dialog {
    /// Builds a dialog from (question, answer) pairs and validates it.
    pub fn from_pairs<Q, A>(
        image_id: impl Into<String>,
        image_url: Option<String>,
        caption: impl Into<String>,
        pairs: impl IntoIterator<Item = (Q, A)>,
    ) -> Result<Dialog, DatasetError>
    where
        Q: Into<String>,
        A: Into<String>,
    {
        let dialog = Dialog {
            image_id: image_id.into(),
            image_url,
            caption: caption.into(),
            rounds: pairs
                .into_iter()
                .enumerate()
                .map(|(i, (q, a))| QaRound {
                    round_index: (i + 1) as u8,
                    question: q.into(),
                    answer: a.into(),
                    candidates: None,
                })
                .collect(),
        };
        dialog.validate()?;
        Ok(dialog)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let id = &self.image_id;
        if id.is_empty() {
            return Err(DatasetError::schema("", "empty image_id"));
        }
        if self.caption.trim().is_empty() {
            return Err(DatasetError::schema(id.as_str(), "empty caption"));
        }
        if self.rounds.len() != ROUNDS_PER_DIALOG {
            return Err(DatasetError::schema(
                id.as_str(),
                format!("expected {ROUNDS_PER_DIALOG} rounds, found {}", self.rounds.len()),
            ));
        }
        for (i, round) in self.rounds.iter().enumerate() {
            let r = i + 1;
            if round.round_index as usize != r {
                return Err(DatasetError::schema(id.as_str(), format!("round {r} has index {}", round.round_index)));
            }
            if round.question.trim().is_empty() {
                return Err(DatasetError::schema(id.as_str(), format!("round {r}: empty question")));
            }
            if round.answer.trim().is_empty() {
                return Err(DatasetError::schema(id.as_str(), format!("round {r}: empty answer")));
            }
            if let Some(c) = &round.candidates {
                if c.options.len() != OPTIONS_PER_QUESTION {
                    return Err(DatasetError::schema(
                        id.as_str(),
                        format!("round {r}: expected {OPTIONS_PER_QUESTION} answer options, found {}", c.options.len()),
                    ));
                }
                let Some(gt) = c.options.get(c.gt_index) else {
                    return Err(DatasetError::schema(
                        id.as_str(),
                        format!("round {r}: gt_index {} out of range", c.gt_index),
                    ));
                };
                if preprocess_text(gt) != preprocess_text(&round.answer) {
                    return Err(DatasetError::schema(
                        id.as_str(),
                        format!("round {r}: option at gt_index does not match the answer"),
                    ));
                }
            }
        }
        Ok(())
    }
}

// Wire representation, kept separate so field order and nullability match
// the file schema exactly.
#[derive(Serialize, Deserialize)]
struct RawRound {
    question: String,
    answer: String,
    answer_options: Option<Vec<String>>,
    gt_index: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawDialog {
    image_id: String,
    image_url: Option<String>,
    caption: String,
    dialog: Vec<RawRound>,
}

#[derive(Serialize)]
struct RawDatasetRef<'a> {
    version: &'a str,
    dialogs: Vec<RawDialog>,
}

impl From<&Dialog> for RawDialog {
    fn from(d: &Dialog) -> Self {
        RawDialog {
            image_id: d.image_id.clone(),
            image_url: d.image_url.clone(),
            caption: d.caption.clone(),
            dialog: d
                .rounds
                .iter()
                .map(|r| RawRound {
                    question: r.question.clone(),
                    answer: r.answer.clone(),
                    answer_options: r.candidates.as_ref().map(|c| c.options.clone()),
                    gt_index: r.candidates.as_ref().map(|c| c.gt_index),
                })
                .collect(),
        }
    }
}

fn image_id_hint(value: &Value) -> String {
    match value.get("image_id") {
        Some(Value::String(s)) => s.clone(),
        Some(other) => other.to_string(),
        None => "<unknown>".to_string(),
    }
}

// serde would silently default absent `Option` fields; nullable fields must
// still be present.
fn require_keys(value: &Value, keys: &[&str], hint: &str, at: &str) -> Result<(), DatasetError> {
    let Value::Object(map) = value else {
        return Err(DatasetError::schema(hint, format!("{at}: expected an object")));
    };
    match keys.iter().find(|k| !map.contains_key(**k)) {
        Some(k) => Err(DatasetError::schema(hint, format!("{at}: missing field `{k}`"))),
        None => Ok(()),
    }
}

fn dialog_from_value(value: Value) -> Result<Dialog, DatasetError> {
    let hint = image_id_hint(&value);
    require_keys(&value, &["image_id", "image_url", "caption", "dialog"], &hint, "dialog")?;
    if let Some(Value::Array(rounds)) = value.get("dialog") {
        for (i, r) in rounds.iter().enumerate() {
            require_keys(r, &["question", "answer", "answer_options", "gt_index"], &hint, &format!("round {}", i + 1))?;
        }
    }
    let raw: RawDialog = serde_json::from_value(value).map_err(|e| DatasetError::schema(hint, e.to_string()))?;
    let image_id = raw.image_id;
    let mut rounds = Vec::with_capacity(raw.dialog.len());
    for (i, r) in raw.dialog.into_iter().enumerate() {
        let candidates = match (r.answer_options, r.gt_index) {
            (Some(options), Some(gt_index)) => Some(AnswerOptions { options, gt_index }),
            (None, None) => None,
            _ => {
                return Err(DatasetError::schema(
                    image_id,
                    format!("round {}: answer_options and gt_index must both be present or both null", i + 1),
                ))
            }
        };
        rounds.push(QaRound {
            round_index: (i + 1).min(u8::MAX as usize) as u8,
            question: r.question,
            answer: r.answer,
            candidates,
        });
    }
    let dialog = Dialog { image_id, image_url: raw.image_url, caption: raw.caption, rounds };
    dialog.validate()?;
    Ok(dialog)
}

/// Parses and validates a dataset file.
pub fn parse_dataset<R: Read>(reader: R, format: Format) -> Result<Vec<Dialog>, DatasetError> {
    match format {
        Format::Json => {
            let top: Value = serde_json::from_reader(reader).map_err(|e| DatasetError::from_json(e, 0))?;
            let Value::Object(mut top) = top else {
                return Err(DatasetError::schema("<dataset>", "top level must be an object"));
            };
            match top.get("version") {
                Some(Value::String(_)) => {}
                _ => return Err(DatasetError::schema("<dataset>", "missing string field `version`")),
            }
            let Some(Value::Array(dialogs)) = top.remove("dialogs") else {
                return Err(DatasetError::schema("<dataset>", "missing array field `dialogs`"));
            };
            dialogs.into_iter().map(dialog_from_value).collect()
        }
        Format::Jsonl => {
            let reader = std::io::BufReader::new(reader);
            let mut out = Vec::new();
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let value: Value = serde_json::from_str(&line).map_err(|e| DatasetError::from_json(e, i))?;
                out.push(dialog_from_value(value)?);
            }
            Ok(out)
        }
    }
}

pub fn parse_dataset_str(input: &str, format: Format) -> Result<Vec<Dialog>, DatasetError> {
    parse_dataset(input.as_bytes(), format)
}

/// Serializes one dialog as a single-line JSON object.
pub fn dialog_to_json(dialog: &Dialog) -> String {
    serde_json::to_string(&RawDialog::from(dialog)).expect("dialog serialization cannot fail")
}

pub fn write_dataset<W: Write>(mut writer: W, dialogs: &[Dialog], format: Format) -> std::io::Result<()> {
    match format {
        Format::Json => {
            let raw =
                RawDatasetRef { version: DATASET_VERSION, dialogs: dialogs.iter().map(RawDialog::from).collect() };
            serde_json::to_writer(&mut writer, &raw)?;
            writer.write_all(b"\n")
        }
        Format::Jsonl => {
            for d in dialogs {
                writer.write_all(dialog_to_json(d).as_bytes())?;
                writer.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<Dialog>,
    pub val: Vec<Dialog>,
    pub test: Vec<Dialog>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SplitError {
    #[error("split sizes sum to {requested} but only {available} dialogs are available")]
    SpecTooLarge { requested: usize, available: usize },
}

/// Seeded split that keeps every image in exactly one split.
///
/// Dialogs sharing an image id travel together; groups are shuffled and
/// assigned to the first split (train, val, test) that still has room.
pub fn split_dataset(dialogs: &[Dialog], spec: SplitSpec, seed: u64) -> Result<DatasetSplit, SplitError> {
    let requested = spec.train + spec.val + spec.test;
    let too_large = SplitError::SpecTooLarge { requested, available: dialogs.len() };
    if requested > dialogs.len() {
        return Err(too_large);
    }

    let mut group_of: std::collections::HashMap<&str, usize> = Default::default();
    let mut groups: Vec<Vec<&Dialog>> = Vec::new();
    for d in dialogs {
        let g = *group_of.entry(d.image_id.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(d);
    }
    let mut rng = seeded_rng(seed, &["split"]);
    groups.shuffle(&mut rng);

    let caps = [spec.train, spec.val, spec.test];
    let mut parts: [Vec<Dialog>; 3] = Default::default();
    for group in groups {
        if let Some(slot) = (0..3).find(|&s| caps[s] - parts[s].len() >= group.len()) {
            parts[slot].extend(group.into_iter().cloned());
        }
        if (0..3).all(|s| parts[s].len() == caps[s]) {
            break;
        }
    }
    if (0..3).any(|s| parts[s].len() != caps[s]) {
        return Err(too_large);
    }
    let [train, val, test] = parts;
    Ok(DatasetSplit { train, val, test })
}

impl DatasetSplit {
    pub fn is_disjoint(&self) -> bool {
        let ids = |v: &[Dialog]| v.iter().map(|d| d.image_id.clone()).collect::<HashSet<_>>();
        let (a, b, c) = (ids(&self.train), ids(&self.val), ids(&self.test));
        a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c)
    }
}

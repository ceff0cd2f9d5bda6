//! Candidate answer sets and the non-neural baseline scorers.
//!
//! A candidate set is the union of the ground-truth answer, the answers to
//! the nearest training questions, and the most frequent training answers,
//! topped up with random training answers until it holds exactly 100
//! distinct options. Answers are compared by their normalized token form.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialog::{Dialog, OPTIONS_PER_QUESTION};
use crate::embeddings::{
    embed_answer_mean, embed_question, knn, squared_distance, EmbeddingTable, IndexError, KnnError, Neighbor,
    NeighborIndex, QuestionEmbedding,
};
use crate::rng::rng_from_parts;
use crate::text::preprocess_text;

pub const DEFAULT_PLAUSIBLE: usize = 50;
pub const DEFAULT_POPULAR: usize = 30;
/// Neighbors averaged by the NN baselines.
pub const DEFAULT_NN_K: usize = 20;
/// Question neighbors pre-selected by the NN-QI baseline.
pub const DEFAULT_NN_BIG_K: usize = 100;

#[derive(Debug, Error)]
pub enum CandidateError {
    #[error("need {needed} distinct answers but only {available} are available")]
    NotEnoughAnswers { needed: usize, available: usize },
    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),
    #[error("no image feature for image {0:?}")]
    MissingImageFeature(String),
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: feature for {image_id:?} has {found} components, expected {expected}")]
    DimensionMismatch { line: usize, image_id: String, expected: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Identity key of an answer string.
pub fn answer_key(raw: &str) -> String {
    preprocess_text(raw).joined()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Correct,
    Plausible,
    Popular,
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSet {
    pub options: Vec<String>,
    pub gt_index: usize,
    pub provenance: Vec<Provenance>,
}

impl CandidateSet {
    /// Checks size, uniqueness and the single correct tag.
    pub fn check(&self, size: usize) -> Result<(), String> {
        if self.options.len() != size || self.provenance.len() != size {
            return Err(format!("expected {size} options, found {}", self.options.len()));
        }
        let mut keys = HashSet::new();
        for o in &self.options {
            if !keys.insert(answer_key(o)) {
                return Err(format!("duplicate option {o:?}"));
            }
        }
        let correct: Vec<usize> = (0..size).filter(|&i| self.provenance[i] == Provenance::Correct).collect();
        if correct != [self.gt_index] {
            return Err(format!("correct tags at {correct:?}, gt_index {}", self.gt_index));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerEntry {
    pub key: String,
    /// First raw form seen for this key.
    pub surface: String,
    pub count: u64,
}

/// Training-split answer counts keyed by normalized form.
#[derive(Clone, Debug, Default)]
pub struct AnswerFrequencyTable {
    entries: Vec<AnswerEntry>,
    by_key: HashMap<String, usize>,
}

impl AnswerFrequencyTable {
    pub fn from_answers<'a>(answers: impl IntoIterator<Item = &'a str>) -> Self {
        let mut table = AnswerFrequencyTable::default();
        for a in answers {
            table.add(a, 1);
        }
        table
    }

    pub fn from_dialogs(dialogs: &[Dialog]) -> Self {
        Self::from_answers(dialogs.iter().flat_map(|d| d.rounds.iter().map(|r| r.answer.as_str())))
    }

    pub fn add(&mut self, raw: &str, count: u64) {
        let key = answer_key(raw);
        match self.by_key.get(&key) {
            Some(&i) => self.entries[i].count += count,
            None => {
                self.by_key.insert(key.clone(), self.entries.len());
                self.entries.push(AnswerEntry { key, surface: raw.to_string(), count });
            }
        }
    }

    /// Count of the normalized form of `raw`; 0 when unseen.
    pub fn count(&self, raw: &str) -> u64 {
        self.count_key(&answer_key(raw))
    }

    pub fn count_key(&self, key: &str) -> u64 {
        self.by_key.get(key).map_or(0, |&i| self.entries[i].count)
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.by_key.contains_key(key)
    }

    pub fn entries(&self) -> &[AnswerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Top-`n` answers by count, ties broken by ascending surface string.
pub fn popular_answers(freq: &AnswerFrequencyTable, n: usize) -> Result<Vec<String>, CandidateError> {
    if n == 0 || freq.len() < n {
        return Err(CandidateError::NotEnoughAnswers { needed: n.max(1), available: freq.len() });
    }
    let mut order: Vec<&AnswerEntry> = freq.entries.iter().collect();
    let cmp = |a: &&AnswerEntry, b: &&AnswerEntry| b.count.cmp(&a.count).then_with(|| a.surface.cmp(&b.surface));
    if n < order.len() {
        order.select_nth_unstable_by(n, cmp);
        order.truncate(n);
    }
    order.sort_unstable_by(cmp);
    Ok(order.into_iter().map(|e| e.surface.clone()).collect())
}

#[derive(Clone, Debug)]
pub struct PoolQuestion {
    pub image_id: String,
    pub round: u8,
    pub answer: String,
    pub answer_key: String,
}

/// Training questions with their answers and a search index over their
/// embeddings. Question ids are positions in [`TrainingPool::questions`].
#[derive(Clone, Debug)]
pub struct TrainingPool {
    questions: Vec<PoolQuestion>,
    index: NeighborIndex,
}

impl TrainingPool {
    pub fn build(dialogs: &[Dialog], table: &EmbeddingTable) -> Result<Self, CandidateError> {
        let flat: Vec<(&Dialog, usize)> =
            dialogs.iter().flat_map(|d| (0..d.rounds.len()).map(move |r| (d, r))).collect();
        let built: Vec<(PoolQuestion, QuestionEmbedding)> = flat
            .par_iter()
            .map(|&(d, r)| {
                let round = &d.rounds[r];
                let q = PoolQuestion {
                    image_id: d.image_id.clone(),
                    round: round.round_index,
                    answer: round.answer.clone(),
                    answer_key: answer_key(&round.answer),
                };
                (q, embed_question(&preprocess_text(&round.question), table))
            })
            .collect();
        let index = NeighborIndex::build(
            4 * table.dim(),
            built.iter().enumerate().map(|(i, (_, e))| (i as u64, e.as_slice())),
        )?;
        Ok(TrainingPool { questions: built.into_iter().map(|(q, _)| q).collect(), index })
    }

    pub fn questions(&self) -> &[PoolQuestion] {
        &self.questions
    }

    pub fn question(&self, id: u64) -> &PoolQuestion {
        &self.questions[id as usize]
    }

    pub fn index(&self) -> &NeighborIndex {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    /// Nearest `k` pool questions, skipping those asked about `exclude_image`.
    pub fn neighbors(
        &self,
        query: &QuestionEmbedding,
        k: usize,
        exclude_image: Option<&str>,
    ) -> Result<Vec<Neighbor>, CandidateError> {
        let keep = |n: &Neighbor| exclude_image != Some(self.question(n.id).image_id.as_str());
        let eligible = match exclude_image {
            Some(img) => self.questions.iter().filter(|q| q.image_id != img).count(),
            None => self.len(),
        };
        if k > eligible {
            return Err(KnnError::KTooLarge { k, size: eligible }.into());
        }
        let mut fetch = (k + if exclude_image.is_some() { 16 } else { 0 }).min(self.len());
        loop {
            let found = knn(query.as_slice(), &self.index, fetch)?;
            let kept: Vec<Neighbor> = found.into_iter().filter(keep).take(k).collect();
            if kept.len() == k || fetch == self.len() {
                return Ok(kept);
            }
            fetch = (fetch * 2).min(self.len());
        }
    }
}

/// Per-question generator keyed by (seed, image id, round).
pub fn candidate_rng(seed: u64, image_id: &str, round: u8) -> ChaCha8Rng {
    rng_from_parts(seed, &[&"candidates", &image_id, &(round as u64)])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CandidateConfig {
    pub plausible: usize,
    pub popular: usize,
    pub total: usize,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig { plausible: DEFAULT_PLAUSIBLE, popular: DEFAULT_POPULAR, total: OPTIONS_PER_QUESTION }
    }
}

/// One question to build candidates for.
#[derive(Clone, Debug)]
pub struct CandidateQuery<'a> {
    pub embedding: &'a QuestionEmbedding,
    pub gt_answer: &'a str,
    /// Image of the question; pool questions on the same image are skipped.
    pub image_id: Option<&'a str>,
}

/// Shared, read-only inputs for building many candidate sets.
pub struct CandidateBuilder<'a> {
    pool: &'a TrainingPool,
    freq: &'a AnswerFrequencyTable,
    popular: Vec<String>,
    config: CandidateConfig,
}

impl<'a> CandidateBuilder<'a> {
    pub fn new(
        pool: &'a TrainingPool,
        freq: &'a AnswerFrequencyTable,
        config: CandidateConfig,
    ) -> Result<Self, CandidateError> {
        if freq.len() < config.total {
            return Err(CandidateError::CorpusTooSmall(format!(
                "{} distinct training answers, need at least {}",
                freq.len(),
                config.total
            )));
        }
        let popular = popular_answers(freq, config.popular)?;
        Ok(CandidateBuilder { pool, freq, popular, config })
    }

    pub fn popular(&self) -> &[String] {
        &self.popular
    }

    pub fn build(&self, query: &CandidateQuery<'_>, rng: &mut ChaCha8Rng) -> Result<CandidateSet, CandidateError> {
        let total = self.config.total;
        let mut options: Vec<(String, Provenance)> = Vec::with_capacity(total);
        let mut present: HashSet<String> = HashSet::with_capacity(total * 2);
        let mut offer = |surface: &str, key: String, tag: Provenance, options: &mut Vec<(String, Provenance)>| {
            if options.len() < total && present.insert(key) {
                options.push((surface.to_string(), tag));
            }
        };

        offer(query.gt_answer, answer_key(query.gt_answer), Provenance::Correct, &mut options);

        let k = self.config.plausible.min(self.pool.len());
        if k > 0 {
            for n in self.pool.neighbors(query.embedding, k, query.image_id)? {
                let q = self.pool.question(n.id);
                offer(&q.answer, q.answer_key.clone(), Provenance::Plausible, &mut options);
            }
        }
        for p in &self.popular {
            offer(p, answer_key(p), Provenance::Popular, &mut options);
        }

        let needed = total - options.len();
        if needed > 0 {
            let entries = self.freq.entries();
            let already = options.iter().filter(|(s, _)| self.freq.contains_key(&answer_key(s))).count();
            if entries.len() - already < needed {
                return Err(CandidateError::CorpusTooSmall(format!(
                    "only {} unused training answers to fill {needed} slots",
                    entries.len() - already
                )));
            }
            while options.len() < total {
                let e = &entries[rng.gen_range(0..entries.len())];
                offer(&e.surface, e.key.clone(), Provenance::Random, &mut options);
            }
        }

        options.shuffle(rng);
        let gt_index = options
            .iter()
            .position(|(_, t)| *t == Provenance::Correct)
            .expect("correct answer is always inserted first");
        let (options, provenance) = options.into_iter().unzip();
        Ok(CandidateSet { options, gt_index, provenance })
    }
}

/// One-shot convenience wrapper around [`CandidateBuilder`].
pub fn build_candidate_set(
    query: &CandidateQuery<'_>,
    pool: &TrainingPool,
    freq: &AnswerFrequencyTable,
    config: CandidateConfig,
    seed: u64,
    round: u8,
) -> Result<CandidateSet, CandidateError> {
    let mut rng = candidate_rng(seed, query.image_id.unwrap_or(""), round);
    CandidateBuilder::new(pool, freq, config)?.build(query, &mut rng)
}

/// One line of the candidates JSONL file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub image_id: String,
    pub round: u8,
    pub gt_index: usize,
    pub answer_options: Vec<String>,
    pub provenance: Vec<Provenance>,
}

impl CandidateRecord {
    pub fn new(image_id: impl Into<String>, round: u8, set: CandidateSet) -> Self {
        CandidateRecord {
            image_id: image_id.into(),
            round,
            gt_index: set.gt_index,
            answer_options: set.options,
            provenance: set.provenance,
        }
    }
}

pub fn read_candidate_records<R: BufRead>(reader: R) -> Result<Vec<CandidateRecord>, FeatureError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CandidateRecord =
            serde_json::from_str(&line).map_err(|e| FeatureError::Malformed { line: i + 1, message: e.to_string() })?;
        if rec.gt_index >= rec.answer_options.len() || rec.provenance.len() != rec.answer_options.len() {
            return Err(FeatureError::Malformed {
                line: i + 1,
                message: "gt_index or provenance inconsistent with answer_options".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Image feature vectors keyed by image id.
#[derive(Clone, Debug, Default)]
pub struct ImageFeatures {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

#[derive(Deserialize)]
struct FeatureLine {
    image_id: String,
    feature: Vec<f32>,
}

impl ImageFeatures {
    pub fn insert(&mut self, image_id: impl Into<String>, feature: Vec<f32>) -> Result<(), FeatureError> {
        let image_id = image_id.into();
        if self.vectors.is_empty() {
            self.dim = feature.len();
        } else if feature.len() != self.dim {
            return Err(FeatureError::DimensionMismatch {
                line: 0,
                image_id,
                expected: self.dim,
                found: feature.len(),
            });
        }
        self.vectors.insert(image_id, feature);
        Ok(())
    }

    pub fn load<R: BufRead>(reader: R) -> Result<Self, FeatureError> {
        let mut out = ImageFeatures::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: FeatureLine = serde_json::from_str(&line)
                .map_err(|e| FeatureError::Malformed { line: i + 1, message: e.to_string() })?;
            out.insert(f.image_id, f.feature).map_err(|e| match e {
                FeatureError::DimensionMismatch { image_id, expected, found, .. } => {
                    FeatureError::DimensionMismatch { line: i + 1, image_id, expected, found }
                }
                other => other,
            })?;
        }
        Ok(out)
    }

    pub fn get(&self, image_id: &str) -> Option<&[f32]> {
        self.vectors.get(image_id).map(Vec::as_slice)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Frequency of each option in the training answers (0 when unseen).
pub fn score_answer_prior(options: &[String], freq: &AnswerFrequencyTable) -> Vec<f64> {
    options.iter().map(|o| freq.count(o) as f64).collect()
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Mean cosine similarity of each option to the given reference answers.
pub fn mean_similarity_scores(options: &[String], references: &[&str], table: &EmbeddingTable) -> Vec<f64> {
    let refs: Vec<Vec<f32>> = references.iter().map(|a| embed_answer_mean(&preprocess_text(a), table)).collect();
    options
        .iter()
        .map(|o| {
            if refs.is_empty() {
                return 0.0;
            }
            let v = embed_answer_mean(&preprocess_text(o), table);
            refs.iter().map(|r| cosine(&v, r)).sum::<f64>() / refs.len() as f64
        })
        .collect()
}

/// NN-Q baseline: similarity to the answers of the `k` nearest training
/// questions.
pub fn score_nn_q(
    options: &[String],
    question: &QuestionEmbedding,
    pool: &TrainingPool,
    table: &EmbeddingTable,
    k: usize,
    exclude_image: Option<&str>,
) -> Result<Vec<f64>, CandidateError> {
    let neighbors = pool.neighbors(question, k, exclude_image)?;
    let refs: Vec<&str> = neighbors.iter().map(|n| pool.question(n.id).answer.as_str()).collect();
    Ok(mean_similarity_scores(options, &refs, table))
}

/// The `k` of the `big_k` nearest training questions whose images are
/// closest to `image_feature`. Stable in question-distance order on ties.
pub fn nn_qi_neighbors(
    question: &QuestionEmbedding,
    image_feature: &[f32],
    pool: &TrainingPool,
    features: &ImageFeatures,
    big_k: usize,
    k: usize,
    exclude_image: Option<&str>,
) -> Result<Vec<u64>, CandidateError> {
    if k > big_k {
        return Err(KnnError::KTooLarge { k, size: big_k }.into());
    }
    let neighbors = pool.neighbors(question, big_k, exclude_image)?;
    let mut ranked = Vec::with_capacity(neighbors.len());
    for n in neighbors {
        let img = &pool.question(n.id).image_id;
        let f = features.get(img).ok_or_else(|| CandidateError::MissingImageFeature(img.clone()))?;
        ranked.push((squared_distance(image_feature, f), n.id));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(ranked.into_iter().take(k).map(|(_, id)| id).collect())
}

/// NN-QI baseline.
#[allow(clippy::too_many_arguments)]
pub fn score_nn_qi(
    options: &[String],
    question: &QuestionEmbedding,
    image_id: &str,
    features: &ImageFeatures,
    pool: &TrainingPool,
    table: &EmbeddingTable,
    big_k: usize,
    k: usize,
    exclude_image: Option<&str>,
) -> Result<Vec<f64>, CandidateError> {
    let image_feature =
        features.get(image_id).ok_or_else(|| CandidateError::MissingImageFeature(image_id.to_string()))?;
    let ids = nn_qi_neighbors(question, image_feature, pool, features, big_k, k, exclude_image)?;
    let refs: Vec<&str> = ids.iter().map(|&id| pool.question(id).answer.as_str()).collect();
    Ok(mean_similarity_scores(options, &refs, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn popular_single_answer() {
        let f = AnswerFrequencyTable::from_answers(["yes", "Yes.", "yes"]);
        assert_eq!(f.len(), 1);
        assert_eq!(f.count("YES"), 3);
        assert_eq!(popular_answers(&f, 1).unwrap(), vec!["yes".to_string()]);
        assert!(matches!(popular_answers(&f, 2), Err(CandidateError::NotEnoughAnswers { needed: 2, available: 1 })));
    }

    #[test]
    fn popular_tie_break() {
        let f = AnswerFrequencyTable::from_answers(["b", "a", "c", "c", "d"]);
        assert_eq!(popular_answers(&f, 3).unwrap(), vec!["c", "a", "b"]);
    }

    #[test]
    fn surface_is_first_seen() {
        let f = AnswerFrequencyTable::from_answers(["Two", "2", "two."]);
        assert_eq!(f.entries()[0].surface, "Two");
        assert_eq!(f.count("2"), 3);
    }

    #[test]
    fn prior_scores() {
        let mut f = AnswerFrequencyTable::default();
        f.add("yes", 1000);
        f.add("no", 900);
        let s = score_answer_prior(&["no".into(), "yes".into(), "purple".into()], &f);
        assert_eq!(s, vec![900.0, 1000.0, 0.0]);
    }

    #[test]
    fn cosine_zero_norm() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn candidate_check_catches_problems() {
        let mut set = CandidateSet {
            options: vec!["a".into(), "b".into()],
            gt_index: 0,
            provenance: vec![Provenance::Correct, Provenance::Random],
        };
        assert!(set.check(2).is_ok());
        set.options[1] = "A!".into();
        assert!(set.check(2).is_err());
        set.options[1] = "b".into();
        set.gt_index = 1;
        assert!(set.check(2).is_err());
    }

    #[test]
    fn provenance_serializes_lowercase() {
        assert_eq!(serde_json::to_string(&Provenance::Plausible).unwrap(), "\"plausible\"");
    }
}

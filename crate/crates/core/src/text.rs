//! Text normalization and vocabulary construction.
//!
//! The tokenizer is deterministic and table-driven:
//! lowercase, expand contractions, blank out everything that is not
//! alphanumeric or an apostrophe, spell out integers 0-99, split on
//! whitespace.

use std::collections::HashMap;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token reserved for out-of-vocabulary words. It can never be produced by
/// [`preprocess_text`] because angle brackets are stripped.
pub const UNK_TOKEN: &str = "<unk>";

/// Contractions expanded before tokenizing. Matched against whole words
/// after lowercasing and apostrophe normalization.
pub const CONTRACTIONS: &[(&str, &str)] = &[
    ("ain't", "is not"),
    ("aren't", "are not"),
    ("can't", "can not"),
    ("couldn't", "could not"),
    ("didn't", "did not"),
    ("doesn't", "does not"),
    ("don't", "do not"),
    ("hadn't", "had not"),
    ("hasn't", "has not"),
    ("haven't", "have not"),
    ("isn't", "is not"),
    ("mightn't", "might not"),
    ("mustn't", "must not"),
    ("needn't", "need not"),
    ("shouldn't", "should not"),
    ("wasn't", "was not"),
    ("weren't", "were not"),
    ("won't", "will not"),
    ("wouldn't", "would not"),
    ("i'm", "i am"),
    ("you're", "you are"),
    ("we're", "we are"),
    ("they're", "they are"),
    ("it's", "it is"),
    ("he's", "he is"),
    ("she's", "she is"),
    ("that's", "that is"),
    ("there's", "there is"),
    ("here's", "here is"),
    ("what's", "what is"),
    ("where's", "where is"),
    ("who's", "who is"),
    ("how's", "how is"),
    ("let's", "let us"),
    ("i've", "i have"),
    ("you've", "you have"),
    ("we've", "we have"),
    ("they've", "they have"),
    ("could've", "could have"),
    ("would've", "would have"),
    ("should've", "should have"),
    ("i'll", "i will"),
    ("you'll", "you will"),
    ("he'll", "he will"),
    ("she'll", "she will"),
    ("it'll", "it will"),
    ("we'll", "we will"),
    ("they'll", "they will"),
    ("that'll", "that will"),
    ("i'd", "i would"),
    ("you'd", "you would"),
    ("he'd", "he would"),
    ("she'd", "she would"),
    ("we'd", "we would"),
    ("they'd", "they would"),
    ("y'all", "you all"),
];

const ONES: [&str; 20] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];

const TENS: [&str; 10] = ["", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"];

/// A normalized token sequence.
///
/// Tokens are non-empty and lowercase. Standalone integers 0-99 are spelled
/// out; larger numbers and mixed alphanumerics such as `2nd` are kept.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    /// Space-joined form, used as the identity key for answer strings.
    pub fn joined(&self) -> String {
        self.0.join(" ")
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.joined())
    }
}

fn contraction(word: &str) -> Option<&'static str> {
    CONTRACTIONS.iter().find(|(from, _)| *from == word).map(|(_, to)| *to)
}

fn push_number_words(value: u32, out: &mut Vec<String>) {
    debug_assert!(value < 100);
    if value < 20 {
        out.push(ONES[value as usize].to_string());
    } else {
        out.push(TENS[(value / 10) as usize].to_string());
        if !value.is_multiple_of(10) {
            out.push(ONES[(value % 10) as usize].to_string());
        }
    }
}

fn small_integer(word: &str) -> Option<u32> {
    if word.is_empty() || !word.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let trimmed = word.trim_start_matches('0');
    if trimmed.len() > 2 {
        return None;
    }
    let value = if trimmed.is_empty() { 0 } else { trimmed.parse().ok()? };
    (value < 100).then_some(value)
}

/// Normalizes raw text into tokens.
pub fn preprocess_text(raw: &str) -> TokenSeq {
    let lowered: String = raw
        .to_lowercase()
        .chars()
        .map(|c| match c {
            '\u{2019}' | '\u{2018}' | '`' => '\'',
            c if c.is_alphanumeric() || c == '\'' => c,
            _ => ' ',
        })
        .collect();

    let mut tokens = Vec::new();
    for word in lowered.split_whitespace() {
        let word = word.trim_matches('\'');
        if word.is_empty() {
            continue;
        }
        if let Some(expanded) = contraction(word) {
            tokens.extend(expanded.split(' ').map(str::to_string));
        } else if let Some(value) = small_integer(word) {
            push_number_words(value, &mut tokens);
        } else {
            tokens.push(word.to_string());
        }
    }
    TokenSeq(tokens)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("min_count must be at least 1")]
    ZeroMinCount,
}

/// Token to id mapping. Id 0 is always [`UNK_TOKEN`]; the remaining ids are
/// assigned by descending corpus frequency with lexicographic tie-break.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    min_count: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn unk_id(&self) -> u32 {
        0
    }

    pub fn contains(&self, token: &str) -> bool {
        token != UNK_TOKEN && self.ids.contains_key(token)
    }

    /// Id of `token`, or the UNK id when it is out of vocabulary.
    pub fn id(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// In-vocabulary tokens in id order, excluding UNK.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens[1..].iter().map(String::as_str)
    }
}

/// Builds a vocabulary of every token seen at least `min_count` times.
pub fn build_vocabulary<S: AsRef<[String]>>(corpus: &[S], min_count: usize) -> Result<Vocabulary, VocabError> {
    if min_count == 0 {
        return Err(VocabError::ZeroMinCount);
    }
    if corpus.iter().all(|s| s.as_ref().is_empty()) {
        return Err(VocabError::EmptyCorpus);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for seq in corpus {
        for token in seq.as_ref() {
            *counts.entry(token.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut tokens = Vec::with_capacity(kept.len() + 1);
    tokens.push(UNK_TOKEN.to_string());
    tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
    let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    Ok(Vocabulary { tokens, ids, min_count })
}

//! Counts of leading n-grams, shaped as a trie for sunburst plots.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dialog::Dialog;
use crate::text::preprocess_text;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Question,
    Answer,
}

/// `{"token", "count", "children"}`; children ordered by count descending,
/// then token.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixNode {
    pub token: String,
    pub count: u64,
    pub children: Vec<PrefixNode>,
}

#[derive(Default)]
struct Building {
    count: u64,
    children: HashMap<String, Building>,
}

impl Building {
    fn freeze(self, token: String) -> PrefixNode {
        let mut children: Vec<PrefixNode> = self.children.into_iter().map(|(t, b)| b.freeze(t)).collect();
        children.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.token.cmp(&b.token)));
        PrefixNode { token, count: self.count, children }
    }
}

impl PrefixNode {
    /// Count of the path `tokens` from this node; 0 when absent.
    pub fn count_of(&self, tokens: &[&str]) -> u64 {
        match tokens.split_first() {
            None => self.count,
            Some((head, rest)) => self.children.iter().find(|c| c.token == *head).map_or(0, |c| c.count_of(rest)),
        }
    }
}

/// Trie over the first `depth` tokens of each sequence. The root (empty
/// token) counts every sequence.
pub fn prefix_tree_from_sequences<S: AsRef<[String]>>(sequences: &[S], depth: usize) -> PrefixNode {
    let mut root = Building::default();
    for seq in sequences {
        root.count += 1;
        let mut node = &mut root;
        for token in seq.as_ref().iter().take(depth) {
            node = node.children.entry(token.clone()).or_default();
            node.count += 1;
        }
    }
    root.freeze(String::new())
}

pub fn ngram_prefix_tree(dialogs: &[Dialog], side: Side, depth: usize) -> PrefixNode {
    let seqs: Vec<Vec<String>> = dialogs
        .iter()
        .flat_map(|d| d.rounds.iter())
        .map(|r| {
            let text = match side {
                Side::Question => &r.question,
                Side::Answer => &r.answer,
            };
            preprocess_text(text).into_inner()
        })
        .collect();
    prefix_tree_from_sequences(&seqs, depth)
}

//! Seeded synthetic corpora for smoke tests, benchmarks and demos.
//!
//! Nothing here resembles real data closely; the generators only aim for
//! the shapes the pipeline cares about (a long tail of answers, shared
//! leading question words, several questions per image).

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dialog::{Dialog, ROUNDS_PER_DIALOG};
use crate::embeddings::EmbeddingTable;
use crate::rng::{rng_from_parts, seeded_rng};

const NOUNS: &[&str] = &[
    "man", "woman", "dog", "cat", "car", "tree", "table", "plate", "horse", "bike", "sky", "wall", "shirt", "hat",
    "window", "bus", "boat", "train", "kite", "ball", "chair", "cake", "phone", "sign",
];
const ADJECTIVES: &[&str] = &[
    "red", "blue", "green", "white", "black", "small", "large", "old", "new", "wooden", "shiny", "striped", "round",
    "tall", "short", "bright",
];
const QUESTION_STARTS: &[&str] = &[
    "is the",
    "are there any",
    "what color is the",
    "how many",
    "does the",
    "can you see the",
    "where is the",
    "what is the",
    "is there a",
    "do you see a",
];
const COUNTS: &[&str] = &["1", "2", "3", "4", "5", "12", "20"];

fn pick<'a, R: Rng>(rng: &mut R, items: &[&'a str]) -> &'a str {
    items.choose(rng).copied().expect("non-empty word list")
}

/// Zipf-like draw over `n` items: low indices are much more frequent.
fn zipf_index<R: Rng>(rng: &mut R, n: usize) -> usize {
    let u: f64 = rng.gen::<f64>();
    ((n as f64).powf(u) - 1.0).floor() as usize % n
}

fn answer<R: Rng>(rng: &mut R) -> String {
    match rng.gen_range(0..12) {
        10 => format!("the {} is {}", pick(rng, NOUNS), pick(rng, ADJECTIVES)),
        11 => format!("i think there are {} {}", pick(rng, COUNTS), pick(rng, NOUNS)),
        0..=2 => "yes".into(),
        3..=4 => "no".into(),
        5 => format!("yes it is {}", pick(rng, ADJECTIVES)),
        6 => "no i don't think so".into(),
        7 => pick(rng, COUNTS).into(),
        _ => {
            let adj = ADJECTIVES[zipf_index(rng, ADJECTIVES.len())];
            let noun = NOUNS[zipf_index(rng, NOUNS.len())];
            match rng.gen_range(0..3) {
                0 => adj.to_string(),
                1 => format!("{adj} {noun}"),
                _ => format!("it looks {adj} near the {noun}"),
            }
        }
    }
}

fn question<R: Rng>(rng: &mut R) -> String {
    let start = pick(rng, QUESTION_STARTS);
    let noun = pick(rng, NOUNS);
    match rng.gen_range(0..3) {
        0 => format!("{start} {noun}?"),
        1 => format!("{start} {noun} {}?", pick(rng, ADJECTIVES)),
        _ => format!("{start} {noun} near it?"),
    }
}

/// `dialogs` random dialogs with ids `img{i}`. Dialog `i` depends only on
/// `(seed, i)`.
pub fn synthetic_dialogs(dialogs: usize, seed: u64) -> Vec<Dialog> {
    (0..dialogs)
        .map(|i| {
            let mut rng = rng_from_parts(seed, &[&"synth-dialog", &(i as u64)]);
            let caption = format!(
                "a {} {} next to a {}",
                pick(&mut rng, ADJECTIVES),
                pick(&mut rng, NOUNS),
                pick(&mut rng, NOUNS)
            );
            let pairs: Vec<(String, String)> =
                (0..ROUNDS_PER_DIALOG).map(|_| (question(&mut rng), answer(&mut rng))).collect();
            Dialog::from_pairs(format!("img{i}"), Some(format!("https://images.example/img{i}.jpg")), caption, pairs)
                .expect("generator emits valid dialogs")
        })
        .collect()
}

/// Dialogs where every round draws its words from a vocabulary private to
/// that round index, so round order is fully recoverable from content.
pub fn round_indexed_dialogs(dialogs: usize, seed: u64) -> Vec<Dialog> {
    const ROUND_WORDS: [&str; ROUNDS_PER_DIALOG] =
        ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet"];
    (0..dialogs)
        .map(|i| {
            let mut rng = rng_from_parts(seed, &[&"synth-rounds", &(i as u64)]);
            let pairs: Vec<(String, String)> = ROUND_WORDS
                .iter()
                .map(|w| {
                    let a = rng.gen_range(0..3);
                    let b = rng.gen_range(0..3);
                    (format!("{w}q {w}q{}?", letter(a)), format!("{w}a{} {w}end", letter(b)))
                })
                .collect();
            Dialog::from_pairs(format!("round{i}"), None, "start of dialog", pairs)
                .expect("generator emits valid dialogs")
        })
        .collect()
}

fn letter(i: usize) -> char {
    (b'a' + i as u8) as char
}

/// Every word the dialog generators can emit after tokenization.
pub fn synthetic_words() -> Vec<String> {
    let mut words: Vec<String> = NOUNS
        .iter()
        .chain(ADJECTIVES)
        .chain(QUESTION_STARTS)
        .flat_map(|s| s.split(' '))
        .chain(["yes", "it", "no", "i", "do", "not", "think", "so", "looks", "near", "a", "next", "to"])
        .chain(["one", "two", "three", "four", "five", "twelve", "twenty"])
        .map(str::to_string)
        .collect();
    words.sort();
    words.dedup();
    words
}

/// Gaussian-ish random vectors for [`synthetic_words`].
pub fn synthetic_embeddings(dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = seeded_rng(seed, &["synth-embeddings"]);
    let mut table = EmbeddingTable::new(dim).expect("positive dimension");
    for word in synthetic_words() {
        let v: Vec<f32> = (0..dim).map(|_| (0..4).map(|_| rng.gen::<f32>() - 0.5).sum()).collect();
        table.insert(word, &v);
    }
    table
}

use std::collections::HashMap;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use dialogbench_collect::server::serve as serve_http;
use dialogbench_collect::{FileStore, Hub, HubConfig, ImageItem, SystemClock};
use dialogbench_core::analysis::lm::{train_lm, LmConfig, Smoothing};
use dialogbench_core::analysis::prefix::{ngram_prefix_tree, Side};
use dialogbench_core::analysis::shuffle::{lm_corpus, shuffle_classification, ShuffleReport};
use dialogbench_core::analysis::stats::dataset_stats;
use dialogbench_core::analysis::topics::{
    load_annotations, topic_continuity, topic_transition_probability, TopicContinuity, TransitionStats,
};
use dialogbench_core::candidates::{
    candidate_rng, read_candidate_records, score_answer_prior, score_nn_q, score_nn_qi, AnswerFrequencyTable,
    CandidateBuilder, CandidateConfig, CandidateQuery, CandidateRecord, ImageFeatures, TrainingPool,
};
use dialogbench_core::dialog::{parse_dataset, write_dataset, Dialog, Format, OPTIONS_PER_QUESTION};
use dialogbench_core::embeddings::{embed_question, load_embedding_table, EmbeddingTable};
use dialogbench_core::metrics::{
    dialog_eval as run_dialog_eval, evaluate, load_scores, max_option_count, ranks_by_dialog, write_scores,
    OptionsManifest, ScoreMatrix, ScoredQuestion, DEFAULT_KS,
};
use dialogbench_core::rng::rng_from_parts;
use dialogbench_core::synth::{synthetic_dialogs, synthetic_embeddings, synthetic_words};
use dialogbench_core::text::preprocess_text;

use crate::args::{
    BaselineArgs, CandidatesArgs, DialogEvalArgs, LmArgs, Method, OptionSource, RankArgs, ServeArgs, SmoothingKind,
    StatsArgs, SynthArgs, TopicsArgs, ValidateArgs,
};
use crate::output::Staging;
use crate::CliError;

// Writes to stdout, ignoring a closed pipe (e.g. output piped into `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

macro_rules! say_raw {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout().lock(), $($arg)*);
    }};
}

fn invalid(path: &Path) -> impl Fn(&dyn Display) -> CliError + '_ {
    move |e| CliError::Invalid(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn load_dataset(path: &Path) -> Result<Vec<Dialog>, CliError> {
    parse_dataset(open(path)?, Format::from_path(path)).map_err(|e| invalid(path)(&e))
}

/// Reads a word-vector file, taking the width from its first line.
fn load_embeddings(path: &Path) -> Result<EmbeddingTable, CliError> {
    let mut first = String::new();
    let mut reader = open(path)?;
    while first.trim().is_empty() {
        first.clear();
        if reader.read_line(&mut first).map_err(io_err)? == 0 {
            return Err(CliError::Invalid(format!("{}: no vectors", path.display())));
        }
    }
    let dim = first.split_whitespace().count() - 1;
    load_embedding_table(open(path)?, dim).map_err(|e| invalid(path)(&e))
}

fn questions(dialogs: &[Dialog]) -> usize {
    dialogs.iter().map(|d| d.rounds.len()).sum()
}

pub fn validate(a: ValidateArgs) -> Result<(), CliError> {
    let dialogs = load_dataset(&a.data)?;
    let with_options = dialogs.iter().flat_map(|d| &d.rounds).filter(|r| r.candidates.is_some()).count();
    say!("ok: {} dialogs, {} rounds, {with_options} with answer options", dialogs.len(), questions(&dialogs));
    Ok(())
}

pub fn stats(a: StatsArgs) -> Result<(), CliError> {
    let dialogs = load_dataset(&a.data)?;
    let report = dataset_stats(&dialogs).map_err(|e| invalid(&a.data)(&e))?;
    let mut out = Staging::new(&a.out).map_err(io_err)?;
    out.write_json("stats.json", &report).map_err(io_err)?;
    for (name, table) in report.csv_tables() {
        out.write(name, table).map_err(io_err)?;
    }
    out.write_json("sunburst_questions.json", &ngram_prefix_tree(&dialogs, Side::Question, a.depth)).map_err(io_err)?;
    out.write_json("sunburst_answers.json", &ngram_prefix_tree(&dialogs, Side::Answer, a.depth)).map_err(io_err)?;
    out.commit().map_err(io_err)?;
    say!(
        "{} dialogs, {} questions, {} unique answers -> {}",
        report.dialogs,
        report.questions,
        report.unique_answer_count,
        a.out.display()
    );
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| CliError::Io(e.to_string()))?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn candidates(a: CandidatesArgs) -> Result<(), CliError> {
    let seed = a.common.seed;
    let train = load_dataset(&a.data)?;
    let eval = match &a.eval {
        Some(p) => load_dataset(p)?,
        None => train.clone(),
    };
    let table = load_embeddings(&a.embeddings)?;
    let pool = TrainingPool::build(&train, &table).map_err(|e| invalid(&a.data)(&e))?;
    let freq = AnswerFrequencyTable::from_dialogs(&train);
    let config = CandidateConfig { plausible: a.plausible, popular: a.popular, total: OPTIONS_PER_QUESTION };
    let builder = CandidateBuilder::new(&pool, &freq, config).map_err(|e| invalid(&a.data)(&e))?;

    let todo: Vec<(&Dialog, usize)> = eval.iter().flat_map(|d| (0..d.rounds.len()).map(move |r| (d, r))).collect();
    let records: Vec<CandidateRecord> = todo
        .par_iter()
        .map(|&(d, r)| {
            let round = &d.rounds[r];
            let embedding = embed_question(&preprocess_text(&round.question), &table);
            let query = CandidateQuery { embedding: &embedding, gt_answer: &round.answer, image_id: Some(&d.image_id) };
            let mut rng = candidate_rng(seed, &d.image_id, round.round_index);
            builder
                .build(&query, &mut rng)
                .map(|set| CandidateRecord::new(d.image_id.clone(), round.round_index, set))
                .map_err(|e| CliError::Invalid(format!("{} round {}: {e}", d.image_id, round.round_index)))
        })
        .collect::<Result<_, _>>()?;

    let mut out = Staging::new(&a.out).map_err(io_err)?;
    write_jsonl(&out.path("candidates.jsonl"), &records)?;
    out.add("candidates.jsonl");
    out.commit().map_err(io_err)?;
    say!("{} candidate sets -> {}", records.len(), a.out.display());
    Ok(())
}

/// (image, round, options, ground-truth index)
type OptionRow = (String, u8, Vec<String>, usize);

/// Option rows in file or dataset order.
fn option_table(candidates: Option<&Path>, eval: &[Dialog]) -> Result<Vec<OptionRow>, CliError> {
    match candidates {
        Some(p) => Ok(read_candidate_records(open(p)?)
            .map_err(|e| invalid(p)(&e))?
            .into_iter()
            .map(|r| (r.image_id, r.round, r.answer_options, r.gt_index))
            .collect()),
        None => Ok(eval
            .iter()
            .flat_map(|d| {
                d.rounds.iter().filter_map(move |r| {
                    r.candidates.as_ref().map(|c| (d.image_id.clone(), r.round_index, c.options.clone(), c.gt_index))
                })
            })
            .collect()),
    }
}

pub fn baseline(a: BaselineArgs) -> Result<(), CliError> {
    let train = load_dataset(&a.data)?;
    let eval = load_dataset(&a.eval)?;
    let options = option_table(a.candidates.as_deref(), &eval)?;
    if options.is_empty() {
        return Err(CliError::Invalid("no questions with answer options to score".into()));
    }
    let question_of: HashMap<(&str, u8), &str> = eval
        .iter()
        .flat_map(|d| d.rounds.iter().map(move |r| ((d.image_id.as_str(), r.round_index), r.question.as_str())))
        .collect();

    let freq = AnswerFrequencyTable::from_dialogs(&train);
    let table = match (a.method, &a.embeddings) {
        (Method::Prior, _) => None,
        (_, Some(p)) => Some(load_embeddings(p)?),
        (_, None) => return Err(CliError::Usage("--embeddings is required for nn-q and nn-qi".into())),
    };
    let features = match (a.method, &a.features) {
        (Method::NnQi, Some(p)) => Some(ImageFeatures::load(open(p)?).map_err(|e| invalid(p)(&e))?),
        (Method::NnQi, None) => return Err(CliError::Usage("--features is required for nn-qi".into())),
        _ => None,
    };
    let pool = match &table {
        Some(t) => Some(TrainingPool::build(&train, t).map_err(|e| invalid(&a.data)(&e))?),
        None => None,
    };

    let entries: Vec<ScoredQuestion> = options
        .par_iter()
        .map(|(image_id, round, opts, gt_index)| {
            let fail = |e: &dyn Display| CliError::Invalid(format!("{image_id} round {round}: {e}"));
            let scores = match a.method {
                Method::Prior => score_answer_prior(opts, &freq),
                method => {
                    let question = question_of
                        .get(&(image_id.as_str(), *round))
                        .ok_or_else(|| fail(&"question not found in --eval"))?;
                    let (table, pool) = (table.as_ref().expect("loaded"), pool.as_ref().expect("built"));
                    let emb = embed_question(&preprocess_text(question), table);
                    let exclude = Some(image_id.as_str());
                    if method == Method::NnQ {
                        score_nn_q(opts, &emb, pool, table, a.k, exclude)
                    } else {
                        let features = features.as_ref().expect("loaded");
                        score_nn_qi(opts, &emb, image_id, features, pool, table, a.big_k, a.k, exclude)
                    }
                    .map_err(|e| fail(&e))?
                }
            };
            Ok(ScoredQuestion { image_id: image_id.clone(), round: *round, scores, gt_index: *gt_index })
        })
        .collect::<Result<_, CliError>>()?;

    let matrix = ScoreMatrix { entries };
    let mut out = Staging::new(&a.out).map_err(io_err)?;
    let file = File::create(out.path("scores.jsonl")).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    write_scores(&mut w, &matrix).map_err(io_err)?;
    w.flush().map_err(io_err)?;
    out.add("scores.jsonl");
    out.commit().map_err(io_err)?;
    say!("{} questions scored -> {}", matrix.len(), a.out.display());
    Ok(())
}

fn load_score_matrix(scores: &Path, source: &OptionSource) -> Result<ScoreMatrix, CliError> {
    let manifest = match (&source.candidates, &source.data) {
        (Some(p), _) => OptionsManifest::from_records(&read_candidate_records(open(p)?).map_err(|e| invalid(p)(&e))?),
        (None, Some(p)) => OptionsManifest::from_dialogs(&load_dataset(p)?),
        (None, None) => return Err(CliError::Usage("one of --candidates or --data is required".into())),
    };
    load_scores(open(scores)?, &manifest).map_err(|e| invalid(scores)(&e))
}

fn emit_json<T: Serialize>(
    out: Option<&Path>,
    name: &str,
    value: &T,
    extra: &[(&str, String)],
) -> Result<(), CliError> {
    match out {
        Some(dir) => {
            let mut s = Staging::new(dir).map_err(io_err)?;
            s.write_json(name, value).map_err(io_err)?;
            for (n, text) in extra {
                s.write(n, text).map_err(io_err)?;
            }
            s.commit().map_err(io_err)?;
        }
        None => say!("{}", serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?),
    }
    Ok(())
}

pub fn rank(a: RankArgs) -> Result<(), CliError> {
    let matrix = load_score_matrix(&a.scores, &a.source)?;
    let report = evaluate(&matrix, &DEFAULT_KS).map_err(|e| invalid(&a.scores)(&e))?;
    let table = report.to_table();
    emit_json(a.out.as_deref(), "rank_report.json", &report, &[("rank_table.txt", table.clone())])?;
    if a.out.is_some() {
        say_raw!("{table}");
    }
    Ok(())
}

pub fn dialog_eval(a: DialogEvalArgs) -> Result<(), CliError> {
    let matrix = load_score_matrix(&a.scores, &a.source)?;
    let grouped = ranks_by_dialog(&matrix).map_err(|e| invalid(&a.scores)(&e))?;
    let ranks: Vec<Vec<usize>> = grouped.into_iter().map(|(_, r)| r).collect();
    let curve: Vec<usize> = (1..=max_option_count(&matrix)).collect();
    let report = run_dialog_eval(&ranks, a.k, &curve).map_err(|e| invalid(&a.scores)(&e))?;
    emit_json(a.out.as_deref(), "dialog_report.json", &report, &[])?;
    if a.out.is_some() {
        say!(
            "{} dialogs: {:.3} rounds within top {} on average, mean first failure round {:.3}",
            report.dialogs,
            report.rounds_correct_mean,
            report.k,
            report.mean_first_failure_round
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct LmReport {
    order: usize,
    smoothing: Smoothing,
    vocabulary_size: usize,
    training_examples: usize,
    shuffle: ShuffleReport,
}

pub fn lm(a: LmArgs) -> Result<(), CliError> {
    let train = load_dataset(&a.data)?;
    let eval = match &a.eval {
        Some(p) => load_dataset(p)?,
        None => train.clone(),
    };
    let smoothing = match a.smoothing {
        SmoothingKind::Interpolated => Smoothing::Interpolated(a.add_k),
        SmoothingKind::AddK => Smoothing::AddK(a.add_k),
        SmoothingKind::Mle => Smoothing::None,
    };
    let examples = lm_corpus(&train);
    let config = LmConfig { order: a.lm_order, smoothing, min_count: 1 };
    let model = train_lm(&examples, config).map_err(|e| CliError::Usage(e.to_string()))?;
    let shuffle = shuffle_classification(&model, &eval, a.permutations, a.common.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let report = LmReport {
        order: model.order(),
        smoothing,
        vocabulary_size: model.vocab().len(),
        training_examples: examples.len(),
        shuffle,
    };
    emit_json(Some(&a.out), "lm_report.json", &report, &[])?;
    say!(
        "perplexity {:.4} original vs {:.4} shuffled; accuracy {:.4}",
        report.shuffle.ppl_original,
        report.shuffle.ppl_shuffled_mean,
        report.shuffle.accuracy
    );
    Ok(())
}

#[derive(Serialize)]
struct TopicsReport {
    continuity: TopicContinuity,
    transitions: TransitionStats,
}

pub fn topics(a: TopicsArgs) -> Result<(), CliError> {
    let anns = load_annotations(open(&a.annotations)?).map_err(|e| invalid(&a.annotations)(&e))?;
    let seed = a.common.seed;
    let continuity =
        topic_continuity(&anns, a.window, a.bootstrap, a.batch, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let transitions =
        topic_transition_probability(&anns, a.permutations, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let report = TopicsReport { continuity, transitions };
    emit_json(Some(&a.out), "topics.json", &report, &[])?;
    say!(
        "{} dialogs: {:.3} topics per dialog; transition probability {:.3} in order, {:.3} shuffled",
        report.continuity.dialogs,
        report.continuity.mean_topics,
        report.transitions.in_order,
        report.transitions.permuted_mean
    );
    Ok(())
}

fn read_image_manifest(path: &Path) -> Result<Vec<ImageItem>, CliError> {
    let mut items = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(&line).map_err(|e| CliError::Invalid(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(items)
}

pub fn serve(a: ServeArgs) -> Result<(), CliError> {
    let _ = tracing_subscriber::fmt().with_writer(std::io::stderr).try_init();
    let images = a.images.as_deref().map(read_image_manifest).transpose()?;
    let store = FileStore::open(&a.out).map_err(io_err)?;
    let recovery = store.recover().map_err(io_err)?;
    if !recovery.interrupted.is_empty() {
        eprintln!("discarded {} sessions interrupted by the last shutdown", recovery.interrupted.len());
    }
    let config = HubConfig {
        seed: a.common.seed,
        liveness_timeout_ms: a.liveness_timeout.saturating_mul(1000),
        first_session_index: recovery.next_session_index,
    };
    let hub = Arc::new(Hub::new(config, Arc::new(store), Arc::new(SystemClock)));
    hub.restore(recovery.unserved, &recovery.served);
    if let Some(items) = images {
        let added = hub.add_images(items).map_err(|e| CliError::Invalid(e.to_string()))?;
        eprintln!("enqueued {added} new images");
    }
    let mut rt = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = a.common.workers {
        rt.worker_threads(n);
    }
    let rt = rt.enable_all().build().map_err(io_err)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        serve_http(listener, hub).await
    })
    .map_err(io_err)
}

#[derive(Serialize)]
struct FeatureLine<'a> {
    image_id: &'a str,
    feature: Vec<f32>,
}

#[derive(Serialize)]
struct AnnotationLine<'a> {
    image_id: &'a str,
    topics: Vec<&'static str>,
}

const SYNTH_TOPICS: [&str; 6] = ["people", "animals", "colors", "counts", "weather", "background"];

pub fn synth(a: SynthArgs) -> Result<(), CliError> {
    use rand::Rng;

    if a.dim == 0 || a.feature_dim == 0 {
        return Err(CliError::Usage("--dim and --feature-dim must be positive".into()));
    }
    let seed = a.common.seed;
    let all = synthetic_dialogs(a.dialogs + a.eval_dialogs, seed);
    let (train, eval) = all.split_at(a.dialogs);
    let mut out = Staging::new(&a.out).map_err(io_err)?;

    for (name, dialogs) in [("train.json", train), ("eval.json", eval)] {
        let mut buf = Vec::new();
        write_dataset(&mut buf, dialogs, Format::Json).map_err(io_err)?;
        out.write(name, buf).map_err(io_err)?;
    }

    let table = synthetic_embeddings(a.dim, seed);
    let mut vectors = String::new();
    for word in synthetic_words() {
        let v = table.get(&word).expect("generated for every word");
        vectors.push_str(&word);
        for x in v {
            vectors.push(' ');
            vectors.push_str(&x.to_string());
        }
        vectors.push('\n');
    }
    out.write("vectors.txt", vectors).map_err(io_err)?;

    let features: Vec<FeatureLine> = all
        .iter()
        .map(|d| {
            let mut rng = rng_from_parts(seed, &[&"synth-feature", &d.image_id]);
            FeatureLine { image_id: &d.image_id, feature: (0..a.feature_dim).map(|_| rng.gen::<f32>()).collect() }
        })
        .collect();
    write_jsonl(&out.path("features.jsonl"), &features)?;
    out.add("features.jsonl");

    // Topics persist for a few rounds before switching.
    let annotations: Vec<AnnotationLine> = all
        .iter()
        .map(|d| {
            let mut rng = rng_from_parts(seed, &[&"synth-topics", &d.image_id]);
            let mut current = SYNTH_TOPICS[rng.gen_range(0..SYNTH_TOPICS.len())];
            let topics = (0..d.rounds.len())
                .map(|_| {
                    if rng.gen_bool(0.35) {
                        current = SYNTH_TOPICS[rng.gen_range(0..SYNTH_TOPICS.len())];
                    }
                    current
                })
                .collect();
            AnnotationLine { image_id: &d.image_id, topics }
        })
        .collect();
    out.write_json("annotations.json", &annotations).map_err(io_err)?;
    out.commit().map_err(io_err)?;
    say!("{} training and {} evaluation dialogs -> {}", train.len(), eval.len(), a.out.display());
    Ok(())
}

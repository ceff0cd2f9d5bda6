//! Randomized in-process simulation of many workers, plus an audit of the
//! recorded logs and delivered frames against the service's safety rules.
//!
//! The driver is single threaded and seeded, so a failing seed replays
//! exactly. [`audit`] is independent of the driver and can check logs from
//! any run, including concurrent ones.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use rand::Rng;
use tokio::sync::mpsc::{unbounded_channel, UnboundedReceiver};

use dialogbench_core::dialog::{Dialog, ROUNDS_PER_DIALOG};
use dialogbench_core::rng::seeded_rng;

use crate::hub::{Clock, Hub, HubConfig, HubError, HubStatus, ManualClock, DEFAULT_LIVENESS_TIMEOUT_MS};
use crate::protocol::{ServerEnvelope, ServerFrame};
use crate::session::{EventKind, ImageItem, Role, SessionState};
use crate::store::MemoryStore;

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub seed: u64,
    pub workers: usize,
    /// Stop once this many sessions have been created.
    pub target_sessions: usize,
    pub images: usize,
    /// Per-action chance that an in-session worker drops.
    pub disconnect_prob: f64,
    /// Per-action chance of an out-of-turn or empty message.
    pub misbehave_prob: f64,
    /// Per-action chance that a worker goes silent long enough to be swept.
    pub silence_prob: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            workers: 40,
            target_sessions: 1_000,
            images: 1_000,
            disconnect_prob: 0.002,
            misbehave_prob: 0.02,
            silence_prob: 0.0005,
        }
    }
}

/// Every frame a worker id received, grouped by connection.
pub type FrameLog = HashMap<String, Vec<Vec<ServerEnvelope>>>;

#[derive(Debug)]
pub struct SimReport {
    pub sessions: usize,
    pub completed: usize,
    pub discarded: usize,
    pub status: HubStatus,
    pub violations: Vec<String>,
}

pub fn sample_images(n: usize) -> Vec<ImageItem> {
    (0..n)
        .map(|i| ImageItem {
            image_id: format!("img{i:05}"),
            caption: format!("a scene with object {i}"),
            image_url: Some(format!("https://images.example/img{i:05}.jpg")),
        })
        .collect()
}

struct SimWorker {
    id: String,
    conn: Option<(u64, UnboundedReceiver<ServerEnvelope>)>,
    session: Option<(String, Role)>,
    waiting: bool,
    silent_until: u64,
}

const STEP_MS: u64 = 50;
const SWEEP_EVERY: usize = 100;

pub fn simulate(config: &SimConfig) -> SimReport {
    let store = Arc::new(MemoryStore::default());
    let clock = Arc::new(ManualClock::new(1_000_000));
    let hub = Hub::new(HubConfig { seed: config.seed, ..HubConfig::default() }, store.clone(), clock.clone());
    hub.add_images(sample_images(config.images)).expect("sample ids are safe");
    let mut rng = seeded_rng(config.seed, &["sim"]);
    let mut workers: Vec<SimWorker> = (0..config.workers)
        .map(|i| SimWorker { id: format!("w{i:03}"), conn: None, session: None, waiting: false, silent_until: 0 })
        .collect();
    let mut log = FrameLog::new();
    let mut violations = Vec::new();
    let mut step = 0usize;
    // Stall guard: a run that cannot create sessions any more stops.
    let max_steps = config.target_sessions.saturating_mul(400).max(10_000);

    while hub.status().sessions_total < config.target_sessions && step < max_steps {
        step += 1;
        clock.advance(STEP_MS);
        if step.is_multiple_of(SWEEP_EVERY) {
            for swept in hub.sweep() {
                if let Some(w) = workers.iter_mut().find(|w| w.id == swept) {
                    drop_conn(w, &mut log);
                }
            }
        }
        let idx = rng.gen_range(0..workers.len());
        let now = clock.now_ms();
        let w = &mut workers[idx];
        if w.silent_until > now {
            continue;
        }
        act(&hub, w, &mut rng, config, now, &mut log, &mut violations);
    }
    for w in &mut workers {
        if w.conn.is_some() {
            hub.disconnect(&w.id);
            drop_conn(w, &mut log);
        }
    }

    let status = hub.status();
    violations.extend(audit(&store, &log, config.images));
    if status.images.leased != 0 || status.active_workers != 0 || status.waiting != 0 {
        violations.push(format!("hub not drained after all workers left: {status:?}"));
    }
    SimReport {
        sessions: status.sessions_total,
        completed: status.sessions_completed as usize,
        discarded: status.sessions_discarded as usize,
        status,
        violations,
    }
}

fn drop_conn(w: &mut SimWorker, log: &mut FrameLog) {
    if let Some((_, mut rx)) = w.conn.take() {
        let mut frames = Vec::new();
        while let Ok(f) = rx.try_recv() {
            frames.push(f);
        }
        log_frames(log, &w.id, frames, true);
    }
    w.session = None;
    w.waiting = false;
}

/// Appends frames to the worker's current connection log, opening a new
/// segment when `close` ended the previous one.
fn log_frames(log: &mut FrameLog, id: &str, frames: Vec<ServerEnvelope>, close: bool) {
    let segs = log.entry(id.to_string()).or_default();
    if segs.is_empty() {
        segs.push(Vec::new());
    }
    segs.last_mut().expect("non-empty").extend(frames);
    if close {
        segs.push(Vec::new());
    }
}

fn act(
    hub: &Hub,
    w: &mut SimWorker,
    rng: &mut impl Rng,
    config: &SimConfig,
    now: u64,
    log: &mut FrameLog,
    violations: &mut Vec<String>,
) {
    let Some((_, rx)) = w.conn.as_mut() else {
        let (tx, rx) = unbounded_channel();
        match hub.connect(&w.id, tx) {
            Ok(conn_id) => w.conn = Some((conn_id, rx)),
            Err(e) => violations.push(format!("{} could not reconnect: {e}", w.id)),
        }
        return;
    };
    let mut frames = Vec::new();
    while let Ok(f) = rx.try_recv() {
        frames.push(f);
    }
    for f in &frames {
        match &f.frame {
            ServerFrame::Paired { session_id, role, .. } => {
                w.session = Some((session_id.clone(), *role));
                w.waiting = false;
            }
            ServerFrame::SessionComplete => w.session = None,
            _ => {}
        }
    }
    log_frames(log, &w.id, frames, false);

    if rng.gen_bool(config.silence_prob) {
        w.silent_until = now + DEFAULT_LIVENESS_TIMEOUT_MS + 10 * SWEEP_EVERY as u64 * STEP_MS;
        return;
    }
    let result = match w.session.clone() {
        None if !w.waiting => {
            let r = hub.join(&w.id);
            w.waiting = r.is_ok();
            r
        }
        None => hub.heartbeat(&w.id),
        Some(_) if rng.gen_bool(config.disconnect_prob) => {
            hub.disconnect(&w.id);
            drop_conn(w, log);
            return;
        }
        Some(_) if rng.gen_bool(config.misbehave_prob) => {
            let text = if rng.gen_bool(0.5) { "   ".to_string() } else { format!("out of turn from {}", w.id) };
            match hub.message(&w.id, &text) {
                Err(HubError::Session(_)) | Ok(()) => Ok(()),
                other => other,
            }
        }
        Some((sid, role)) => {
            let state = hub.session(&sid).map(|s| (s.state, s.rounds_done));
            let my_turn = match &state {
                Some((SessionState::AwaitingQuestion, _)) => role == Role::Questioner,
                Some((SessionState::AwaitingAnswer, _)) => role == Role::Answerer,
                Some((SessionState::SoloFallback { remaining, .. }, _)) => *remaining == role,
                _ => false,
            };
            if my_turn {
                let round = state.map_or(0, |s| s.1) + 1;
                let text = match role {
                    Role::Questioner => format!("question {round} from {} in {sid}?", w.id),
                    Role::Answerer => format!("answer {round} from {} in {sid}", w.id),
                };
                hub.message(&w.id, &text)
            } else {
                hub.heartbeat(&w.id)
            }
        }
    };
    match result {
        Ok(()) => {}
        Err(HubError::NotConnected) => drop_conn(w, log),
        Err(e) => violations.push(format!("{} unexpected error: {e}", w.id)),
    }
}

/// Checks recorded events, dialogs and delivered frames. Returns one line
/// per violation.
pub fn audit(store: &MemoryStore, frames: &FrameLog, image_total: usize) -> Vec<String> {
    let mut v = Vec::new();
    let events = store.events.lock().expect("store lock");
    let dialogs = store.dialogs.lock().expect("store lock");
    let discarded = store.discarded.lock().expect("store lock");

    let mut completed_images: Vec<String> = Vec::new();
    let mut expected_pairs: HashMap<String, Vec<(String, String)>> = HashMap::new();
    let mut discarded_sessions = 0usize;
    let mut served_by_session: BTreeMap<&str, usize> = BTreeMap::new();

    for (sid, log) in events.iter() {
        for (i, e) in log.iter().enumerate() {
            if e.seq != i as u64 + 1 || e.session_id != *sid {
                v.push(format!("{sid}: event {i} has seq {} / session {}", e.seq, e.session_id));
                break;
            }
        }
        let image_id = match log.first().map(|e| &e.kind) {
            Some(EventKind::Paired { questioner_id, answerer_id, image_id }) => {
                if questioner_id == answerer_id {
                    v.push(format!("{sid}: worker paired with itself"));
                }
                image_id.clone()
            }
            _ => {
                v.push(format!("{sid}: log does not start with a pairing"));
                continue;
            }
        };
        let mut expect = Role::Questioner;
        let mut q: Option<String> = None;
        let mut pairs = Vec::new();
        let mut terminal = 0;
        for e in log {
            match &e.kind {
                EventKind::MessageDelivered { from, text, solo: false, .. } => {
                    if *from != expect {
                        v.push(format!("{sid}: {from:?} spoke out of turn"));
                    }
                    expect = from.partner();
                    match from {
                        Role::Questioner => q = Some(text.clone()),
                        Role::Answerer => pairs.push((q.take().unwrap_or_default(), text.clone())),
                    }
                }
                EventKind::SessionComplete => {
                    terminal += 1;
                    completed_images.push(image_id.clone());
                    *served_by_session.entry(sid.as_str()).or_default() += 1;
                    if pairs.len() != ROUNDS_PER_DIALOG {
                        v.push(format!("{sid}: completed with {} rounds", pairs.len()));
                    }
                }
                EventKind::SessionDiscarded { .. } => {
                    terminal += 1;
                    discarded_sessions += 1;
                }
                _ => {}
            }
        }
        if terminal > 1 {
            v.push(format!("{sid}: ended {terminal} times"));
        }
        if served_by_session.contains_key(sid.as_str()) {
            expected_pairs.insert(image_id, pairs);
        }
    }

    let mut seen = HashSet::new();
    for img in &completed_images {
        if !seen.insert(img) {
            v.push(format!("image {img} served twice"));
        }
    }
    if dialogs.len() != completed_images.len() {
        v.push(format!("{} dialogs for {} completed sessions", dialogs.len(), completed_images.len()));
    }
    for d in dialogs.iter() {
        check_dialog(d, expected_pairs.get(&d.image_id), &mut v);
    }
    if discarded.len() != discarded_sessions {
        v.push(format!("{} discarded records for {discarded_sessions} discarded sessions", discarded.len()));
    }
    if completed_images.len() > image_total {
        v.push(format!("{} dialogs from {image_total} images", completed_images.len()));
    }

    for (worker, conns) in frames {
        for conn in conns {
            for (i, env) in conn.iter().enumerate() {
                if env.seq != i as u64 + 1 {
                    v.push(format!("{worker}: frame seq {} at position {}", env.seq, i + 1));
                    break;
                }
            }
            for env in conn {
                if let ServerFrame::Paired { role, image_url, session_id, .. } = &env.frame {
                    match role {
                        Role::Questioner if image_url.is_some() => {
                            v.push(format!("{worker}: questioner in {session_id} received the image URL"))
                        }
                        Role::Answerer if image_url.is_none() => {
                            v.push(format!("{worker}: answerer in {session_id} got no image URL"))
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    v
}

fn check_dialog(d: &Dialog, pairs: Option<&Vec<(String, String)>>, v: &mut Vec<String>) {
    if let Err(e) = d.validate() {
        v.push(format!("dialog {} invalid: {e}", d.image_id));
    }
    let Some(pairs) = pairs else {
        v.push(format!("dialog {} has no completed session", d.image_id));
        return;
    };
    let got: Vec<(String, String)> = d.rounds.iter().map(|r| (r.question.clone(), r.answer.clone())).collect();
    if got != *pairs {
        v.push(format!("dialog {} differs from its delivered messages", d.image_id));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_simulation_is_clean_and_reproducible() {
        let cfg = SimConfig { target_sessions: 60, images: 60, workers: 12, ..SimConfig::default() };
        let a = simulate(&cfg);
        assert!(a.violations.is_empty(), "{:#?}", a.violations);
        assert!(a.completed > 0);
        let b = simulate(&cfg);
        assert_eq!((a.completed, a.discarded, a.status), (b.completed, b.discarded, b.status));
    }

    #[test]
    fn audit_catches_a_double_serve() {
        let store = MemoryStore::default();
        let d = Dialog::from_pairs("x", None, "c", (0..10).map(|i| (format!("q{i}"), format!("a{i}")))).unwrap();
        store.dialogs.lock().unwrap().push(d);
        let v = audit(&store, &FrameLog::new(), 1);
        assert!(v.iter().any(|l| l.contains("1 dialogs for 0 completed")), "{v:?}");
    }

    #[test]
    fn audit_catches_a_leaked_url_and_seq_gap() {
        let leak = ServerEnvelope {
            seq: 2,
            frame: ServerFrame::Paired {
                session_id: "s1".into(),
                role: Role::Questioner,
                caption: "c".into(),
                image_url: Some("https://x".into()),
            },
        };
        let log: FrameLog = [("w".to_string(), vec![vec![leak]])].into_iter().collect();
        let v = audit(&MemoryStore::default(), &log, 1);
        assert!(v.iter().any(|l| l.contains("received the image URL")), "{v:?}");
        assert!(v.iter().any(|l| l.contains("frame seq 2")), "{v:?}");
    }
}

//! Shared coordinator: connections, the worker pool, the image queue and
//! live sessions.
//!
//! Locks are always taken in the order session → pool → sessions map →
//! connections, and outbound frames go through unbounded channels, so no
//! lock is held across a blocking network write.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;
use tokio::sync::mpsc::UnboundedSender;

use dialogbench_core::rng::seeded_rng;

use crate::pool::{ImageCounts, ImageQueue, PoolError, WorkerPool};
use crate::protocol::{ServerEnvelope, ServerFrame};
use crate::session::{frames_for, ChatSession, ImageItem, Role, SessionError, SessionEvent, SessionState};
use crate::store::{is_safe_id, DiscardedRecord, SessionStore};

pub const DEFAULT_LIVENESS_TIMEOUT_MS: u64 = 120_000;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }
}

/// Test clock advanced by hand.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Clone, Debug)]
pub struct HubConfig {
    /// Seed for role assignment.
    pub seed: u64,
    pub liveness_timeout_ms: u64,
    /// Session ids continue from here (see `Recovery::next_session_index`).
    pub first_session_index: u64,
}

impl Default for HubConfig {
    fn default() -> Self {
        HubConfig { seed: 0, liveness_timeout_ms: DEFAULT_LIVENESS_TIMEOUT_MS, first_session_index: 0 }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HubError {
    #[error("worker is already in a session")]
    AlreadyActive,
    #[error("worker is already waiting")]
    AlreadyWaiting,
    #[error("worker id is already connected")]
    AlreadyConnected,
    #[error("worker is not connected")]
    NotConnected,
    #[error("worker is not in a session")]
    NotInSession,
    #[error("unknown session")]
    UnknownSession,
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

impl HubError {
    /// Stable code sent to clients in `error` frames.
    pub fn code(&self) -> &'static str {
        match self {
            HubError::AlreadyActive => "already_active",
            HubError::AlreadyWaiting => "already_waiting",
            HubError::AlreadyConnected => "already_connected",
            HubError::NotConnected => "not_connected",
            HubError::NotInSession => "not_in_session",
            HubError::UnknownSession => "unknown_session",
            HubError::InvalidImage(_) => "invalid_image",
            HubError::Session(SessionError::EmptyMessage) => "empty_message",
            HubError::Session(SessionError::SessionNotLive) => "session_not_live",
            HubError::Session(_) => "session_error",
        }
    }
}

impl From<PoolError> for HubError {
    fn from(e: PoolError) -> Self {
        match e {
            PoolError::AlreadyActive => HubError::AlreadyActive,
            PoolError::AlreadyWaiting => HubError::AlreadyWaiting,
        }
    }
}

pub type Outbox = UnboundedSender<ServerEnvelope>;

struct Connection {
    id: u64,
    outbox: Outbox,
    seq: u64,
    last_seen_ms: u64,
}

struct PoolState {
    workers: WorkerPool,
    images: ImageQueue,
    /// Worker → (session id, role) while the worker takes part in a session.
    assignments: HashMap<String, (String, Role)>,
    rng: ChaCha8Rng,
    next_session: u64,
    completed: u64,
    discarded: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HubStatus {
    pub connected: usize,
    pub waiting: usize,
    pub active_workers: usize,
    pub sessions_total: usize,
    pub sessions_completed: u64,
    pub sessions_discarded: u64,
    pub images: ImageCounts,
    pub store_errors: u64,
}

pub struct Hub {
    config: HubConfig,
    store: Arc<dyn SessionStore>,
    clock: Arc<dyn Clock>,
    pool: Mutex<PoolState>,
    sessions: RwLock<HashMap<String, Arc<Mutex<ChatSession>>>>,
    conns: Mutex<HashMap<String, Connection>>,
    next_conn: AtomicU64,
    store_errors: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().expect("hub lock poisoned")
}

impl Hub {
    pub fn new(config: HubConfig, store: Arc<dyn SessionStore>, clock: Arc<dyn Clock>) -> Self {
        let pool = PoolState {
            workers: WorkerPool::default(),
            images: ImageQueue::default(),
            assignments: HashMap::new(),
            rng: seeded_rng(config.seed, &["roles"]),
            next_session: config.first_session_index,
            completed: 0,
            discarded: 0,
        };
        Hub {
            config,
            store,
            clock,
            pool: Mutex::new(pool),
            sessions: RwLock::new(HashMap::new()),
            conns: Mutex::new(HashMap::new()),
            next_conn: AtomicU64::new(1),
            store_errors: AtomicU64::new(0),
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    fn stored(&self, what: &str, result: std::io::Result<()>) {
        if let Err(e) = result {
            self.store_errors.fetch_add(1, Ordering::Relaxed);
            tracing::error!(error = %e, "failed to persist {what}");
        }
    }

    /// Registers the outbound channel of a worker connection and returns a
    /// handle for [`Hub::close_connection`].
    pub fn connect(&self, worker_id: &str, outbox: Outbox) -> Result<u64, HubError> {
        let mut conns = lock(&self.conns);
        if conns.contains_key(worker_id) {
            return Err(HubError::AlreadyConnected);
        }
        let id = self.next_conn.fetch_add(1, Ordering::Relaxed);
        let now = self.now_ms();
        conns.insert(worker_id.to_string(), Connection { id, outbox, seq: 0, last_seen_ms: now });
        Ok(id)
    }

    /// Disconnects the worker only if `conn_id` is still its live
    /// connection, so a socket closing late cannot evict a reconnect.
    pub fn close_connection(&self, worker_id: &str, conn_id: u64) {
        let current = lock(&self.conns).get(worker_id).map(|c| c.id);
        if current == Some(conn_id) {
            self.disconnect(worker_id);
        }
    }

    fn touch(&self, worker_id: &str) -> Result<(), HubError> {
        let now = self.now_ms();
        match lock(&self.conns).get_mut(worker_id) {
            Some(c) => {
                c.last_seen_ms = now;
                Ok(())
            }
            None => Err(HubError::NotConnected),
        }
    }

    pub fn heartbeat(&self, worker_id: &str) -> Result<(), HubError> {
        self.touch(worker_id)
    }

    /// Sends a frame outside any session, e.g. an error reply.
    pub fn notify(&self, worker_id: &str, frame: ServerFrame) {
        send(&mut lock(&self.conns), worker_id, frame);
    }

    /// Puts a connected worker in the waiting queue and pairs if possible.
    pub fn join(&self, worker_id: &str) -> Result<(), HubError> {
        self.touch(worker_id)?;
        let now = self.now_ms();
        let mut pool = lock(&self.pool);
        pool.workers.enqueue(worker_id, now)?;
        self.pair_waiting(&mut pool);
        Ok(())
    }

    /// Pairs waiting workers while both a pair and an unserved image exist.
    /// The new session is fully announced before the pool lock is released,
    /// so no message can overtake its pairing frames.
    fn pair_waiting(&self, pool: &mut PoolState) {
        while pool.workers.waiting_len() >= 2 && pool.images.has_unserved() {
            let (first, second) = pool.workers.pop_pair().expect("two workers are waiting");
            let image = pool.images.lease().expect("an image is unserved");
            let (questioner, answerer) = if pool.rng.gen_bool(0.5) { (first, second) } else { (second, first) };
            let session_id = format!("s{:06}", pool.next_session);
            pool.next_session += 1;
            let now = self.now_ms();
            let (session, events) =
                ChatSession::start(session_id.clone(), image, questioner.clone(), answerer.clone(), now)
                    .expect("waiting queue never holds a worker twice");
            pool.assignments.insert(questioner, (session_id.clone(), Role::Questioner));
            pool.assignments.insert(answerer, (session_id.clone(), Role::Answerer));
            self.stored("session events", self.store.append_events(&events));
            self.dispatch(pool, &session, &events);
            self.sessions.write().expect("sessions lock poisoned").insert(session_id, Arc::new(Mutex::new(session)));
        }
    }

    /// Sends an event batch's frames to participants still attached to the
    /// session.
    fn dispatch(&self, pool: &PoolState, session: &ChatSession, events: &[SessionEvent]) {
        let mut conns = lock(&self.conns);
        for event in events {
            for (role, frame) in frames_for(session, event) {
                let worker = session.worker(role);
                let attached =
                    pool.assignments.get(worker).is_some_and(|(sid, r)| *sid == session.session_id && *r == role);
                if attached {
                    send(&mut conns, worker, frame);
                }
            }
        }
    }

    fn session_of(&self, worker_id: &str) -> Result<(Arc<Mutex<ChatSession>>, Role), HubError> {
        let (sid, role) = lock(&self.pool).assignments.get(worker_id).cloned().ok_or(HubError::NotInSession)?;
        let cell =
            self.sessions.read().expect("sessions lock poisoned").get(&sid).cloned().ok_or(HubError::UnknownSession)?;
        Ok((cell, role))
    }

    pub fn message(&self, worker_id: &str, text: &str) -> Result<(), HubError> {
        self.touch(worker_id)?;
        let (cell, role) = self.session_of(worker_id)?;
        let mut session = lock(&cell);
        if session.role_of(worker_id) != Some(role) {
            return Err(HubError::NotInSession);
        }
        let now = self.now_ms();
        let mut events = session.handle_message(role, text, now)?;
        if session.state == SessionState::Completable {
            let (dialog, done) = session.complete(now)?;
            events.extend(done);
            self.stored("dialog", self.store.save_dialog(&dialog));
        }
        self.settle(&session, events);
        Ok(())
    }

    /// Persists and delivers events, then releases workers and the image
    /// if the session has ended. Called with the session locked.
    fn settle(&self, session: &ChatSession, events: Vec<SessionEvent>) {
        if events.is_empty() {
            return;
        }
        self.stored("session events", self.store.append_events(&events));
        if session.state == SessionState::Discarded {
            let reason = events
                .iter()
                .find_map(|e| match &e.kind {
                    crate::session::EventKind::SessionDiscarded { reason } => Some(reason.clone()),
                    _ => None,
                })
                .unwrap_or_default();
            self.stored(
                "discarded transcript",
                self.store.save_discarded(&DiscardedRecord::from_session(session, reason)),
            );
        }
        let mut pool = lock(&self.pool);
        self.dispatch(&pool, session, &events);
        if session.state.is_terminal() {
            for role in [Role::Questioner, Role::Answerer] {
                let worker = session.worker(role);
                if pool.assignments.get(worker).is_some_and(|(sid, _)| *sid == session.session_id) {
                    pool.assignments.remove(worker);
                    pool.workers.release(worker);
                }
            }
            let image_id = &session.image.image_id;
            if session.state == SessionState::Completed {
                pool.images.serve(image_id);
                pool.completed += 1;
            } else {
                pool.images.requeue(image_id);
                pool.discarded += 1;
            }
            self.pair_waiting(&mut pool);
        }
    }

    /// The worker is gone: closed socket, `leave`, or liveness timeout.
    pub fn disconnect(&self, worker_id: &str) {
        lock(&self.conns).remove(worker_id);
        let assignment = {
            let mut pool = lock(&self.pool);
            pool.workers.remove_waiting(worker_id);
            let a = pool.assignments.remove(worker_id);
            pool.workers.release(worker_id);
            a
        };
        let Some((sid, role)) = assignment else { return };
        let Some(cell) = self.sessions.read().expect("sessions lock poisoned").get(&sid).cloned() else { return };
        let mut session = lock(&cell);
        let events = session.handle_disconnect(role, self.now_ms());
        self.settle(&session, events);
    }

    /// Disconnects workers silent for longer than the liveness timeout.
    pub fn sweep(&self) -> Vec<String> {
        let now = self.now_ms();
        let stale: Vec<String> = lock(&self.conns)
            .iter()
            .filter(|(_, c)| now.saturating_sub(c.last_seen_ms) > self.config.liveness_timeout_ms)
            .map(|(w, _)| w.clone())
            .collect();
        for w in &stale {
            tracing::info!(worker = %w, "liveness timeout");
            self.disconnect(w);
        }
        stale
    }

    /// Adds images to the work queue; returns how many were new.
    pub fn add_images(&self, images: Vec<ImageItem>) -> Result<usize, HubError> {
        if let Some(bad) = images.iter().find(|i| !is_safe_id(&i.image_id)) {
            return Err(HubError::InvalidImage(bad.image_id.clone()));
        }
        self.stored("image manifest", self.store.record_images(&images));
        let mut pool = lock(&self.pool);
        let added = pool.images.add(images);
        self.pair_waiting(&mut pool);
        Ok(added)
    }

    /// Restores recovered state: images with dialogs are never leased again.
    pub fn restore(&self, unserved: Vec<ImageItem>, served: &[String]) {
        let mut pool = lock(&self.pool);
        for id in served {
            pool.images.mark_served_externally(id);
        }
        pool.images.add(unserved);
    }

    pub fn session(&self, session_id: &str) -> Option<ChatSession> {
        let cell = self.sessions.read().expect("sessions lock poisoned").get(session_id).cloned()?;
        let s = lock(&cell).clone();
        Some(s)
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("sessions lock poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn status(&self) -> HubStatus {
        let sessions_total = self.sessions.read().expect("sessions lock poisoned").len();
        let pool = lock(&self.pool);
        let connected = lock(&self.conns).len();
        HubStatus {
            connected,
            waiting: pool.workers.waiting_len(),
            active_workers: pool.workers.active_len(),
            sessions_total,
            sessions_completed: pool.completed,
            sessions_discarded: pool.discarded,
            images: pool.images.counts(),
            store_errors: self.store_errors.load(Ordering::Relaxed),
        }
    }
}

fn send(conns: &mut HashMap<String, Connection>, worker_id: &str, frame: ServerFrame) {
    if let Some(c) = conns.get_mut(worker_id) {
        c.seq += 1;
        // A closed receiver means the socket is going away; the disconnect
        // path cleans up.
        let _ = c.outbox.send(ServerEnvelope { seq: c.seq, frame });
    }
}

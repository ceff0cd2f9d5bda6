//! Persistence of session event logs, completed dialogs and discarded
//! transcripts.
//!
//! On-disk layout under the data directory:
//!
//! ```text
//! images.jsonl                    every image ever submitted
//! sessions/{session_id}.events.jsonl
//! dialogs/{image_id}.json         completed dialogs
//! discarded/{session_id}.json     solo or interrupted transcripts
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use dialogbench_core::dialog::{dialog_to_json, Dialog};

use crate::session::{ChatSession, EventKind, ImageItem, SessionEvent, TranscriptEntry};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardedRecord {
    pub session_id: String,
    pub image_id: String,
    pub questioner_id: String,
    pub answerer_id: String,
    pub reason: String,
    pub transcript: Vec<TranscriptEntry>,
    pub discarded: bool,
}

impl DiscardedRecord {
    pub fn from_session(s: &ChatSession, reason: impl Into<String>) -> Self {
        DiscardedRecord {
            session_id: s.session_id.clone(),
            image_id: s.image.image_id.clone(),
            questioner_id: s.questioner_id.clone(),
            answerer_id: s.answerer_id.clone(),
            reason: reason.into(),
            transcript: s.transcript.clone(),
            discarded: true,
        }
    }
}

pub trait SessionStore: Send + Sync {
    fn append_events(&self, events: &[SessionEvent]) -> io::Result<()>;
    fn save_dialog(&self, dialog: &Dialog) -> io::Result<()>;
    fn save_discarded(&self, record: &DiscardedRecord) -> io::Result<()>;
    fn record_images(&self, images: &[ImageItem]) -> io::Result<()>;
}

/// Keeps everything in memory; for tests and simulations.
#[derive(Debug, Default)]
pub struct MemoryStore {
    pub events: Mutex<BTreeMap<String, Vec<SessionEvent>>>,
    pub dialogs: Mutex<Vec<Dialog>>,
    pub discarded: Mutex<Vec<DiscardedRecord>>,
    pub images: Mutex<Vec<ImageItem>>,
}

impl SessionStore for MemoryStore {
    fn append_events(&self, events: &[SessionEvent]) -> io::Result<()> {
        let mut map = self.events.lock().expect("store lock");
        for e in events {
            map.entry(e.session_id.clone()).or_default().push(e.clone());
        }
        Ok(())
    }

    fn save_dialog(&self, dialog: &Dialog) -> io::Result<()> {
        self.dialogs.lock().expect("store lock").push(dialog.clone());
        Ok(())
    }

    fn save_discarded(&self, record: &DiscardedRecord) -> io::Result<()> {
        self.discarded.lock().expect("store lock").push(record.clone());
        Ok(())
    }

    fn record_images(&self, images: &[ImageItem]) -> io::Result<()> {
        self.images.lock().expect("store lock").extend_from_slice(images);
        Ok(())
    }
}

/// Ids used as file names must not escape their directory.
pub fn is_safe_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 200
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

#[derive(Debug)]
pub struct FileStore {
    root: PathBuf,
    // Serializes appends to the shared manifest.
    manifest: Mutex<()>,
}

/// What a restart needs to resume collection.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Recovery {
    /// Images in the manifest without a completed dialog, in manifest order.
    pub unserved: Vec<ImageItem>,
    pub served: Vec<String>,
    /// Sessions whose log stops before a terminal event.
    pub interrupted: Vec<String>,
    /// One past the largest numeric session suffix seen.
    pub next_session_index: u64,
}

fn write_atomically(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

fn unsafe_id(id: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidInput, format!("id {id:?} is not usable as a file name"))
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        for dir in ["sessions", "dialogs", "discarded"] {
            fs::create_dir_all(root.join(dir))?;
        }
        Ok(FileStore { root, manifest: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn events_path(&self, session_id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{session_id}.events.jsonl"))
    }

    pub fn read_events(&self, session_id: &str) -> io::Result<Vec<SessionEvent>> {
        read_jsonl(&self.events_path(session_id))
    }

    /// Rebuilds queue state from disk. Sessions cut off mid-conversation
    /// are written to `discarded/` with reason `interrupted`; their images
    /// are unserved again.
    pub fn recover(&self) -> io::Result<Recovery> {
        let manifest: Vec<ImageItem> = match read_jsonl(&self.root.join("images.jsonl")) {
            Ok(m) => m,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e),
        };
        let mut served = HashSet::new();
        for entry in fs::read_dir(self.root.join("dialogs"))? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".json") {
                served.insert(id.to_string());
            }
        }
        let mut interrupted = Vec::new();
        let mut next_session_index = 0;
        let mut names: Vec<String> = fs::read_dir(self.root.join("sessions"))?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<io::Result<_>>()?;
        names.sort();
        for name in names {
            let Some(session_id) = name.strip_suffix(".events.jsonl") else { continue };
            if let Some(n) = session_id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                next_session_index = next_session_index.max(n + 1);
            }
            let events = self.read_events(session_id)?;
            let terminal = events
                .iter()
                .any(|e| matches!(e.kind, EventKind::SessionComplete | EventKind::SessionDiscarded { .. }));
            if !terminal {
                if let Some(record) = replay_interrupted(session_id, &events) {
                    self.save_discarded(&record)?;
                    // Close the log so the next recovery does not revisit it.
                    let last = events.last().expect("replay needs a pairing event");
                    let close =
                        |seq, kind| SessionEvent { session_id: session_id.to_string(), seq, at_ms: last.at_ms, kind };
                    self.append_events(&[
                        close(last.seq + 1, EventKind::SessionDiscarded { reason: "interrupted".into() }),
                        close(last.seq + 2, EventKind::ImageRequeued { image_id: record.image_id.clone() }),
                    ])?;
                }
                interrupted.push(session_id.to_string());
            }
        }
        let mut seen = HashSet::new();
        let unserved = manifest
            .into_iter()
            .filter(|img| !served.contains(&img.image_id) && seen.insert(img.image_id.clone()))
            .collect();
        let mut served: Vec<String> = served.into_iter().collect();
        served.sort();
        Ok(Recovery { unserved, served, interrupted, next_session_index })
    }
}

fn replay_interrupted(session_id: &str, events: &[SessionEvent]) -> Option<DiscardedRecord> {
    let mut record = DiscardedRecord {
        session_id: session_id.to_string(),
        image_id: String::new(),
        questioner_id: String::new(),
        answerer_id: String::new(),
        reason: "interrupted".into(),
        transcript: Vec::new(),
        discarded: true,
    };
    for e in events {
        match &e.kind {
            EventKind::Paired { questioner_id, answerer_id, image_id } => {
                record.questioner_id = questioner_id.clone();
                record.answerer_id = answerer_id.clone();
                record.image_id = image_id.clone();
            }
            EventKind::MessageDelivered { from, text, solo, .. } => {
                record.transcript.push(TranscriptEntry { role: *from, text: text.clone(), at_ms: e.at_ms, solo: *solo })
            }
            _ => {}
        }
    }
    (!record.image_id.is_empty()).then_some(record)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> io::Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            // A crash can leave a torn final line.
            Err(e) => {
                tracing::warn!(path = %path.display(), line = i + 1, error = %e, "skipping unreadable log line");
            }
        }
    }
    Ok(out)
}

fn append_lines<T: Serialize>(path: &Path, items: &[T]) -> io::Result<()> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item)?;
        buf.push(b'\n');
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&buf)?;
    f.flush()
}

impl SessionStore for FileStore {
    fn append_events(&self, events: &[SessionEvent]) -> io::Result<()> {
        let Some(first) = events.first() else { return Ok(()) };
        if !is_safe_id(&first.session_id) {
            return Err(unsafe_id(&first.session_id));
        }
        append_lines(&self.events_path(&first.session_id), events)
    }

    fn save_dialog(&self, dialog: &Dialog) -> io::Result<()> {
        if !is_safe_id(&dialog.image_id) {
            return Err(unsafe_id(&dialog.image_id));
        }
        let mut json = dialog_to_json(dialog);
        json.push('\n');
        write_atomically(&self.root.join("dialogs").join(format!("{}.json", dialog.image_id)), json.as_bytes())
    }

    fn save_discarded(&self, record: &DiscardedRecord) -> io::Result<()> {
        if !is_safe_id(&record.session_id) {
            return Err(unsafe_id(&record.session_id));
        }
        let mut json = serde_json::to_vec_pretty(record)?;
        json.push(b'\n');
        write_atomically(&self.root.join("discarded").join(format!("{}.json", record.session_id)), &json)
    }

    fn record_images(&self, images: &[ImageItem]) -> io::Result<()> {
        let _guard = self.manifest.lock().expect("manifest lock");
        append_lines(&self.root.join("images.jsonl"), images)
    }
}

/// Completed dialogs currently on disk.
pub fn read_dialogs(root: &Path) -> io::Result<Vec<Dialog>> {
    let mut paths: Vec<PathBuf> =
        fs::read_dir(root.join("dialogs"))?.map(|e| e.map(|e| e.path())).collect::<io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let parsed = dialogbench_core::dialog::parse_dataset(File::open(&p)?, dialogbench_core::dialog::Format::Jsonl)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", p.display())))?;
        out.extend(parsed);
    }
    Ok(out)
}

//! Per-session chat state machine. Pure: no I/O, time is passed in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use dialogbench_core::dialog::{Dialog, ROUNDS_PER_DIALOG};

use crate::protocol::ServerFrame;

/// Messages the remaining worker sends alone before the session is closed.
pub const SOLO_QUOTA: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Questioner,
    Answerer,
}

impl Role {
    pub fn partner(self) -> Role {
        match self {
            Role::Questioner => Role::Answerer,
            Role::Answerer => Role::Questioner,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageItem {
    pub image_id: String,
    pub caption: String,
    pub image_url: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SessionState {
    AwaitingQuestion,
    AwaitingAnswer,
    Completable,
    Completed,
    SoloFallback { remaining: Role, sent: u32 },
    Discarded,
}

impl SessionState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, SessionState::Completed | SessionState::Discarded)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub text: String,
    pub at_ms: u64,
    /// Sent after the partner left.
    #[serde(default)]
    pub solo: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Paired { questioner_id: String, answerer_id: String, image_id: String },
    RoleAssigned { worker_id: String, role: Role },
    MessageDelivered { from: Role, text: String, round: u32, solo: bool },
    TurnRejected { role: Role, reason: String },
    PartnerDisconnected { left: Role },
    SoloPrompt { role: Role },
    SessionComplete,
    SessionDiscarded { reason: String },
    ImageRequeued { image_id: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub session_id: String,
    /// 1-based, gap-free within a session.
    pub seq: u64,
    pub at_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("session is not accepting messages")]
    SessionNotLive,
    #[error("message is empty")]
    EmptyMessage,
    #[error("session has not reached the final round")]
    NotCompletable,
    #[error("questioner and answerer must be different workers")]
    SelfPairing,
    #[error("completed dialog failed validation: {0}")]
    InvalidDialog(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    pub image: ImageItem,
    pub questioner_id: String,
    pub answerer_id: String,
    pub transcript: Vec<TranscriptEntry>,
    pub state: SessionState,
    pub rounds_done: u32,
    last_seq: u64,
}

pub fn solo_instructions(role: Role) -> &'static str {
    match role {
        Role::Questioner => {
            "Your partner has left the chat. Keep asking questions about the hidden image until you have sent 10 messages."
        }
        Role::Answerer => {
            "Your partner has left the chat. Keep writing short factual descriptions of the image until you have sent 10 messages."
        }
    }
}

impl ChatSession {
    /// A new paired session. The returned events announce the pairing and
    /// each participant's role.
    pub fn start(
        session_id: impl Into<String>,
        image: ImageItem,
        questioner_id: impl Into<String>,
        answerer_id: impl Into<String>,
        now_ms: u64,
    ) -> Result<(ChatSession, Vec<SessionEvent>), SessionError> {
        let (questioner_id, answerer_id) = (questioner_id.into(), answerer_id.into());
        if questioner_id == answerer_id {
            return Err(SessionError::SelfPairing);
        }
        let mut s = ChatSession {
            session_id: session_id.into(),
            image,
            questioner_id,
            answerer_id,
            transcript: Vec::new(),
            state: SessionState::AwaitingQuestion,
            rounds_done: 0,
            last_seq: 0,
        };
        let mut events = Vec::new();
        s.emit(
            &mut events,
            now_ms,
            EventKind::Paired {
                questioner_id: s.questioner_id.clone(),
                answerer_id: s.answerer_id.clone(),
                image_id: s.image.image_id.clone(),
            },
        );
        for role in [Role::Questioner, Role::Answerer] {
            let worker_id = s.worker(role).to_string();
            s.emit(&mut events, now_ms, EventKind::RoleAssigned { worker_id, role });
        }
        Ok((s, events))
    }

    pub fn worker(&self, role: Role) -> &str {
        match role {
            Role::Questioner => &self.questioner_id,
            Role::Answerer => &self.answerer_id,
        }
    }

    pub fn role_of(&self, worker_id: &str) -> Option<Role> {
        if worker_id == self.questioner_id {
            Some(Role::Questioner)
        } else if worker_id == self.answerer_id {
            Some(Role::Answerer)
        } else {
            None
        }
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    fn emit(&mut self, out: &mut Vec<SessionEvent>, at_ms: u64, kind: EventKind) {
        self.last_seq += 1;
        out.push(SessionEvent { session_id: self.session_id.clone(), seq: self.last_seq, at_ms, kind });
    }

    fn deliver(&mut self, out: &mut Vec<SessionEvent>, from: Role, text: String, round: u32, solo: bool, now_ms: u64) {
        self.transcript.push(TranscriptEntry { role: from, text: text.clone(), at_ms: now_ms, solo });
        self.emit(out, now_ms, EventKind::MessageDelivered { from, text, round, solo });
    }

    fn discard(&mut self, out: &mut Vec<SessionEvent>, reason: &str, now_ms: u64) {
        self.state = SessionState::Discarded;
        self.emit(out, now_ms, EventKind::SessionDiscarded { reason: reason.into() });
        let image_id = self.image.image_id.clone();
        self.emit(out, now_ms, EventKind::ImageRequeued { image_id });
    }

    pub fn handle_message(&mut self, sender: Role, text: &str, now_ms: u64) -> Result<Vec<SessionEvent>, SessionError> {
        let text = text.trim();
        if self.state.is_terminal() || self.state == SessionState::Completable {
            return Err(SessionError::SessionNotLive);
        }
        if text.is_empty() {
            return Err(SessionError::EmptyMessage);
        }
        let mut events = Vec::new();
        let reject = |s: &mut Self, events: &mut Vec<SessionEvent>, reason: &str| {
            s.emit(events, now_ms, EventKind::TurnRejected { role: sender, reason: reason.into() });
        };
        match self.state.clone() {
            SessionState::AwaitingQuestion if sender == Role::Questioner => {
                self.deliver(&mut events, sender, text.into(), self.rounds_done + 1, false, now_ms);
                self.state = SessionState::AwaitingAnswer;
            }
            SessionState::AwaitingAnswer if sender == Role::Answerer => {
                self.rounds_done += 1;
                self.deliver(&mut events, sender, text.into(), self.rounds_done, false, now_ms);
                self.state = if self.rounds_done as usize == ROUNDS_PER_DIALOG {
                    SessionState::Completable
                } else {
                    SessionState::AwaitingQuestion
                };
            }
            SessionState::AwaitingQuestion => reject(self, &mut events, "waiting for the questioner"),
            SessionState::AwaitingAnswer => reject(self, &mut events, "waiting for the answerer"),
            SessionState::SoloFallback { remaining, sent } if sender == remaining => {
                let sent = sent + 1;
                self.deliver(&mut events, sender, text.into(), sent, true, now_ms);
                self.state = SessionState::SoloFallback { remaining, sent };
                if sent >= SOLO_QUOTA {
                    self.discard(&mut events, "solo quota reached", now_ms);
                }
            }
            SessionState::SoloFallback { .. } => return Err(SessionError::SessionNotLive),
            SessionState::Completable | SessionState::Completed | SessionState::Discarded => {
                unreachable!("handled above")
            }
        }
        Ok(events)
    }

    /// `role` has left. Returns no events when the departure changes nothing.
    pub fn handle_disconnect(&mut self, role: Role, now_ms: u64) -> Vec<SessionEvent> {
        let mut events = Vec::new();
        match self.state.clone() {
            SessionState::AwaitingQuestion | SessionState::AwaitingAnswer => {
                let remaining = role.partner();
                self.state = SessionState::SoloFallback { remaining, sent: 0 };
                self.emit(&mut events, now_ms, EventKind::PartnerDisconnected { left: role });
                self.emit(&mut events, now_ms, EventKind::SoloPrompt { role: remaining });
            }
            SessionState::Completable => {
                self.emit(&mut events, now_ms, EventKind::PartnerDisconnected { left: role });
            }
            SessionState::SoloFallback { remaining, .. } if remaining == role => {
                self.discard(&mut events, "all participants left", now_ms);
            }
            SessionState::SoloFallback { .. } | SessionState::Completed | SessionState::Discarded => {}
        }
        events
    }

    /// Turns a finished conversation into a dataset dialog.
    pub fn complete(&mut self, now_ms: u64) -> Result<(Dialog, Vec<SessionEvent>), SessionError> {
        if self.state != SessionState::Completable {
            return Err(SessionError::NotCompletable);
        }
        let pairs: Vec<(String, String)> =
            self.transcript.chunks(2).map(|qa| (qa[0].text.clone(), qa[1].text.clone())).collect();
        let dialog = Dialog::from_pairs(
            self.image.image_id.clone(),
            self.image.image_url.clone(),
            self.image.caption.clone(),
            pairs,
        )
        .map_err(|e| SessionError::InvalidDialog(e.to_string()))?;
        self.state = SessionState::Completed;
        let mut events = Vec::new();
        self.emit(&mut events, now_ms, EventKind::SessionComplete);
        Ok((dialog, events))
    }
}

/// Frames an event produces, addressed by role. The image URL is only ever
/// attached to the answerer's pairing frame.
pub fn frames_for(session: &ChatSession, event: &SessionEvent) -> Vec<(Role, ServerFrame)> {
    match &event.kind {
        EventKind::RoleAssigned { role, .. } => vec![(
            *role,
            ServerFrame::Paired {
                session_id: session.session_id.clone(),
                role: *role,
                caption: session.image.caption.clone(),
                image_url: match role {
                    Role::Answerer => session.image.image_url.clone(),
                    Role::Questioner => None,
                },
            },
        )],
        // The sender gets the same frame as an acknowledgement.
        EventKind::MessageDelivered { from, text, round, .. } => [from.partner(), *from]
            .into_iter()
            .map(|to| (to, ServerFrame::Message { from_role: *from, text: text.clone(), round: *round }))
            .collect(),
        EventKind::TurnRejected { role, reason } => {
            vec![(*role, ServerFrame::TurnRejected { reason: reason.clone() })]
        }
        EventKind::PartnerDisconnected { left } => vec![(left.partner(), ServerFrame::PartnerDisconnected)],
        EventKind::SoloPrompt { role } => {
            vec![(*role, ServerFrame::SoloPrompt { instructions: solo_instructions(*role).into() })]
        }
        EventKind::SessionComplete => {
            vec![(Role::Questioner, ServerFrame::SessionComplete), (Role::Answerer, ServerFrame::SessionComplete)]
        }
        // The solo worker's task is over either way.
        EventKind::SessionDiscarded { .. } => {
            vec![(Role::Questioner, ServerFrame::SessionComplete), (Role::Answerer, ServerFrame::SessionComplete)]
        }
        EventKind::Paired { .. } | EventKind::ImageRequeued { .. } => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image() -> ImageItem {
        ImageItem {
            image_id: "img1".into(),
            caption: "a dog on a couch".into(),
            image_url: Some("https://img.test/1.jpg".into()),
        }
    }

    fn session() -> ChatSession {
        ChatSession::start("s1", image(), "wq", "wa", 0).unwrap().0
    }

    fn kinds(events: &[SessionEvent]) -> Vec<&EventKind> {
        events.iter().map(|e| &e.kind).collect()
    }

    #[test]
    fn start_rejects_self_pairing() {
        assert_eq!(ChatSession::start("s", image(), "w", "w", 0).unwrap_err(), SessionError::SelfPairing);
        let (s, ev) = ChatSession::start("s", image(), "a", "b", 5).unwrap();
        assert_eq!(ev.iter().map(|e| e.seq).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(s.role_of("b"), Some(Role::Answerer));
    }

    #[test]
    fn question_then_answer() {
        let mut s = session();
        let ev = s.handle_message(Role::Questioner, "is it sunny?", 1).unwrap();
        assert_eq!(s.state, SessionState::AwaitingAnswer);
        assert!(matches!(ev[0].kind, EventKind::MessageDelivered { from: Role::Questioner, round: 1, .. }));
    }

    #[test]
    fn out_of_turn_is_rejected_without_change() {
        let mut s = session();
        s.handle_message(Role::Questioner, "q1", 1).unwrap();
        let before = s.transcript.clone();
        let ev = s.handle_message(Role::Questioner, "q again", 2).unwrap();
        assert!(matches!(ev[0].kind, EventKind::TurnRejected { role: Role::Questioner, .. }));
        assert_eq!(s.transcript, before);
        assert_eq!(s.state, SessionState::AwaitingAnswer);
        let ev = session().handle_message(Role::Answerer, "eager", 1).unwrap();
        assert!(matches!(ev[0].kind, EventKind::TurnRejected { role: Role::Answerer, .. }));
    }

    #[test]
    fn empty_and_terminal_messages() {
        let mut s = session();
        assert_eq!(s.handle_message(Role::Questioner, "  \n", 1), Err(SessionError::EmptyMessage));
        s.state = SessionState::Completed;
        assert_eq!(s.handle_message(Role::Questioner, "hi", 1), Err(SessionError::SessionNotLive));
    }

    fn run_full(s: &mut ChatSession) {
        for r in 1..=10 {
            s.handle_message(Role::Questioner, &format!("question {r}?"), r).unwrap();
            s.handle_message(Role::Answerer, &format!("answer {r}"), r).unwrap();
        }
    }

    #[test]
    fn twenty_messages_reach_completable() {
        let mut s = session();
        assert_eq!(s.complete(0).unwrap_err(), SessionError::NotCompletable);
        run_full(&mut s);
        assert_eq!(s.rounds_done, 10);
        assert_eq!(s.state, SessionState::Completable);
        assert_eq!(s.handle_message(Role::Questioner, "more?", 30), Err(SessionError::SessionNotLive));
        let (dialog, ev) = s.complete(31).unwrap();
        dialog.validate().unwrap();
        assert_eq!(dialog.rounds[9].answer, "answer 10");
        assert_eq!(dialog.image_url.as_deref(), Some("https://img.test/1.jpg"));
        assert_eq!(kinds(&ev), [&EventKind::SessionComplete]);
        assert_eq!(s.state, SessionState::Completed);
    }

    #[test]
    fn answerer_leaves_at_round_four() {
        let mut s = session();
        for r in 1..=3 {
            s.handle_message(Role::Questioner, "q", r).unwrap();
            s.handle_message(Role::Answerer, "a", r).unwrap();
        }
        s.handle_message(Role::Questioner, "q4", 4).unwrap();
        let ev = s.handle_disconnect(Role::Answerer, 5);
        assert_eq!(
            kinds(&ev),
            [
                &EventKind::PartnerDisconnected { left: Role::Answerer },
                &EventKind::SoloPrompt { role: Role::Questioner }
            ]
        );
        for i in 0..SOLO_QUOTA {
            assert!(!s.state.is_terminal());
            let ev = s.handle_message(Role::Questioner, &format!("solo {i}"), 6).unwrap();
            assert!(matches!(ev[0].kind, EventKind::MessageDelivered { solo: true, .. }));
        }
        assert_eq!(s.state, SessionState::Discarded);
        let last: Vec<_> = s.transcript.iter().filter(|t| t.solo).collect();
        assert_eq!(last.len(), 10);
    }

    #[test]
    fn disconnect_edge_cases() {
        let mut s = session();
        run_full(&mut s);
        s.complete(1).unwrap();
        assert!(s.handle_disconnect(Role::Answerer, 2).is_empty());
        assert_eq!(s.state, SessionState::Completed);

        let mut s = session();
        s.handle_disconnect(Role::Questioner, 1);
        assert!(s.handle_disconnect(Role::Questioner, 2).is_empty());
        let ev = s.handle_disconnect(Role::Answerer, 3);
        assert_eq!(s.state, SessionState::Discarded);
        assert!(matches!(ev[1].kind, EventKind::ImageRequeued { .. }));
        assert_eq!(s.handle_message(Role::Answerer, "x", 4), Err(SessionError::SessionNotLive));
    }

    #[test]
    fn questioner_frames_never_carry_url() {
        let (s, ev) = ChatSession::start("s", image(), "a", "b", 0).unwrap();
        let frames: Vec<(Role, ServerFrame)> = ev.iter().flat_map(|e| frames_for(&s, e)).collect();
        for (role, f) in frames {
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(json.contains("img.test"), role == Role::Answerer, "{json}");
        }
    }
}

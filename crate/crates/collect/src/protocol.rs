//! JSON frames exchanged over the worker websocket.
//!
//! Every frame is a single-line JSON object `{"seq": n, "type": ..., ...}`.

use serde::{Deserialize, Serialize};

use crate::session::Role;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientFrame {
    Join { worker_id: String },
    Message { text: String },
    Heartbeat,
    Leave,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientEnvelope {
    #[serde(default)]
    pub seq: u64,
    #[serde(flatten)]
    pub frame: ClientFrame,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Paired {
        session_id: String,
        role: Role,
        caption: String,
        /// Present only in the answerer's copy.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        image_url: Option<String>,
    },
    Message {
        from_role: Role,
        text: String,
        round: u32,
    },
    TurnRejected {
        reason: String,
    },
    PartnerDisconnected,
    SoloPrompt {
        instructions: String,
    },
    SessionComplete,
    Error {
        code: String,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerEnvelope {
    pub seq: u64,
    #[serde(flatten)]
    pub frame: ServerFrame,
}

impl ServerEnvelope {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("frame serialization cannot fail")
    }
}

pub fn parse_client_frame(text: &str) -> Result<ClientEnvelope, serde_json::Error> {
    serde_json::from_str(text)
}

//! Live two-person chat service that pairs crowd workers on an image and
//! records their question/answer rounds as dataset dialogs.
//!
//! [`session::ChatSession`] is a pure state machine; [`hub::Hub`] owns the
//! shared pool, image queue and connections; [`server`] exposes it over
//! HTTP and websockets; [`store`] persists events, dialogs and discarded
//! transcripts.

pub mod hub;
pub mod pool;
pub mod protocol;
pub mod server;
pub mod session;
pub mod sim;
pub mod store;

pub use hub::{Clock, Hub, HubConfig, HubError, HubStatus, ManualClock, SystemClock};
pub use protocol::{ClientEnvelope, ClientFrame, ServerEnvelope, ServerFrame};
pub use session::{ChatSession, ImageItem, Role, SessionEvent, SessionState};
pub use store::{FileStore, MemoryStore, Recovery, SessionStore};

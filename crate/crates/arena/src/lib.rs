//! Real-time arena: one live episode per session at a fixed tick, a
//! scripted or learned pursuer, and an evader driven by client commands
//! over WebSocket.
//!
//! * [`protocol`]: message envelopes and payloads.
//! * [`frame`]: state frames and the shipped JSON schema.
//! * [`session`]: the deterministic per-session state machine and replay.
//! * [`server`]: axum transport, ticker and fan-out.

pub mod frame;
pub mod protocol;
pub mod server;
pub mod session;

pub use frame::{Frame, FRAME_SCHEMA, FRAME_VERSION};
pub use protocol::{ClientMessage, Envelope, ServerMessage, PROTOCOL_VERSION, SUPPORTED_VERSIONS};
pub use server::{router, serve, ServeError, ServerOptions, DEFAULT_SESSION};
pub use session::{replay, ClientId, Session, SessionLog, SessionSetup};

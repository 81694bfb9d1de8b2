//! Wire messages. Every message in either direction is a JSON text frame of
//! the form `{"type": ..., "seq": ..., "payload": {...}}`.

use pposg_core::policies::PolicySpec;
use pposg_core::sim::EnvConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::frame::Frame;
use crate::session::SessionLog;

/// Protocol version this server speaks.
pub const PROTOCOL_VERSION: u32 = 1;
pub const SUPPORTED_VERSIONS: &[u32] = &[PROTOCOL_VERSION];

/// Raw envelope as read off the wire.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: String,
    pub seq: u64,
    #[serde(default)]
    pub payload: Value,
}

impl Envelope {
    pub fn new(kind: impl Into<String>, seq: u64, payload: Value) -> Self {
        Self {
            kind: kind.into(),
            seq,
            payload,
        }
    }

    /// Parses a text frame; the error text is sent back to the client.
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub version: u32,
}

/// Replaces the session setup and starts a new episode. Absent fields keep
/// their current values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Configure {
    #[serde(default)]
    pub arena: Option<EnvConfig>,
    #[serde(default)]
    pub pursuer: Option<PolicySpec>,
    #[serde(default)]
    pub belief_overlay: Option<bool>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reset {
    pub seed: u64,
}

/// Evader command, normalized to `[-1, 1]` per component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionMsg {
    pub u1: f64,
    pub u2: f64,
}

/// Client requests after decoding the payload.
#[derive(Clone, Debug, PartialEq)]
pub enum ClientMessage {
    Hello(Hello),
    Configure(Box<Configure>),
    Reset(Reset),
    Action(ActionMsg),
    Pause,
    Resume,
    /// Asks for the session log (setup, episode seed and applied actions).
    Log,
    Bye,
}

impl ClientMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::Hello(_) => "hello",
            ClientMessage::Configure(_) => "configure",
            ClientMessage::Reset(_) => "reset",
            ClientMessage::Action(_) => "action",
            ClientMessage::Pause => "pause",
            ClientMessage::Resume => "resume",
            ClientMessage::Log => "log",
            ClientMessage::Bye => "bye",
        }
    }

    /// Decodes the payload for the envelope's type.
    pub fn decode(env: &Envelope) -> Result<Self, String> {
        fn body<T: for<'de> Deserialize<'de>>(env: &Envelope) -> Result<T, String> {
            let v = if env.payload.is_null() {
                Value::Object(Default::default())
            } else {
                env.payload.clone()
            };
            serde_json::from_value(v).map_err(|e| format!("bad {} payload: {e}", env.kind))
        }
        fn empty(env: &Envelope) -> Result<(), String> {
            match &env.payload {
                Value::Null => Ok(()),
                Value::Object(m) if m.is_empty() => Ok(()),
                _ => Err(format!("{} takes an empty payload", env.kind)),
            }
        }
        Ok(match env.kind.as_str() {
            "hello" => ClientMessage::Hello(body(env)?),
            "configure" => ClientMessage::Configure(Box::new(body(env)?)),
            "reset" => ClientMessage::Reset(body(env)?),
            "action" => ClientMessage::Action(body(env)?),
            "pause" => empty(env).map(|_| ClientMessage::Pause)?,
            "resume" => empty(env).map(|_| ClientMessage::Resume)?,
            "log" => empty(env).map(|_| ClientMessage::Log)?,
            "bye" => empty(env).map(|_| ClientMessage::Bye)?,
            other => return Err(format!("unknown message type `{other}`")),
        })
    }
}

/// Acknowledgement of one client message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    /// Sequence number of the acknowledged message.
    pub ack: u64,
    /// Its type.
    pub of: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Extra data for some acknowledgements (hello, log).
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub data: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMsg {
    /// Sequence number of the offending message, when it could be read.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ack: Option<u64>,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supported_versions: Option<Vec<u32>>,
}

/// Server output before sequencing.
#[derive(Clone, Debug, PartialEq)]
pub enum ServerMessage {
    Ack(Ack),
    Error(ErrorMsg),
    Frame(Box<Frame>),
}

impl ServerMessage {
    pub fn ack(ack: u64, of: &str) -> Self {
        ServerMessage::Ack(Ack {
            ack,
            of: of.into(),
            warnings: Vec::new(),
            data: Value::Null,
        })
    }

    pub fn error(ack: Option<u64>, message: impl Into<String>) -> Self {
        ServerMessage::Error(ErrorMsg {
            ack,
            message: message.into(),
            supported_versions: None,
        })
    }

    pub fn log(ack: u64, log: &SessionLog) -> Self {
        ServerMessage::Ack(Ack {
            ack,
            of: "log".into(),
            warnings: Vec::new(),
            data: serde_json::to_value(log).expect("log serializes"),
        })
    }

    pub fn envelope(&self, seq: u64) -> Envelope {
        let (kind, payload) = match self {
            ServerMessage::Ack(a) => ("ack", serde_json::to_value(a)),
            ServerMessage::Error(e) => ("error", serde_json::to_value(e)),
            ServerMessage::Frame(f) => ("frame", serde_json::to_value(f)),
        };
        Envelope::new(kind, seq, payload.expect("server messages serialize"))
    }
}

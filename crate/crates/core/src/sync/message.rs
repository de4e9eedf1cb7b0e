// SPDX-License-Identifier: Apache-2.0

//! Wire vocabulary. Every message is one JSON object with exactly the
//! fields `type`, `sender`, `object_id`, `client_seq`, `server_seq` and
//! `payload`; the payload schema depends on `type`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::state::Snapshot;
use crate::volume::{CutoutShape, TransferFunction, WindowLevel};

/// `sender` of messages originated by the server (Welcome, Error).
pub const SERVER_SENDER: &str = "server";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectTransform {
    pub translation: [f64; 3],
    /// Unit quaternion `[w, x, y, z]`.
    pub rotation: [f64; 4],
    pub scale: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceView {
    /// `axial`, `coronal` or `sagittal`.
    pub axis: String,
    pub index: usize,
    #[serde(default)]
    pub level: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", deny_unknown_fields)]
pub enum Payload {
    Join {
        display_name: String,
        #[serde(default)]
        spectator: bool,
        /// Session to join; transports route on it, the default is used
        /// when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
        /// Palette colour assigned by the server (ignored on input).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        color: Option<String>,
    },
    Welcome {
        snapshot: Snapshot,
    },
    TransformUpdate(ObjectTransform),
    AnnotationBegin {
        stroke_id: String,
        /// Overrides the author's palette colour.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        color: Option<String>,
    },
    AnnotationAppend {
        stroke_id: String,
        /// World-frame points in millimetres.
        points: Vec<[f64; 3]>,
    },
    AnnotationEnd {
        stroke_id: String,
        /// Filled in by the server with the assembled stroke so that every
        /// receiver can fold the completed annotation without fragments.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        points: Option<Vec<[f64; 3]>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        color: Option<String>,
    },
    WhiteboardStroke {
        points: Vec<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        color: Option<String>,
    },
    CutoutUpdate {
        shape: CutoutShape,
    },
    TransferFunctionUpdate {
        transfer_function: TransferFunction,
    },
    WindowLevelUpdate(WindowLevel),
    SliceUpdate(SliceView),
    LayerUpdate {
        layer: u32,
    },
    VoiceActive {
        active: bool,
    },
    Leave {},
    /// Server → client rejection notice; never sequenced.
    Error {
        code: String,
        message: String,
    },
}

impl Payload {
    pub fn type_name(&self) -> &'static str {
        match self {
            Payload::Join { .. } => "Join",
            Payload::Welcome { .. } => "Welcome",
            Payload::TransformUpdate(_) => "TransformUpdate",
            Payload::AnnotationBegin { .. } => "AnnotationBegin",
            Payload::AnnotationAppend { .. } => "AnnotationAppend",
            Payload::AnnotationEnd { .. } => "AnnotationEnd",
            Payload::WhiteboardStroke { .. } => "WhiteboardStroke",
            Payload::CutoutUpdate { .. } => "CutoutUpdate",
            Payload::TransferFunctionUpdate { .. } => "TransferFunctionUpdate",
            Payload::WindowLevelUpdate(_) => "WindowLevelUpdate",
            Payload::SliceUpdate(_) => "SliceUpdate",
            Payload::LayerUpdate { .. } => "LayerUpdate",
            Payload::VoiceActive { .. } => "VoiceActive",
            Payload::Leave {} => "Leave",
            Payload::Error { .. } => "Error",
        }
    }

    /// Types whose state is keyed by `object_id`, which must be present.
    pub fn requires_object_id(&self) -> bool {
        matches!(self, Payload::TransformUpdate(_) | Payload::CutoutUpdate { .. })
    }

    /// Types only the server may originate.
    pub fn is_server_only(&self) -> bool {
        matches!(self, Payload::Welcome { .. } | Payload::Error { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncMessage {
    pub sender: String,
    pub object_id: Option<String>,
    /// Strictly increasing per sender within one connection.
    pub client_seq: u64,
    /// Assigned by the server; absent on client submissions.
    pub server_seq: Option<u64>,
    pub payload: Payload,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("missing or invalid field `{0}`")]
    Field(&'static str),
    #[error("invalid payload for {kind}: {reason}")]
    Payload { kind: String, reason: String },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMessage {
    #[serde(rename = "type")]
    kind: String,
    sender: String,
    #[serde(default)]
    object_id: Option<String>,
    #[serde(default)]
    client_seq: u64,
    #[serde(default)]
    server_seq: Option<u64>,
    #[serde(default)]
    payload: Value,
}

impl SyncMessage {
    pub fn new(sender: impl Into<String>, client_seq: u64, payload: Payload) -> Self {
        Self {
            sender: sender.into(),
            object_id: None,
            client_seq,
            server_seq: None,
            payload,
        }
    }

    pub fn with_object(mut self, object_id: impl Into<String>) -> Self {
        self.object_id = Some(object_id.into());
        self
    }

    pub fn type_name(&self) -> &'static str {
        self.payload.type_name()
    }

    pub fn to_json(&self) -> String {
        let tagged = serde_json::to_value(&self.payload).expect("payload serialises");
        let payload = tagged.get("payload").cloned().unwrap_or_else(|| json!({}));
        let raw = RawMessage {
            kind: self.type_name().to_string(),
            sender: self.sender.clone(),
            object_id: self.object_id.clone(),
            client_seq: self.client_seq,
            server_seq: self.server_seq,
            payload,
        };
        serde_json::to_string(&raw).expect("message serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, WireError> {
        let value: Value = serde_json::from_str(text).map_err(|e| WireError::Malformed(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| WireError::Malformed("expected a JSON object".into()))?;
        if !obj.get("type").is_some_and(Value::is_string) {
            return Err(WireError::Field("type"));
        }
        if !obj.get("sender").is_some_and(Value::is_string) {
            return Err(WireError::Field("sender"));
        }
        if obj.get("client_seq").is_some_and(|v| !v.is_u64()) {
            return Err(WireError::Field("client_seq"));
        }
        if obj.get("server_seq").is_some_and(|v| !(v.is_u64() || v.is_null())) {
            return Err(WireError::Field("server_seq"));
        }
        if obj.get("object_id").is_some_and(|v| !(v.is_string() || v.is_null())) {
            return Err(WireError::Field("object_id"));
        }
        let raw: RawMessage = serde_json::from_value(value).map_err(|e| WireError::Malformed(e.to_string()))?;
        let payload_value = match raw.payload {
            Value::Null => json!({}),
            v => v,
        };
        let payload: Payload =
            serde_json::from_value(json!({"type": raw.kind, "payload": payload_value})).map_err(|e| {
                WireError::Payload {
                    kind: raw.kind.clone(),
                    reason: e.to_string(),
                }
            })?;
        if payload.requires_object_id() && raw.object_id.is_none() {
            return Err(WireError::Field("object_id"));
        }
        Ok(Self {
            sender: raw.sender,
            object_id: raw.object_id,
            client_seq: raw.client_seq,
            server_seq: raw.server_seq,
            payload,
        })
    }
}

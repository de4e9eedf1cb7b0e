// SPDX-License-Identifier: Apache-2.0

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::message::{Payload, SyncMessage, SERVER_SENDER};
use super::state::{SessionState, Snapshot};
use crate::volume::Axis;

/// Colours handed out at Join, first unused first.
pub const PALETTE: [&str; 10] = [
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4", "#f032e6", "#bfef45", "#fabed4", "#469990",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyncError {
    #[error("sender `{0}` has not joined")]
    NotJoined(String),
    #[error("stale client_seq {got} from `{sender}` (last {last})")]
    StaleClientSeq { sender: String, got: u64, last: u64 },
    #[error("client id `{0}` is already connected")]
    DuplicateClientId(String),
    #[error("stroke id `{0}` already used in this session")]
    DuplicateStrokeId(String),
    #[error("stroke `{0}` is not open")]
    UnknownStroke(String),
    #[error("session is full ({0} clients)")]
    SessionFull(usize),
    #[error("{0} messages are server-only")]
    ServerOnly(&'static str),
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
}

impl SyncError {
    /// Short machine-readable code used in Error messages.
    pub fn code(&self) -> &'static str {
        match self {
            SyncError::NotJoined(_) => "NotJoined",
            SyncError::StaleClientSeq { .. } => "StaleClientSeq",
            SyncError::DuplicateClientId(_) => "DuplicateClientId",
            SyncError::DuplicateStrokeId(_) => "DuplicateStrokeId",
            SyncError::UnknownStroke(_) => "UnknownStroke",
            SyncError::SessionFull(_) => "SessionFull",
            SyncError::ServerOnly(_) => "ServerOnly",
            SyncError::InvalidPayload(_) => "InvalidPayload",
        }
    }

    pub fn to_message(&self, recipient_seq: u64) -> SyncMessage {
        SyncMessage::new(
            SERVER_SENDER,
            recipient_seq,
            Payload::Error {
                code: self.code().to_string(),
                message: self.to_string(),
            },
        )
    }
}

/// Rejected messages by cause; none of them are fatal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropCounters {
    pub stale: u64,
    pub not_joined: u64,
    pub unknown_stroke: u64,
    pub duplicate_stroke: u64,
    pub invalid: u64,
}

/// Result of sequencing one message.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// The message with its `server_seq`; the sender receives it as the ack.
    pub sequenced: SyncMessage,
    /// Every other joined client.
    pub multicast: Vec<String>,
    /// For a Join: the Welcome for the joiner, to be delivered before the
    /// sequenced Join itself.
    pub welcome: Option<SyncMessage>,
}

#[derive(Debug, Clone)]
struct OpenStroke {
    owner: String,
    color: String,
    points: Vec<[f64; 3]>,
}

/// Authoritative per-session sequencer. All calls for one session must be
/// serialised by the owner; that order defines `server_seq`.
#[derive(Debug, Clone, Default)]
pub struct Session {
    state: SessionState,
    last_client_seq: HashMap<String, u64>,
    open_strokes: HashMap<String, OpenStroke>,
    used_stroke_ids: HashSet<String>,
    max_clients: Option<usize>,
    counters: DropCounters,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_max_clients(max_clients: usize) -> Self {
        Self {
            max_clients: Some(max_clients),
            ..Self::default()
        }
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn counters(&self) -> DropCounters {
        self.counters
    }

    pub fn last_server_seq(&self) -> u64 {
        self.state.last_server_seq
    }

    pub fn is_joined(&self, client: &str) -> bool {
        self.state.clients.contains_key(client)
    }

    pub fn clients(&self) -> impl Iterator<Item = &str> {
        self.state.clients.keys().map(String::as_str)
    }

    pub fn make_snapshot(&self) -> Snapshot {
        self.state.snapshot()
    }

    /// Arrival checks: the sender must have joined (unless joining) and
    /// `client_seq` must exceed the sender's previous one. Records the
    /// new `client_seq` on success.
    pub fn admit(&mut self, msg: &SyncMessage) -> Result<(), SyncError> {
        if msg.payload.is_server_only() {
            self.counters.invalid += 1;
            return Err(SyncError::ServerOnly(msg.type_name()));
        }
        let joining = matches!(msg.payload, Payload::Join { .. });
        if joining {
            if self.is_joined(&msg.sender) {
                self.counters.invalid += 1;
                return Err(SyncError::DuplicateClientId(msg.sender.clone()));
            }
            if let Some(max) = self.max_clients {
                if self.state.clients.len() >= max {
                    self.counters.invalid += 1;
                    return Err(SyncError::SessionFull(max));
                }
            }
            self.last_client_seq.insert(msg.sender.clone(), msg.client_seq);
            return Ok(());
        }
        if !self.is_joined(&msg.sender) {
            self.counters.not_joined += 1;
            return Err(SyncError::NotJoined(msg.sender.clone()));
        }
        let last = self.last_client_seq.get(&msg.sender).copied().unwrap_or(0);
        if msg.client_seq <= last {
            self.counters.stale += 1;
            return Err(SyncError::StaleClientSeq {
                sender: msg.sender.clone(),
                got: msg.client_seq,
                last,
            });
        }
        self.last_client_seq.insert(msg.sender.clone(), msg.client_seq);
        Ok(())
    }

    /// Validates an admitted message against session state, assigns the
    /// next `server_seq` and folds it.
    pub fn sequence(&mut self, mut msg: SyncMessage) -> Result<Outcome, SyncError> {
        let joining = matches!(msg.payload, Payload::Join { .. });
        if !joining && !self.is_joined(&msg.sender) {
            self.counters.not_joined += 1;
            return Err(SyncError::NotJoined(msg.sender.clone()));
        }
        if let Err(e) = self.prepare(&mut msg) {
            match e {
                SyncError::UnknownStroke(_) => self.counters.unknown_stroke += 1,
                SyncError::DuplicateStrokeId(_) => self.counters.duplicate_stroke += 1,
                _ => self.counters.invalid += 1,
            }
            return Err(e);
        }
        let welcome = joining.then(|| {
            SyncMessage::new(
                SERVER_SENDER,
                0,
                Payload::Welcome {
                    snapshot: self.make_snapshot(),
                },
            )
        });
        msg.server_seq = Some(self.state.last_server_seq + 1);
        self.state.apply(&msg);
        let multicast = self
            .state
            .clients
            .keys()
            .filter(|c| **c != msg.sender)
            .cloned()
            .collect();
        Ok(Outcome {
            sequenced: msg,
            multicast,
            welcome,
        })
    }

    pub fn handle_message(&mut self, msg: SyncMessage) -> Result<Outcome, SyncError> {
        self.admit(&msg)?;
        self.sequence(msg)
    }

    /// Connection loss: discards the client's open strokes and sequences a
    /// Leave on its behalf. `None` if the client had not joined.
    pub fn disconnect(&mut self, client: &str) -> Option<Outcome> {
        if !self.is_joined(client) {
            return None;
        }
        let seq = self.last_client_seq.get(client).copied().unwrap_or(0) + 1;
        self.handle_message(SyncMessage::new(client, seq, Payload::Leave {}))
            .ok()
    }

    fn palette_color(&self) -> String {
        let used: HashSet<&str> = self.state.clients.values().map(|c| c.color.as_str()).collect();
        PALETTE
            .iter()
            .find(|c| !used.contains(*c))
            .copied()
            .unwrap_or(PALETTE[self.state.clients.len() % PALETTE.len()])
            .to_string()
    }

    /// Type-specific validation and server-side enrichment.
    fn prepare(&mut self, msg: &mut SyncMessage) -> Result<(), SyncError> {
        if msg.payload.requires_object_id() && msg.object_id.is_none() {
            return Err(SyncError::InvalidPayload(format!(
                "{} needs object_id",
                msg.type_name()
            )));
        }
        let sender = msg.sender.clone();
        match &mut msg.payload {
            Payload::Join { color, .. } => {
                *color = Some(self.palette_color());
            }
            Payload::Leave {} => {
                self.open_strokes.retain(|_, s| s.owner != sender);
            }
            Payload::TransformUpdate(t) => {
                let finite = t
                    .translation
                    .iter()
                    .chain(&t.rotation)
                    .chain(&t.scale)
                    .all(|v| v.is_finite());
                let norm = t.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !finite || norm == 0.0 || t.scale.iter().any(|s| *s <= 0.0) {
                    return Err(SyncError::InvalidPayload("transform".into()));
                }
            }
            Payload::CutoutUpdate { shape } => {
                shape.validate().map_err(|e| SyncError::InvalidPayload(e.to_string()))?;
            }
            Payload::SliceUpdate(s) => {
                if Axis::parse(&s.axis).is_none() {
                    return Err(SyncError::InvalidPayload(format!("unknown axis `{}`", s.axis)));
                }
            }
            Payload::WindowLevelUpdate(wl) => {
                if !(wl.center.is_finite() && wl.width.is_finite() && wl.width > 0.0) {
                    return Err(SyncError::InvalidPayload("window".into()));
                }
            }
            Payload::AnnotationBegin { stroke_id, color } => {
                if !self.used_stroke_ids.insert(stroke_id.clone()) {
                    return Err(SyncError::DuplicateStrokeId(stroke_id.clone()));
                }
                let color = color
                    .clone()
                    .unwrap_or_else(|| self.state.clients[&sender].color.clone());
                self.open_strokes.insert(
                    stroke_id.clone(),
                    OpenStroke {
                        owner: sender,
                        color,
                        points: Vec::new(),
                    },
                );
            }
            Payload::AnnotationAppend { stroke_id, points } => match self.open_strokes.get_mut(stroke_id) {
                Some(s) if s.owner == sender => s.points.extend_from_slice(points),
                _ => return Err(SyncError::UnknownStroke(stroke_id.clone())),
            },
            Payload::AnnotationEnd {
                stroke_id,
                points,
                color,
            } => match self.open_strokes.get(stroke_id) {
                Some(s) if s.owner == sender => {
                    let s = self.open_strokes.remove(stroke_id).expect("present");
                    *points = Some(s.points);
                    *color = Some(s.color);
                }
                _ => return Err(SyncError::UnknownStroke(stroke_id.clone())),
            },
            Payload::WhiteboardStroke { color, .. } => {
                if color.is_none() {
                    *color = Some(self.state.clients[&sender].color.clone());
                }
            }
            Payload::TransferFunctionUpdate { .. } | Payload::LayerUpdate { .. } | Payload::VoiceActive { .. } => {}
            Payload::Welcome { .. } | Payload::Error { .. } => {
                return Err(SyncError::ServerOnly(msg.payload.type_name()));
            }
        }
        Ok(())
    }
}

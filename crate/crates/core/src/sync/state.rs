// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::message::{ObjectTransform, Payload, SliceView, SyncMessage};
use crate::volume::{CutoutShape, TransferFunction, WindowLevel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientInfo {
    pub display_name: String,
    pub spectator: bool,
    pub voice_active: bool,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub author: String,
    pub color: String,
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhiteboardEntry {
    pub author: String,
    pub color: String,
    pub points: Vec<[f64; 2]>,
}

/// Shared view settings, each keyed by `object_id` (empty when the update
/// carries none).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViewState {
    pub transfer_function: BTreeMap<String, TransferFunction>,
    pub window_level: BTreeMap<String, WindowLevel>,
    pub slice: BTreeMap<String, SliceView>,
    pub layer: BTreeMap<String, u32>,
}

/// Observable session state. Only completed annotations appear here;
/// in-flight strokes live with the authoritative session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub objects: BTreeMap<String, ObjectTransform>,
    pub cutouts: BTreeMap<String, CutoutShape>,
    pub view: ViewState,
    pub annotations: BTreeMap<String, Annotation>,
    pub whiteboard: Vec<WhiteboardEntry>,
    pub clients: BTreeMap<String, ClientInfo>,
    pub last_server_seq: u64,
}

/// Compacted session state handed to late joiners.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub last_server_seq: u64,
    pub state: SessionState,
}

impl SessionState {
    /// Folds one sequenced message. Messages must arrive in `server_seq`
    /// order; unsequenced and server-only messages are ignored.
    pub fn apply(&mut self, msg: &SyncMessage) {
        let Some(seq) = msg.server_seq else {
            return;
        };
        let key = || msg.object_id.clone().unwrap_or_default();
        let author_color = |clients: &BTreeMap<String, ClientInfo>| {
            clients.get(&msg.sender).map(|c| c.color.clone()).unwrap_or_default()
        };
        match &msg.payload {
            Payload::Join {
                display_name,
                spectator,
                color,
                ..
            } => {
                self.clients.insert(
                    msg.sender.clone(),
                    ClientInfo {
                        display_name: display_name.clone(),
                        spectator: *spectator,
                        voice_active: false,
                        color: color.clone().unwrap_or_default(),
                    },
                );
            }
            Payload::Leave {} => {
                self.clients.remove(&msg.sender);
            }
            Payload::TransformUpdate(t) => {
                self.objects.insert(key(), t.clone());
            }
            Payload::CutoutUpdate { shape } => {
                self.cutouts.insert(key(), shape.clone());
            }
            Payload::TransferFunctionUpdate { transfer_function } => {
                self.view.transfer_function.insert(key(), transfer_function.clone());
            }
            Payload::WindowLevelUpdate(wl) => {
                self.view.window_level.insert(key(), *wl);
            }
            Payload::SliceUpdate(s) => {
                self.view.slice.insert(key(), s.clone());
            }
            Payload::LayerUpdate { layer } => {
                self.view.layer.insert(key(), *layer);
            }
            Payload::AnnotationEnd {
                stroke_id,
                points: Some(points),
                color,
            } => {
                let color = color.clone().unwrap_or_else(|| author_color(&self.clients));
                self.annotations.insert(
                    stroke_id.clone(),
                    Annotation {
                        author: msg.sender.clone(),
                        color,
                        points: points.clone(),
                    },
                );
            }
            Payload::WhiteboardStroke { points, color } => {
                let color = color.clone().unwrap_or_else(|| author_color(&self.clients));
                self.whiteboard.push(WhiteboardEntry {
                    author: msg.sender.clone(),
                    color,
                    points: points.clone(),
                });
            }
            Payload::VoiceActive { active } => {
                if let Some(c) = self.clients.get_mut(&msg.sender) {
                    c.voice_active = *active;
                }
            }
            Payload::AnnotationBegin { .. }
            | Payload::AnnotationAppend { .. }
            | Payload::AnnotationEnd { points: None, .. }
            | Payload::Welcome { .. }
            | Payload::Error { .. } => {}
        }
        self.last_server_seq = seq;
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            last_server_seq: self.last_server_seq,
            state: self.clone(),
        }
    }

    pub fn from_snapshot(snapshot: &Snapshot) -> Self {
        let mut state = snapshot.state.clone();
        state.last_server_seq = snapshot.last_server_seq;
        state
    }
}

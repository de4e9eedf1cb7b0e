// SPDX-License-Identifier: Apache-2.0

//! Deterministic multi-client session simulation.
//!
//! Each client produces a randomised update stream; the streams are
//! interleaved at random (per-connection order is kept, as over TCP), pushed
//! through the JSON wire encoding, folded by the authoritative session and
//! delivered to every client replica. Shared by the sync tests and the
//! acceptance suite.

#![allow(dead_code)]

use std::collections::BTreeMap;

use amdt_core::sync::{ClientReplica, ObjectTransform, Payload, Session, SliceView, SyncMessage};
use amdt_core::volume::{ControlPoint, CutoutMode, CutoutShape, ShapeGeometry, TransferFunction, WindowLevel};
use amdt_core::SessionState;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const OBJECTS: [&str; 4] = ["volume", "prescribed", "machine", "images"];

/// One client's outgoing stream.
pub struct ClientScript {
    pub id: String,
    seq: u64,
    strokes: u64,
    open_stroke: Option<String>,
    joined: bool,
}

impl ClientScript {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            seq: 0,
            strokes: 0,
            open_stroke: None,
            joined: false,
        }
    }

    fn msg(&mut self, payload: Payload) -> SyncMessage {
        self.seq += 1;
        SyncMessage::new(self.id.clone(), self.seq, payload)
    }

    pub fn join(&mut self, spectator: bool) -> SyncMessage {
        self.joined = true;
        let name = self.id.to_uppercase();
        self.msg(Payload::Join {
            display_name: name,
            spectator,
            session: None,
            color: None,
        })
    }

    /// Next random message. Occasionally leaves and rejoins.
    pub fn next(&mut self, rng: &mut ChaCha8Rng) -> SyncMessage {
        if !self.joined {
            return self.join(rng.random_bool(0.3));
        }
        let coord = |rng: &mut ChaCha8Rng| rng.random_range(-50.0..50.0);
        let object = OBJECTS[rng.random_range(0..OBJECTS.len())];
        match rng.random_range(0..100) {
            0..=29 => {
                let (roll, pitch, yaw) = (coord(rng) / 20.0, coord(rng) / 40.0, coord(rng) / 20.0);
                let q = nalgebra::UnitQuaternion::from_euler_angles(roll, pitch, yaw);
                let q = q.quaternion();
                self.msg(Payload::TransformUpdate(ObjectTransform {
                    translation: [coord(rng), coord(rng), coord(rng)],
                    rotation: [q.w, q.i, q.j, q.k],
                    scale: [rng.random_range(0.5..2.0); 3],
                }))
                .with_object(object)
            }
            30..=37 => {
                let mode = if rng.random_bool(0.5) {
                    CutoutMode::Inclusive
                } else {
                    CutoutMode::Exclusive
                };
                let geometry = match rng.random_range(0..3) {
                    0 => ShapeGeometry::Plane {
                        point: [coord(rng), coord(rng), coord(rng)],
                        normal: [0.0, 0.0, 1.0],
                    },
                    1 => ShapeGeometry::Sphere {
                        center: [coord(rng), coord(rng), coord(rng)],
                        radius: rng.random_range(0.5..20.0),
                    },
                    _ => ShapeGeometry::Box {
                        center: [coord(rng), coord(rng), coord(rng)],
                        half_extents: [rng.random_range(0.5..10.0); 3],
                        rotation: [1.0, 0.0, 0.0, 0.0],
                    },
                };
                self.msg(Payload::CutoutUpdate {
                    shape: CutoutShape::new(geometry, mode).unwrap(),
                })
                .with_object(object)
            }
            38..=42 => {
                let mid = rng.random_range(0.05..0.95);
                let tf = TransferFunction::new(vec![
                    ControlPoint {
                        scalar: 0.0,
                        rgba: [0.0; 4],
                    },
                    ControlPoint {
                        scalar: mid,
                        rgba: [rng.random(), rng.random(), rng.random(), rng.random()],
                    },
                    ControlPoint {
                        scalar: 1.0,
                        rgba: [1.0; 4],
                    },
                ])
                .unwrap();
                self.msg(Payload::TransferFunctionUpdate { transfer_function: tf })
                    .with_object("volume")
            }
            43..=49 => self
                .msg(Payload::WindowLevelUpdate(
                    WindowLevel::new(rng.random_range(0.0..255.0), rng.random_range(1.0..255.0)).unwrap(),
                ))
                .with_object("volume"),
            50..=56 => {
                let axis = ["axial", "coronal", "sagittal"][rng.random_range(0..3)].to_string();
                self.msg(Payload::SliceUpdate(SliceView {
                    axis,
                    index: rng.random_range(0..128),
                    level: rng.random_range(0..3),
                }))
            }
            57..=61 => self.msg(Payload::LayerUpdate {
                layer: rng.random_range(0..100),
            }),
            62..=65 => self.msg(Payload::VoiceActive {
                active: rng.random_bool(0.5),
            }),
            66..=70 => {
                let n = rng.random_range(1..6);
                let points = (0..n).map(|_| [coord(rng), coord(rng)]).collect();
                let color = rng.random_bool(0.2).then(|| "#123456".to_string());
                self.msg(Payload::WhiteboardStroke { points, color })
            }
            71..=98 => self.stroke_step(rng),
            _ => {
                // Leave; the next message rejoins.
                self.joined = false;
                self.open_stroke = None;
                self.msg(Payload::Leave {})
            }
        }
    }

    fn stroke_step(&mut self, rng: &mut ChaCha8Rng) -> SyncMessage {
        match self.open_stroke.clone() {
            None => {
                self.strokes += 1;
                let stroke_id = format!("{}-{}", self.id, self.strokes);
                self.open_stroke = Some(stroke_id.clone());
                let color = rng.random_bool(0.3).then(|| "#abcdef".to_string());
                self.msg(Payload::AnnotationBegin { stroke_id, color })
            }
            Some(stroke_id) if rng.random_bool(0.7) => {
                let n = rng.random_range(1..4);
                let points = (0..n)
                    .map(|_| {
                        [
                            rng.random_range(-5.0..5.0),
                            rng.random_range(-5.0..5.0),
                            rng.random_range(0.0..25.0),
                        ]
                    })
                    .collect();
                self.msg(Payload::AnnotationAppend { stroke_id, points })
            }
            Some(stroke_id) => {
                self.open_stroke = None;
                self.msg(Payload::AnnotationEnd {
                    stroke_id,
                    points: None,
                    color: None,
                })
            }
        }
    }
}

/// Authoritative session plus one replica per connected client.
#[derive(Default)]
pub struct Harness {
    pub session: Session,
    pub replicas: BTreeMap<String, ClientReplica>,
    /// Every sequenced message, in server order.
    pub log: Vec<SyncMessage>,
    pub rejected: usize,
}

impl Harness {
    pub fn new() -> Self {
        Self::default()
    }

    /// Submits one client message over the wire encoding and delivers the
    /// outcome to the replicas.
    pub fn submit(&mut self, msg: &SyncMessage) {
        let wire = SyncMessage::from_json(&msg.to_json()).expect("client message round-trips");
        assert_eq!(&wire, msg);
        match self.session.handle_message(wire) {
            Ok(outcome) => {
                let seq = outcome.sequenced.server_seq.unwrap();
                assert_eq!(seq, self.log.len() as u64 + 1, "server_seq has no gaps");
                let sequenced = SyncMessage::from_json(&outcome.sequenced.to_json()).unwrap();
                if let Some(welcome) = &outcome.welcome {
                    let welcome = SyncMessage::from_json(&welcome.to_json()).unwrap();
                    let mut replica = ClientReplica::new();
                    replica.receive(&welcome).unwrap();
                    self.replicas.insert(msg.sender.clone(), replica);
                }
                if matches!(sequenced.payload, Payload::Leave {}) {
                    self.replicas.remove(&msg.sender);
                } else {
                    // Acknowledgement to the sender.
                    self.replicas
                        .get_mut(&msg.sender)
                        .expect("sender has a replica")
                        .receive(&sequenced)
                        .expect("ack is in order");
                }
                for peer in &outcome.multicast {
                    self.replicas
                        .get_mut(peer)
                        .expect("peer has a replica")
                        .receive(&sequenced)
                        .expect("multicast is in order");
                }
                self.log.push(sequenced);
            }
            Err(_) => self.rejected += 1,
        }
    }

    pub fn replay(&self) -> SessionState {
        let mut state = SessionState::default();
        for m in &self.log {
            state.apply(m);
        }
        state
    }

    /// True when every replica equals the authoritative state.
    pub fn converged(&self) -> bool {
        self.replicas.values().all(|r| r.state() == Some(self.session.state()))
    }
}

/// Per-client random streams interleaved at random, keeping each client's
/// own order. Every client joins first.
pub fn interleaved_workload(seed: u64, clients: usize, messages: usize) -> Vec<SyncMessage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scripts: Vec<ClientScript> = (0..clients).map(|i| ClientScript::new(format!("c{i}"))).collect();
    let mut out: Vec<SyncMessage> = scripts.iter_mut().map(|s| s.join(false)).collect();
    // Arrival order: a shuffled sequence of senders, each draining its own
    // stream in order.
    let mut owners: Vec<usize> = (0..messages.saturating_sub(clients)).map(|i| i % clients).collect();
    owners.shuffle(&mut rng);
    for c in owners {
        out.push(scripts[c].next(&mut rng));
    }
    out
}

// SPDX-License-Identifier: Apache-2.0

//! Collaborative session protocol.
//!
//! One authoritative [`Session`] per session name totally orders client
//! messages by assigning `server_seq`, folds each into a [`SessionState`]
//! and multicasts it. Clients fold the same sequenced stream through the
//! same [`SessionState::apply`], so any two clients that have seen the same
//! prefix hold identical state. Late joiners start from a [`Snapshot`],
//! which holds only live state: the latest value per object/view key,
//! completed annotations, whiteboard strokes and the roster.

mod coalesce;
mod message;
mod replica;
mod session;
mod state;

pub use coalesce::{Coalescer, TRANSFORM_RATE_HZ};
pub use message::{ObjectTransform, Payload, SliceView, SyncMessage, WireError, SERVER_SENDER};
pub use replica::{ClientReplica, ReplicaError};
pub use session::{DropCounters, Outcome, Session, SyncError, PALETTE};
pub use state::{Annotation, ClientInfo, SessionState, Snapshot, ViewState, WhiteboardEntry};

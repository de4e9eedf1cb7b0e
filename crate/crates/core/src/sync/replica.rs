// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

use super::message::{Payload, SyncMessage};
use super::state::SessionState;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplicaError {
    #[error("no Welcome received yet")]
    NotWelcomed,
    #[error("gap: expected server_seq {expected}, got {got}")]
    Gap { expected: u64, got: u64 },
    #[error("duplicate server_seq {0}")]
    Duplicate(u64),
}

/// Client-side copy of the session state, fed by Welcome and then by the
/// sequenced stream. Rejects gaps and duplicates.
#[derive(Debug, Clone, Default)]
pub struct ClientReplica {
    state: Option<SessionState>,
    received: u64,
}

impl ClientReplica {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> Option<&SessionState> {
        self.state.as_ref()
    }

    /// Sequenced messages applied since the Welcome.
    pub fn received(&self) -> u64 {
        self.received
    }

    pub fn receive(&mut self, msg: &SyncMessage) -> Result<(), ReplicaError> {
        if let Payload::Welcome { snapshot } = &msg.payload {
            self.state = Some(SessionState::from_snapshot(snapshot));
            return Ok(());
        }
        let Some(seq) = msg.server_seq else {
            // Errors and other unsequenced notices carry no state.
            return Ok(());
        };
        let state = self.state.as_mut().ok_or(ReplicaError::NotWelcomed)?;
        let expected = state.last_server_seq + 1;
        if seq < expected {
            return Err(ReplicaError::Duplicate(seq));
        }
        if seq > expected {
            return Err(ReplicaError::Gap { expected, got: seq });
        }
        state.apply(msg);
        self.received += 1;
        Ok(())
    }
}

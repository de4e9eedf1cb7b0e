// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;
use std::time::{Duration, Instant};

use super::message::{Payload, SyncMessage};

/// Transform updates admitted per (sender, object) per second.
pub const TRANSFORM_RATE_HZ: u32 = 20;

/// Rate limiter for TransformUpdate. Within one interval only the first
/// update for a (sender, object) passes; later ones replace a pending
/// update that is released when the interval ends. Other types pass
/// through untouched.
#[derive(Debug, Clone)]
pub struct Coalescer {
    interval: Duration,
    last_emit: HashMap<(String, String), Instant>,
    pending: HashMap<(String, String), SyncMessage>,
}

impl Default for Coalescer {
    fn default() -> Self {
        Self::new(TRANSFORM_RATE_HZ)
    }
}

impl Coalescer {
    pub fn new(rate_hz: u32) -> Self {
        Self {
            interval: Duration::from_secs(1) / rate_hz.max(1),
            last_emit: HashMap::new(),
            pending: HashMap::new(),
        }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    fn key(msg: &SyncMessage) -> Option<(String, String)> {
        match (&msg.payload, &msg.object_id) {
            (Payload::TransformUpdate(_), Some(obj)) => Some((msg.sender.clone(), obj.clone())),
            _ => None,
        }
    }

    /// Returns the message if it may be sequenced now.
    pub fn offer(&mut self, msg: SyncMessage, now: Instant) -> Option<SyncMessage> {
        let Some(key) = Self::key(&msg) else {
            return Some(msg);
        };
        match self.last_emit.get(&key) {
            Some(&t) if now.duration_since(t) < self.interval => {
                self.pending.insert(key, msg);
                None
            }
            _ => {
                self.pending.remove(&key);
                self.last_emit.insert(key, now);
                Some(msg)
            }
        }
    }

    /// Pending updates whose interval has elapsed, oldest sender/object
    /// order unspecified.
    pub fn flush_due(&mut self, now: Instant) -> Vec<SyncMessage> {
        let due: Vec<(String, String)> = self
            .pending
            .keys()
            .filter(|k| {
                self.last_emit
                    .get(*k)
                    .is_none_or(|&t| now.duration_since(t) >= self.interval)
            })
            .cloned()
            .collect();
        let mut out: Vec<SyncMessage> = due
            .into_iter()
            .map(|k| {
                self.last_emit.insert(k.clone(), now);
                self.pending.remove(&k).expect("pending")
            })
            .collect();
        out.sort_by_key(|m| m.client_seq);
        out
    }

    /// Earliest time a pending update becomes due.
    pub fn next_deadline(&self) -> Option<Instant> {
        self.pending
            .keys()
            .filter_map(|k| self.last_emit.get(k))
            .map(|&t| t + self.interval)
            .min()
    }

    /// Drops everything held for a sender (on disconnect).
    pub fn forget_sender(&mut self, sender: &str) {
        self.pending.retain(|k, _| k.0 != sender);
        self.last_emit.retain(|k, _| k.0 != sender);
    }
}

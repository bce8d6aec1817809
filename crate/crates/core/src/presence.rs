//! Ephemeral per-wizard awareness: caret, selection, pointer and name flag.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crdt::Anchor;

pub const DEFAULT_TTL_MS: u64 = 30_000;

/// Document-relative pointer position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pointer {
    pub line: u32,
    pub column: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PresencePayload {
    #[serde(default)]
    pub actor_id: String,
    #[serde(default)]
    pub display_name: String,
    #[serde(default)]
    pub color: String,
    pub caret: Anchor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<(Anchor, Anchor)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointer: Option<Pointer>,
    pub seq: u64,
    /// Stamped by the server on receipt.
    #[serde(default)]
    pub expires_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("stale presence seq {got} for {actor_id} (have {have})")]
pub struct StaleSeq {
    pub actor_id: String,
    pub have: u64,
    pub got: u64,
}

#[derive(Debug, Clone, Default)]
pub struct PresenceState {
    entries: BTreeMap<String, PresencePayload>,
    /// Highest seq ever seen per actor; survives expiry so a delayed old
    /// update cannot bring a flag back.
    high_water: BTreeMap<String, u64>,
    stale_dropped: u64,
}

impl PresenceState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, payload: PresencePayload) -> Result<(), StaleSeq> {
        if let Some(&have) = self.high_water.get(&payload.actor_id) {
            if payload.seq <= have {
                self.stale_dropped += 1;
                return Err(StaleSeq {
                    actor_id: payload.actor_id,
                    have,
                    got: payload.seq,
                });
            }
        }
        self.high_water.insert(payload.actor_id.clone(), payload.seq);
        self.entries.insert(payload.actor_id.clone(), payload);
        Ok(())
    }

    /// Drops payloads with `expires_at < now`; returns the removed actors.
    pub fn expire(&mut self, now: u64) -> Vec<String> {
        let gone: Vec<String> = self
            .entries
            .iter()
            .filter(|(_, p)| p.expires_at < now)
            .map(|(a, _)| a.clone())
            .collect();
        for actor in &gone {
            self.entries.remove(actor);
        }
        gone
    }

    /// Live payloads at `now`, ordered by actor id.
    pub fn snapshot(&self, now: u64) -> Vec<PresencePayload> {
        self.entries
            .values()
            .filter(|p| p.expires_at >= now)
            .cloned()
            .collect()
    }

    /// Explicit withdrawal by the actor.
    pub fn remove(&mut self, actor_id: &str) -> bool {
        self.entries.remove(actor_id).is_some()
    }

    pub fn get(&self, actor_id: &str) -> Option<&PresencePayload> {
        self.entries.get(actor_id)
    }

    pub fn stale_dropped(&self) -> u64 {
        self.stale_dropped
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

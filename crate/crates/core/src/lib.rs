//! Core of the Wizundry orchestration server: the replicated transcript,
//! annotations, presence, trials and tokens, the wire protocol, the speech
//! pipeline, the event log and study analytics.

pub mod annotations;
pub mod auth;
pub mod clock;
pub mod crdt;
pub mod presence;
pub mod protocol;
pub mod speech;
pub mod trial;
pub mod event_log;
pub mod analytics;
pub mod outlet;
pub mod room;
pub mod hub;
pub mod client;

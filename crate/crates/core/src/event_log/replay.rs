use serde::de::DeserializeOwned;
use serde_json::Value;

use super::{EventType, LogEvent};
use crate::annotations::{Annotation, AnnotationStore, LabelDef, LabelRegistry};
use crate::crdt::{Doc, DocOp, ReplicaId};

/// Replica id used for read-only reconstruction; never issues ops.
const REPLAY_REPLICA: ReplicaId = ReplicaId::MAX;

/// Document-affecting state rebuilt from a trial log.
#[derive(Debug, Clone)]
pub struct ReplayState {
    pub doc: Doc,
    pub labels: LabelRegistry,
    pub annotations: AnnotationStore,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("event {seq}: {reason}")]
pub struct ReplayError {
    pub seq: u64,
    pub reason: String,
}

fn field<T: DeserializeOwned>(e: &LogEvent, name: &str) -> Result<T, ReplayError> {
    let v = e.payload.get(name).cloned().unwrap_or(Value::Null);
    serde_json::from_value(v).map_err(|err| ReplayError {
        seq: e.seq,
        reason: format!("{}.{name}: {err}", e.event_type),
    })
}

/// Re-applies the doc, label and annotation events of a log, in seq order,
/// to fresh state.
pub fn replay<'a>(events: impl IntoIterator<Item = &'a LogEvent>) -> Result<ReplayState, ReplayError> {
    let mut state = ReplayState {
        doc: Doc::new(REPLAY_REPLICA),
        labels: LabelRegistry::new(),
        annotations: AnnotationStore::new(),
    };
    for e in events {
        match e.event_type {
            EventType::DocInsert
            | EventType::DocDelete
            | EventType::DocMark
            | EventType::TranscriptCommit => {
                let ops: Vec<DocOp> = field(e, "ops")?;
                let report = state.doc.apply_remote(ops);
                if let Some(err) = report.rejected.first() {
                    return Err(ReplayError {
                        seq: e.seq,
                        reason: err.to_string(),
                    });
                }
            }
            EventType::LabelDef => {
                let def: LabelDef = field(e, "label")?;
                state.labels.merge(def);
            }
            EventType::AnnotationAdd => {
                let a: Annotation = field(e, "annotation")?;
                let mark: Option<DocOp> = field(e, "mark")?;
                state.doc.apply_remote(mark);
                state.annotations.insert(a);
            }
            EventType::AnnotationDelete => {
                let id: String = field(e, "annoId")?;
                state.annotations.remove(&id);
            }
            _ => {}
        }
    }
    Ok(state)
}

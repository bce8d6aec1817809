//! Client-side mirror of a trial, fed by server envelopes. Used by the test
//! harnesses and by anything that wants to drive a trial programmatically.

use std::collections::BTreeMap;

use crate::annotations::{AnnotationStore, LabelRegistry};
use crate::crdt::{Anchor, Bias, Doc, DocError, ReplicaId};
use crate::presence::PresencePayload;
use crate::protocol::{
    AnnotationOp, DocOpBatch, Envelope, ErrorPayload, Hello, LabelDefMsg, Message, PlaybackState,
    SyncRequest, TrialEvent, TrialEventKind,
};
use crate::speech::{MicState, SpeechBox, TranscriptEvent};
use crate::trial::{FeatureSet, Role};

/// Replica used before WELCOME and by read-only roles, which never author ops.
pub const READ_ONLY_REPLICA: ReplicaId = ReplicaId::MAX;

#[derive(Debug, Clone)]
pub struct ClientReplica {
    pub trial_id: String,
    pub actor_id: String,
    pub role: Option<Role>,
    pub features: FeatureSet,
    pub doc: Doc,
    pub labels: LabelRegistry,
    pub annotations: AnnotationStore,
    pub presence: BTreeMap<String, PresencePayload>,
    pub mic: MicState,
    pub boxes: BTreeMap<String, SpeechBox>,
    pub speaker_active: bool,
    pub playback: Option<PlaybackState>,
    pub transcripts: Vec<TranscriptEvent>,
    pub trial_events: Vec<TrialEvent>,
    pub errors: Vec<ErrorPayload>,
    pub palette: Vec<String>,
    pub last_server_seq: u64,
    pub closed: bool,
    welcomed: bool,
}

impl ClientReplica {
    pub fn new(trial_id: impl Into<String>) -> Self {
        Self {
            trial_id: trial_id.into(),
            actor_id: String::new(),
            role: None,
            features: FeatureSet::empty(),
            doc: Doc::new(READ_ONLY_REPLICA),
            labels: LabelRegistry::new(),
            annotations: AnnotationStore::new(),
            presence: BTreeMap::new(),
            mic: MicState::default(),
            boxes: BTreeMap::new(),
            speaker_active: false,
            playback: None,
            transcripts: Vec::new(),
            trial_events: Vec::new(),
            errors: Vec::new(),
            palette: Vec::new(),
            last_server_seq: 0,
            closed: false,
            welcomed: false,
        }
    }

    pub fn text(&self) -> String {
        self.doc.text()
    }

    pub fn is_welcomed(&self) -> bool {
        self.welcomed
    }

    pub fn envelope(&self, message: Message) -> Envelope {
        Envelope::new(self.trial_id.clone(), self.actor_id.clone(), message)
    }

    /// HELLO carrying the resume point once anything has been received.
    pub fn hello(&self, token: &str) -> Envelope {
        self.envelope(Message::Hello(Hello {
            token: token.to_owned(),
            last_server_seq: (self.last_server_seq > 0).then_some(self.last_server_seq),
            display_name: None,
        }))
    }

    pub fn sync_request(&self) -> Envelope {
        self.envelope(Message::SyncRequest(SyncRequest {
            vv: self.doc.version_vector(),
        }))
    }

    pub fn insert(&mut self, index: usize, text: &str) -> Result<Envelope, DocError> {
        let ops = self.doc.local_insert(index, text)?;
        Ok(self.envelope(Message::DocOp(DocOpBatch { ops })))
    }

    pub fn delete(&mut self, index: usize, len: usize) -> Result<Envelope, DocError> {
        let ops = self.doc.local_delete(index, len)?;
        Ok(self.envelope(Message::DocOp(DocOpBatch { ops })))
    }

    pub fn mark(&mut self, start: usize, end: usize, key: &str, value: &str) -> Result<Envelope, DocError> {
        let (s, e) = self.range(start, end)?;
        let op = self.doc.set_mark(s, e, key, value)?;
        Ok(self.envelope(Message::DocOp(DocOpBatch { ops: vec![op] })))
    }

    /// Anchors for a `[start, end)` character range, as annotation requests
    /// carry them.
    pub fn range(&self, start: usize, end: usize) -> Result<(Anchor, Anchor), DocError> {
        Ok((
            self.doc.create_anchor(start, Bias::Before)?,
            self.doc.create_anchor(end, Bias::Before)?,
        ))
    }

    /// Applies one server envelope. Returns false for a broadcast already
    /// seen (its serverSeq is not past the resume point).
    pub fn apply(&mut self, env: &Envelope) -> bool {
        if let Some(seq) = env.server_seq {
            if seq <= self.last_server_seq {
                return false;
            }
            self.last_server_seq = seq;
        }
        match &env.message {
            Message::Welcome(w) => {
                if !self.welcomed {
                    self.doc = Doc::new(w.replica.unwrap_or(READ_ONLY_REPLICA));
                    self.welcomed = true;
                }
                self.actor_id = w.actor_id.clone();
                self.role = Some(w.role);
                self.features = w.features.clone();
                self.palette = w.palette.clone();
                self.presence = w
                    .presence
                    .iter()
                    .map(|p| (p.actor_id.clone(), p.clone()))
                    .collect();
            }
            Message::SyncResponse(r) => {
                self.doc.apply_remote(r.ops.iter().cloned());
                for def in &r.label_defs {
                    self.labels.merge(def.clone());
                }
                for a in &r.annotations {
                    self.annotations.insert(a.clone());
                }
                for id in &r.deleted_annotations {
                    self.annotations.remove(id);
                }
                self.mic = r.mic.clone();
                self.boxes = r.boxes.iter().map(|b| (b.box_id.clone(), b.clone())).collect();
                self.speaker_active = r.speaker_active;
                self.playback = r.playback.clone();
                self.last_server_seq = self.last_server_seq.max(r.head_seq);
            }
            Message::DocOp(batch) => {
                self.doc.apply_remote(batch.ops.iter().cloned());
            }
            Message::Awareness(a) => match &a.state {
                Some(p) => {
                    self.presence.insert(a.actor_id.clone(), p.clone());
                }
                None => {
                    self.presence.remove(&a.actor_id);
                }
            },
            Message::MicState(m) => self.mic = m.clone(),
            Message::SpeechBoxUpsert(b) => {
                if let Some(id) = &b.box_id {
                    self.boxes.insert(
                        id.clone(),
                        SpeechBox {
                            box_id: id.clone(),
                            kind: b.kind,
                            text: b.text.clone(),
                            owner_scope: Default::default(),
                        },
                    );
                }
            }
            Message::SpeechPlay(p) => {
                if let Some(b) = &p.box_after {
                    self.boxes.insert(b.box_id.clone(), b.clone());
                }
            }
            Message::SpeakerState(s) => self.speaker_active = s.active,
            Message::PlaybackState(p) => {
                self.playback = p.active.then(|| p.clone());
            }
            Message::TranscriptEvent(t) => self.transcripts.push(t.clone()),
            Message::LabelDef(LabelDefMsg::Defined { label }) => {
                self.labels.merge(label.clone());
            }
            Message::AnnotationOp(AnnotationOp::Added { annotation, mark }) => {
                if let Some(op) = mark {
                    self.doc.apply_remote([op.clone()]);
                }
                self.annotations.insert(annotation.clone());
            }
            Message::AnnotationOp(AnnotationOp::Deleted { anno_id }) => {
                self.annotations.remove(anno_id);
            }
            Message::FeatureUpdate(u) => {
                if u.actor_id == self.actor_id {
                    self.features = u.features.clone();
                }
            }
            Message::TrialEvent(e) => {
                if e.event == TrialEventKind::Close {
                    self.closed = true;
                }
                self.trial_events.push(e.clone());
            }
            Message::Error(e) => self.errors.push(e.clone()),
            _ => {}
        }
        true
    }

    pub fn apply_all<'a>(&mut self, envs: impl IntoIterator<Item = &'a Envelope>) {
        for e in envs {
            self.apply(e);
        }
    }
}

//! Live state of one trial and the rules that mutate it. A room is driven
//! by one caller at a time (the hub holds it behind a mutex), so every
//! broadcast gets its server sequence number in one total order.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Value};

use crate::annotations::{
    validate_add, validate_delete, Annotation, AnnotationBody, AnnotationError, AnnotationStore,
    LabelRegistry,
};
use crate::auth::Claims;
use crate::clock::Clock;
use crate::crdt::{Anchor, Bias, Doc, DocError, DocOp, OpKind, ReplicaId, VersionVector};
use crate::event_log::{EventType, LogError, LogRole, LogStore, NewEvent, SYSTEM_ACTOR};
use crate::outlet::{CloseReason, Outlet, PushResult};
use crate::presence::PresenceState;
use crate::protocol::{
    AnnotationOp, AudioChunk, Awareness, DocOpBatch, Envelope, EnvelopeType, ErrorCode,
    ErrorPayload, FeatureUpdate, Hello, LabelDefMsg, Message, PlaybackState, PlaybackToggle,
    SpeakerState, SpeechBoxUpsert, SpeechPlay, SyncResponse, TrialEvent, TrialEventKind, Welcome,
};
use crate::speech::{
    finalize_segment, playback_units, BoxStore, MicState, Speaker, SpeakerEvent, SpeechError,
    SttProvider, TranscriptEvent, TtsProvider,
};
use crate::trial::{Feature, FeatureSet, Role, Trial, TrialError};

pub type ConnId = u64;

/// The server's own replica, used for dictation commits and highlight marks.
pub const SERVER_REPLICA: ReplicaId = 0;

/// Who receives a broadcast.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Audience {
    All,
    /// Wizards and admins.
    Staff,
    /// One actor plus every admin.
    ActorAndAdmins(String),
}

impl Audience {
    pub fn admits(&self, actor_id: &str, role: Role) -> bool {
        match self {
            Audience::All => true,
            Audience::Staff => role.is_staff(),
            Audience::ActorAndAdmins(a) => a == actor_id || role == Role::Admin,
        }
    }
}

/// A refused request, reported to the sender as an ERROR envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub code: ErrorCode,
    pub message: String,
}

impl Reject {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

macro_rules! reject_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Reject {
            fn from(e: $t) -> Self {
                Reject::new(e.code(), e.to_string())
            }
        }
    )*};
}
reject_from!(DocError, AnnotationError, SpeechError, TrialError, LogError);

struct RoomConn {
    actor_id: String,
    role: Role,
    outlet: Arc<dyn Outlet>,
}

struct LogEntry {
    event_type: EventType,
    payload: Value,
}

fn log(event_type: EventType, payload: Value) -> Option<LogEntry> {
    Some(LogEntry {
        event_type,
        payload,
    })
}

/// Shared services a room needs.
#[derive(Clone)]
pub struct RoomDeps {
    pub clock: Arc<dyn Clock>,
    pub log: Arc<dyn LogStore>,
    pub tts: Arc<dyn TtsProvider>,
    pub presence_ttl_ms: u64,
}

pub struct TrialRoom {
    trial: Trial,
    deps: RoomDeps,
    doc: Doc,
    labels: LabelRegistry,
    annotations: AnnotationStore,
    next_label: u64,
    next_anno: u64,
    presence: PresenceState,
    mic: MicState,
    dropped_chunks: u64,
    boxes: BoxStore,
    speaker: Speaker,
    stt: Box<dyn SttProvider>,
    server_seq: u64,
    history: Vec<(Envelope, Audience)>,
    conns: BTreeMap<ConnId, RoomConn>,
    dead: Vec<ConnId>,
}

/// Splits a batch into runs that each become one broadcast and one log
/// event: a chain of inserts typed one after another, a run of deletes, or
/// a single mark.
fn split_runs(ops: Vec<DocOp>) -> Vec<Vec<DocOp>> {
    let mut runs: Vec<Vec<DocOp>> = Vec::new();
    for op in ops {
        let extend = match (runs.last().and_then(|r| r.last()), &op.kind) {
            (Some(prev), OpKind::Insert { parent, .. }) => {
                prev.is_insert() && *parent == Some(prev.id)
            }
            (Some(prev), OpKind::Delete { .. }) => prev.is_delete(),
            _ => false,
        };
        match runs.last_mut() {
            Some(run) if extend => run.push(op),
            _ => runs.push(vec![op]),
        }
    }
    runs
}

/// Groups ascending indices into `{index, length}` spans.
fn spans(mut indices: Vec<usize>) -> Vec<Value> {
    indices.sort_unstable();
    let mut out: Vec<(usize, usize)> = Vec::new();
    for i in indices {
        match out.last_mut() {
            // Indices are taken before the deletion, so a contiguous block
            // shows up as consecutive numbers.
            Some((start, len)) if *start + *len == i => *len += 1,
            _ => out.push((i, 1)),
        }
    }
    out.into_iter()
        .map(|(index, length)| json!({"index": index, "length": length}))
        .collect()
}

impl TrialRoom {
    pub fn new(trial: Trial, deps: RoomDeps, stt: Box<dyn SttProvider>) -> Self {
        Self {
            trial,
            deps,
            doc: Doc::new(SERVER_REPLICA),
            labels: LabelRegistry::new(),
            annotations: AnnotationStore::new(),
            next_label: 0,
            next_anno: 0,
            presence: PresenceState::new(),
            mic: MicState::default(),
            dropped_chunks: 0,
            boxes: BoxStore::new(),
            speaker: Speaker::new(),
            stt,
            server_seq: 0,
            history: Vec::new(),
            conns: BTreeMap::new(),
            dead: Vec::new(),
        }
    }

    pub fn trial(&self) -> &Trial {
        &self.trial
    }

    pub fn trial_id(&self) -> &str {
        &self.trial.trial_id
    }

    pub fn doc(&self) -> &Doc {
        &self.doc
    }

    pub fn text(&self) -> String {
        self.doc.text()
    }

    pub fn labels(&self) -> &LabelRegistry {
        &self.labels
    }

    pub fn annotations(&self) -> &AnnotationStore {
        &self.annotations
    }

    pub fn presence(&self) -> &PresenceState {
        &self.presence
    }

    pub fn mic(&self) -> &MicState {
        &self.mic
    }

    pub fn boxes(&self) -> &BoxStore {
        &self.boxes
    }

    pub fn speaker(&self) -> &Speaker {
        &self.speaker
    }

    pub fn dropped_chunks(&self) -> u64 {
        self.dropped_chunks
    }

    pub fn server_seq(&self) -> u64 {
        self.server_seq
    }

    pub fn history(&self) -> impl Iterator<Item = &Envelope> {
        self.history.iter().map(|(e, _)| e)
    }

    pub fn has_conn(&self, conn: ConnId) -> bool {
        self.conns.contains_key(&conn)
    }

    pub fn conn_count(&self) -> usize {
        self.conns.len()
    }

    fn now(&self) -> u64 {
        self.deps.clock.now_ms()
    }

    fn envelope(&self, actor_id: &str, message: Message) -> Envelope {
        Envelope::new(self.trial.trial_id.clone(), actor_id, message)
    }

    fn log_role(&self, actor_id: &str) -> LogRole {
        if actor_id == SYSTEM_ACTOR {
            return LogRole::System;
        }
        self.trial
            .member(actor_id)
            .map(|m| m.role.into())
            .unwrap_or(LogRole::Admin)
    }

    fn append_log(&self, actor_id: &str, entry: LogEntry) -> Result<(), Reject> {
        self.deps.log.append(NewEvent {
            trial_id: self.trial.trial_id.clone(),
            timestamp_ms: self.now(),
            actor_id: actor_id.to_owned(),
            role: self.log_role(actor_id),
            event_type: entry.event_type,
            payload: entry.payload,
        })?;
        Ok(())
    }

    /// Logs (durably, first), numbers and fans out one envelope.
    fn emit(
        &mut self,
        actor_id: &str,
        message: Message,
        audience: Audience,
        entry: Option<LogEntry>,
    ) -> Result<u64, Reject> {
        if let Some(entry) = entry {
            self.append_log(actor_id, entry)?;
        }
        self.server_seq += 1;
        let mut env = self.envelope(actor_id, message);
        env.server_seq = Some(self.server_seq);
        for (id, c) in &self.conns {
            if audience.admits(&c.actor_id, c.role) {
                match c.outlet.push(&env) {
                    PushResult::Queued => {}
                    PushResult::Full | PushResult::Closed => self.dead.push(*id),
                }
            }
        }
        self.history.push((env, audience));
        Ok(self.server_seq)
    }

    fn unicast(&mut self, conn: ConnId, env: &Envelope) {
        if let Some(c) = self.conns.get(&conn) {
            if c.outlet.push(env) != PushResult::Queued {
                self.dead.push(conn);
            }
        }
    }

    /// Drops connections whose queues overflowed or closed.
    fn reap(&mut self) {
        while let Some(conn) = self.dead.pop() {
            if let Some(c) = self.conns.remove(&conn) {
                c.outlet.close(CloseReason::SlowConsumer);
                self.announce_leave(&c.actor_id, c.role);
            }
        }
    }

    fn announce_leave(&mut self, actor_id: &str, role: Role) {
        if self.trial.is_closed() {
            return;
        }
        let msg = Message::TrialEvent(TrialEvent {
            event: TrialEventKind::Leave,
            actor_id: Some(actor_id.to_owned()),
            role: Some(role),
            display_name: None,
        });
        let _ = self.emit(actor_id, msg, Audience::All, log(EventType::Leave, json!({})));
    }

    fn features_of(&self, actor_id: &str, role: Role) -> FeatureSet {
        self.trial.features_for(actor_id, role)
    }

    /// Binds a verified connection to this trial and sends it everything it
    /// needs: WELCOME, then any broadcasts after `lastServerSeq`.
    pub fn join(
        &mut self,
        conn: ConnId,
        outlet: Arc<dyn Outlet>,
        claims: &Claims,
        hello: &Hello,
    ) -> Result<(), Reject> {
        let outcome = self.trial.join(claims, hello.display_name.as_deref())?;
        let m = outcome.membership;
        if outcome.opened {
            let msg = Message::TrialEvent(TrialEvent {
                event: TrialEventKind::Open,
                actor_id: None,
                role: None,
                display_name: None,
            });
            let payload = json!({"name": self.trial.name});
            self.emit(SYSTEM_ACTOR, msg, Audience::All, log(EventType::TrialOpen, payload))?;
        }
        let superseded: Vec<ConnId> = self
            .conns
            .iter()
            .filter(|(_, c)| c.actor_id == m.actor_id)
            .map(|(id, _)| *id)
            .collect();
        for id in superseded {
            if let Some(c) = self.conns.remove(&id) {
                c.outlet.close(CloseReason::Superseded);
                self.announce_leave(&c.actor_id, c.role);
            }
        }
        let now = self.now();
        let welcome = Welcome {
            actor_id: m.actor_id.clone(),
            role: m.role,
            replica: m.replica,
            features: self.features_of(&m.actor_id, m.role),
            doc_vv: self.doc.version_vector(),
            presence: if m.role.is_staff() {
                self.presence.snapshot(now)
            } else {
                Vec::new()
            },
            head_seq: self.server_seq,
            palette: self.trial.palette.clone(),
        };
        let env = self.envelope(&m.actor_id, Message::Welcome(welcome));
        if outlet.push(&env) != PushResult::Queued {
            return Err(Reject::new(ErrorCode::SlowConsumer, "cannot deliver WELCOME"));
        }
        if let Some(last) = hello.last_server_seq {
            for (env, audience) in &self.history {
                if env.server_seq.unwrap_or(0) > last
                    && audience.admits(&m.actor_id, m.role)
                    && outlet.push(env) != PushResult::Queued
                {
                    return Err(Reject::new(ErrorCode::SlowConsumer, "replay overflowed"));
                }
            }
        }
        self.conns.insert(
            conn,
            RoomConn {
                actor_id: m.actor_id.clone(),
                role: m.role,
                outlet,
            },
        );
        let msg = Message::TrialEvent(TrialEvent {
            event: TrialEventKind::Join,
            actor_id: Some(m.actor_id.clone()),
            role: Some(m.role),
            display_name: Some(m.display_name.clone()),
        });
        let payload = json!({
            "role": m.role,
            "displayName": m.display_name,
            "replica": m.replica,
            "roleTag": m.wizard_role_tag,
        });
        let result = self.emit(&m.actor_id, msg, Audience::All, log(EventType::Join, payload));
        self.reap();
        result.map(|_| ())
    }

    pub fn disconnect(&mut self, conn: ConnId) {
        if let Some(c) = self.conns.remove(&conn) {
            self.announce_leave(&c.actor_id, c.role);
        }
        self.reap();
    }

    /// Entry point for every envelope from a handshaken connection.
    pub fn handle(&mut self, conn: ConnId, env: Envelope) {
        let Some(c) = self.conns.get(&conn) else {
            return;
        };
        let actor = c.actor_id.clone();
        let role = c.role;
        let kind = env.kind();
        let result = if !env.trial_id.is_empty() && env.trial_id != self.trial.trial_id {
            Err(Reject::new(ErrorCode::Forbidden, "envelope addressed to another trial"))
        } else {
            self.gate(&actor, role, &env.message)
                .and_then(|_| self.dispatch(conn, &actor, role, env.message))
        };
        if let Err(r) = result {
            self.reply_error(conn, &actor, Some(kind), r);
        }
        self.reap();
    }

    pub fn reply_error(&mut self, conn: ConnId, actor_id: &str, ref_type: Option<EnvelopeType>, r: Reject) {
        let payload = ErrorPayload {
            code: r.code,
            message: r.message,
            ref_type: ref_type.map(|t| t.as_str().to_owned()),
        };
        let entry = LogEntry {
            event_type: EventType::Error,
            payload: serde_json::to_value(&payload).expect("error payload serializes"),
        };
        if r.code != ErrorCode::StorageFull {
            let _ = self.append_log(actor_id, entry);
        }
        let env = self.envelope(actor_id, Message::Error(payload));
        self.unicast(conn, &env);
    }

    /// Role and feature checks. Only the listed roles may send a type;
    /// server-originated types are never accepted from clients.
    fn gate(&self, actor: &str, role: Role, msg: &Message) -> Result<(), Reject> {
        let forbid = |why: &str| Err(Reject::new(ErrorCode::Forbidden, why));
        let wizard = |feature: Feature| -> Result<Option<Feature>, Reject> {
            if role == Role::Wizard {
                Ok(Some(feature))
            } else {
                Err(Reject::new(ErrorCode::Forbidden, format!("{role} may not send this")))
            }
        };
        let feature = match msg {
            Message::Hello(_) => return forbid("already handshaken"),
            Message::SyncRequest(_) => None,
            Message::DocOp(_) => wizard(Feature::CollabEditor)?,
            Message::Awareness(_) => {
                if role != Role::Wizard {
                    return Err(Reject::new(ErrorCode::NotAWizard, "only wizards have presence"));
                }
                Some(Feature::PresenceCursors)
            }
            Message::MicSet(_) => wizard(Feature::MicControl)?,
            Message::SpeechBoxUpsert(_) | Message::SpeechPlay(_) => wizard(Feature::SpeechBoxes)?,
            Message::PlaybackToggle(_) => wizard(Feature::ContentPlayback)?,
            Message::LabelDef(LabelDefMsg::Define { .. }) => wizard(Feature::Labels)?,
            Message::AnnotationOp(op) => match op {
                AnnotationOp::Add { body, .. } => wizard(match body {
                    AnnotationBody::Label { .. } => Feature::Labels,
                    AnnotationBody::Highlight { .. } => Feature::Highlights,
                    AnnotationBody::Note { .. } => Feature::SummaryNotes,
                })?,
                AnnotationOp::Delete { .. } => wizard(Feature::SummaryNotes)?,
                _ => return forbid("server-originated annotation form"),
            },
            Message::AudioChunk(_) => {
                if role != Role::EndUser {
                    return forbid("only the end-user streams audio");
                }
                None
            }
            Message::FeatureUpdate(_) => {
                if role != Role::Admin {
                    return forbid("only admins assign features");
                }
                None
            }
            Message::TrialEvent(TrialEvent {
                event: TrialEventKind::Close,
                ..
            }) => {
                if role != Role::Admin {
                    return forbid("only admins close trials");
                }
                None
            }
            _ => return forbid("server-originated type"),
        };
        match feature {
            Some(f) if !self.features_of(actor, role).contains(f) => Err(Reject::new(
                ErrorCode::FeatureDisabled,
                format!("feature {f:?} is not enabled for {actor}"),
            )),
            _ => Ok(()),
        }
    }

    fn dispatch(&mut self, conn: ConnId, actor: &str, role: Role, msg: Message) -> Result<(), Reject> {
        match msg {
            Message::SyncRequest(req) => {
                self.sync(conn, actor, role, &req.vv);
                Ok(())
            }
            Message::DocOp(batch) => self.on_doc_op(actor, batch.ops),
            Message::Awareness(a) => self.on_awareness(actor, a),
            Message::MicSet(m) => self.on_mic_set(actor, m.on),
            Message::SpeechBoxUpsert(req) => self.on_box_upsert(actor, req),
            Message::SpeechPlay(req) => self.on_box_play(actor, req),
            Message::PlaybackToggle(req) => self.on_playback_toggle(actor, req),
            Message::LabelDef(LabelDefMsg::Define { name, color }) => {
                self.on_label_define(actor, &name, &color)
            }
            Message::AnnotationOp(op) => self.on_annotation(actor, op),
            Message::AudioChunk(chunk) => self.on_audio(chunk),
            Message::FeatureUpdate(u) => self.assign_features(actor, &u.actor_id, u.features).map(|_| ()),
            Message::TrialEvent(_) => {
                self.close(actor, CloseReason::TrialClosed);
                Ok(())
            }
            _ => unreachable!("gate rejects every other type"),
        }
    }

    fn sync(&mut self, conn: ConnId, actor: &str, role: Role, vv: &VersionVector) {
        let playback = self.speaker.playback().map(|(progress, by)| PlaybackState {
            active: true,
            progress_index: progress,
            started_by: by.to_owned(),
        });
        let resp = SyncResponse {
            ops: self.doc.ops_since(vv),
            label_defs: self.labels.defs().to_vec(),
            annotations: self.annotations.iter().cloned().collect(),
            deleted_annotations: self.annotations.deleted().cloned().collect(),
            mic: self.mic.clone(),
            boxes: if role.is_staff() { self.boxes.all() } else { Vec::new() },
            speaker_active: self.speaker.is_active(),
            playback,
            head_seq: self.server_seq,
        };
        let env = self.envelope(actor, Message::SyncResponse(resp));
        self.unicast(conn, &env);
    }

    fn on_doc_op(&mut self, actor: &str, ops: Vec<DocOp>) -> Result<(), Reject> {
        let replica = self
            .trial
            .member(actor)
            .and_then(|m| m.replica)
            .ok_or_else(|| Reject::new(ErrorCode::Forbidden, "no editing replica"))?;
        if let Some(op) = ops.iter().find(|o| o.id.replica != replica) {
            return Err(Reject::new(
                ErrorCode::MalformedOp,
                format!("op {} was not issued by replica {replica}", op.id),
            ));
        }
        if let Some(id) = self.doc.first_unready(&ops) {
            return Err(Reject::new(
                ErrorCode::MalformedOp,
                format!("op {id} depends on an item the server has not seen"),
            ));
        }
        for run in split_runs(ops) {
            let mut fresh: Vec<DocOp> = Vec::with_capacity(run.len());
            for op in run {
                if !self.doc.has_applied(op.id) && !fresh.iter().any(|f| f.id == op.id) {
                    fresh.push(op);
                }
            }
            if fresh.is_empty() {
                continue;
            }
            let before: Vec<usize> = fresh
                .iter()
                .filter_map(|op| match op.kind {
                    OpKind::Delete { target } => self
                        .doc
                        .item(target)
                        .filter(|i| !i.tombstone)
                        .and_then(|_| self.doc.resolve_index(Anchor::new(target, Bias::Before)).ok()),
                    _ => None,
                })
                .collect();
            let report = self.doc.apply_remote(fresh.clone());
            let applied: Vec<DocOp> = fresh
                .into_iter()
                .filter(|op| self.doc.has_applied(op.id))
                .collect();
            if let Some(first) = applied.first() {
                let entry = match &first.kind {
                    OpKind::Insert { .. } => {
                        let text: String = applied
                            .iter()
                            .filter_map(|op| match op.kind {
                                OpKind::Insert { content, .. } => Some(content),
                                _ => None,
                            })
                            .collect();
                        let index = self.doc.resolve_index(Anchor::new(first.id, Bias::Before))?;
                        log(
                            EventType::DocInsert,
                            json!({"index": index, "length": applied.len(), "text": text, "ops": applied}),
                        )
                    }
                    OpKind::Delete { .. } => log(
                        EventType::DocDelete,
                        json!({
                            "index": before.iter().min(),
                            "length": before.len(),
                            "spans": spans(before.clone()),
                            "ops": applied,
                        }),
                    ),
                    OpKind::Mark { start, end, key, value } => {
                        let s = self.doc.resolve_index(*start)?;
                        let e = self.doc.resolve_index(*end)?;
                        log(
                            EventType::DocMark,
                            json!({"index": s, "length": e.saturating_sub(s), "key": key, "value": value, "ops": applied}),
                        )
                    }
                };
                self.emit(actor, Message::DocOp(DocOpBatch { ops: applied }), Audience::All, entry)?;
            }
            if let Some(e) = report.rejected.into_iter().next() {
                return Err(e.into());
            }
        }
        Ok(())
    }

    fn on_awareness(&mut self, actor: &str, a: Awareness) -> Result<(), Reject> {
        let state = match a.state {
            Some(mut p) => {
                p.actor_id = actor.to_owned();
                if p.display_name.is_empty() {
                    if let Some(m) = self.trial.member(actor) {
                        p.display_name = m.display_name.clone();
                    }
                }
                p.expires_at = self.now() + self.deps.presence_ttl_ms;
                if self.presence.update(p.clone()).is_err() {
                    // Stale updates are dropped silently; the state counts them.
                    return Ok(());
                }
                Some(p)
            }
            None => {
                if !self.presence.remove(actor) {
                    return Ok(());
                }
                None
            }
        };
        let msg = Message::Awareness(Awareness {
            actor_id: actor.to_owned(),
            state,
        });
        self.emit(actor, msg, Audience::Staff, None)?;
        Ok(())
    }

    fn on_mic_set(&mut self, actor: &str, on: bool) -> Result<(), Reject> {
        if !on && self.mic.on {
            // Whatever was said before the switch is still committed.
            let events = self.stt.flush();
            self.on_transcript(events)?;
        }
        self.mic = MicState {
            on,
            changed_by: actor.to_owned(),
            changed_at: self.now(),
        };
        let msg = Message::MicState(self.mic.clone());
        self.emit(actor, msg, Audience::All, log(EventType::MicSet, json!({"on": on})))?;
        Ok(())
    }

    fn on_audio(&mut self, chunk: AudioChunk) -> Result<(), Reject> {
        if !self.mic.on {
            self.dropped_chunks += 1;
            return Ok(());
        }
        let mut events = self.stt.push_chunk(&chunk.bytes);
        if chunk.is_final {
            events.extend(self.stt.flush());
        }
        self.on_transcript(events)
    }

    fn on_transcript(&mut self, events: Vec<TranscriptEvent>) -> Result<(), Reject> {
        for ev in events {
            let sentence = ev.is_final().then(|| finalize_segment(&ev.text));
            let segment_id = ev.segment_id;
            self.emit(SYSTEM_ACTOR, Message::TranscriptEvent(ev), Audience::All, None)?;
            if let Some(Ok(sentence)) = sentence {
                self.commit_transcript(segment_id, &sentence)?;
            }
        }
        Ok(())
    }

    /// Appends a finished sentence as its own line, written by the server
    /// replica.
    pub fn commit_transcript(&mut self, segment_id: u64, sentence: &str) -> Result<(), Reject> {
        let line = format!("{sentence}\n");
        let index = self.doc.len();
        let ops = self.doc.local_insert(index, &line)?;
        let payload = json!({
            "segmentId": segment_id,
            "text": line,
            "index": index,
            "length": ops.len(),
            "ops": ops,
        });
        self.emit(
            SYSTEM_ACTOR,
            Message::DocOp(DocOpBatch { ops }),
            Audience::All,
            log(EventType::TranscriptCommit, payload),
        )?;
        Ok(())
    }

    fn on_box_upsert(&mut self, actor: &str, req: SpeechBoxUpsert) -> Result<(), Reject> {
        let b = self.boxes.upsert(req.box_id.as_deref(), req.kind, &req.text)?;
        let payload = json!({"boxId": b.box_id, "kind": b.kind, "text": b.text});
        let msg = Message::SpeechBoxUpsert(SpeechBoxUpsert {
            box_id: Some(b.box_id),
            kind: b.kind,
            text: b.text,
        });
        self.emit(actor, msg, Audience::Staff, log(EventType::SpeechBoxUpsert, payload))?;
        Ok(())
    }

    fn on_box_play(&mut self, actor: &str, req: SpeechPlay) -> Result<(), Reject> {
        let (text, after) = self.boxes.play(&req.box_id)?;
        let now = self.now();
        let events = self
            .speaker
            .enqueue_box(&req.box_id, &text, now, self.deps.tts.as_ref());
        let duration_ms = events.iter().find_map(|e| match e {
            SpeakerEvent::Started { duration_ms, .. } => Some(*duration_ms),
            _ => None,
        });
        let payload = json!({"boxId": req.box_id, "kind": after.kind, "text": text});
        let msg = Message::SpeechPlay(SpeechPlay {
            box_id: req.box_id,
            text: Some(text),
            duration_ms,
            box_after: Some(after),
        });
        self.emit(actor, msg, Audience::Staff, log(EventType::SpeechPlay, payload))?;
        self.emit_speaker(events)
    }

    fn on_playback_toggle(&mut self, actor: &str, req: PlaybackToggle) -> Result<(), Reject> {
        let now = self.now();
        let tts = Arc::clone(&self.deps.tts);
        let (payload, events) = if self.speaker.playback_active() {
            let events = self.speaker.stop_playback(now, tts.as_ref());
            (json!({"active": false}), events)
        } else {
            let from = match req.from {
                Some(a) => self.doc.resolve_index(a)?,
                None => 0,
            };
            let text = self.doc.text();
            let units = playback_units(&text, from);
            let end = text.chars().count();
            let events = self
                .speaker
                .start_playback(actor, units, from, end, now, tts.as_ref());
            (json!({"active": true, "fromIndex": from}), events)
        };
        self.append_log(
            actor,
            LogEntry {
                event_type: EventType::PlaybackToggle,
                payload,
            },
        )?;
        self.emit_speaker(events)
    }

    fn emit_speaker(&mut self, events: Vec<SpeakerEvent>) -> Result<(), Reject> {
        for e in events {
            let msg = match e {
                SpeakerEvent::Started {
                    source,
                    text,
                    duration_ms,
                    ..
                } => Message::SpeakerState(SpeakerState {
                    active: true,
                    source,
                    text: Some(text),
                    duration_ms: Some(duration_ms),
                }),
                SpeakerEvent::Finished { source, .. } => Message::SpeakerState(SpeakerState {
                    active: false,
                    source,
                    text: None,
                    duration_ms: None,
                }),
                SpeakerEvent::Playback {
                    active,
                    progress_index,
                    started_by,
                } => Message::PlaybackState(PlaybackState {
                    active,
                    progress_index,
                    started_by,
                }),
            };
            self.emit(SYSTEM_ACTOR, msg, Audience::All, None)?;
        }
        Ok(())
    }

    fn on_label_define(&mut self, actor: &str, name: &str, color: &str) -> Result<(), Reject> {
        let stamp = self.doc.next_stamp();
        let id = format!("L{}", self.next_label + 1);
        let def = self.labels.define(id, name, color, actor, stamp)?;
        self.next_label += 1;
        let payload = json!({"label": def});
        let msg = Message::LabelDef(LabelDefMsg::Defined { label: def });
        self.emit(actor, msg, Audience::All, log(EventType::LabelDef, payload))?;
        Ok(())
    }

    fn on_annotation(&mut self, actor: &str, op: AnnotationOp) -> Result<(), Reject> {
        match op {
            AnnotationOp::Add { body, start, end } => {
                validate_add(&self.doc, &self.labels, &self.trial.palette, &body, start, end)?;
                let body = match body {
                    AnnotationBody::Label { label_id } => AnnotationBody::Label {
                        label_id: self
                            .labels
                            .resolve_id(&label_id)
                            .unwrap_or(&label_id)
                            .to_owned(),
                    },
                    other => other,
                };
                let mark = match &body {
                    AnnotationBody::Highlight { category } => {
                        Some(self.doc.set_mark(start, end, "highlight", category)?)
                    }
                    _ => None,
                };
                self.next_anno += 1;
                let annotation = Annotation {
                    anno_id: format!("A{}", self.next_anno),
                    body,
                    start,
                    end,
                    author: actor.to_owned(),
                    stamp: self.doc.next_stamp(),
                };
                self.annotations.insert(annotation.clone());
                let payload = json!({
                    "annotation": annotation,
                    "mark": mark,
                    "startIndex": self.doc.resolve_index(start)?,
                    "endIndex": self.doc.resolve_index(end)?,
                });
                let msg = Message::AnnotationOp(AnnotationOp::Added { annotation, mark });
                self.emit(actor, msg, Audience::All, log(EventType::AnnotationAdd, payload))?;
            }
            AnnotationOp::Delete { anno_id } => {
                validate_delete(&self.annotations, &anno_id)?;
                self.annotations.remove(&anno_id);
                let payload = json!({"annoId": anno_id});
                let msg = Message::AnnotationOp(AnnotationOp::Deleted { anno_id });
                self.emit(actor, msg, Audience::All, log(EventType::AnnotationDelete, payload))?;
            }
            _ => unreachable!("gate rejects server forms"),
        }
        Ok(())
    }

    /// Replaces an actor's features and pushes the new set to that actor
    /// and to admins. The caller has checked the admin role.
    pub fn assign_features(
        &mut self,
        by_actor: &str,
        target: &str,
        features: FeatureSet,
    ) -> Result<FeatureSet, Reject> {
        let features = self.trial.set_features(target, features)?;
        let payload = json!({"actorId": target, "features": features});
        let msg = Message::FeatureUpdate(FeatureUpdate {
            actor_id: target.to_owned(),
            features: features.clone(),
        });
        let result = self.emit(
            by_actor,
            msg,
            Audience::ActorAndAdmins(target.to_owned()),
            log(EventType::FeatureUpdate, payload),
        );
        self.reap();
        result.map(|_| features)
    }

    /// Periodic housekeeping: presence expiry, speaker progress and
    /// asynchronous recogniser output.
    pub fn tick(&mut self) {
        let now = self.now();
        for actor in self.presence.expire(now) {
            let msg = Message::Awareness(Awareness {
                actor_id: actor.clone(),
                state: None,
            });
            let _ = self.emit(&actor, msg, Audience::Staff, None);
        }
        let events = self.speaker.tick(now, self.deps.tts.as_ref());
        let _ = self.emit_speaker(events);
        let events = self.stt.poll();
        if !events.is_empty() {
            let _ = self.on_transcript(events);
        }
        self.reap();
    }

    /// Closes the trial: logs TRIAL_CLOSE, tells everyone, and disconnects
    /// them. Returns false if it was already closed.
    pub fn close(&mut self, by_actor: &str, reason: CloseReason) -> bool {
        if self.trial.is_closed() {
            return false;
        }
        let msg = Message::TrialEvent(TrialEvent {
            event: TrialEventKind::Close,
            actor_id: Some(by_actor.to_owned()),
            role: None,
            display_name: None,
        });
        let payload = json!({"by": by_actor});
        if let Err(e) = self.emit(by_actor, msg, Audience::All, log(EventType::TrialClose, payload)) {
            log::error!("trial {}: TRIAL_CLOSE not logged: {}", self.trial.trial_id, e.message);
        }
        self.trial.close();
        for (_, c) in std::mem::take(&mut self.conns) {
            c.outlet.close(reason);
        }
        self.dead.clear();
        true
    }
}

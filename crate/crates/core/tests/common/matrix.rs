//! Envelope type × role table, checked against a live four-client trial.

use wizundry_core::annotations::AnnotationBody;
use wizundry_core::crdt::{Anchor, VersionVector};
use wizundry_core::event_log::EventType;
use wizundry_core::presence::PresencePayload;
use wizundry_core::protocol::{
    AnnotationOp, AudioChunk, Awareness, Envelope, EnvelopeType, ErrorCode, ErrorPayload,
    FeatureUpdate, Hello, LabelDefMsg, Message, MicSet, PlaybackState, PlaybackToggle,
    SpeakerSource, SpeakerState, SpeechBoxUpsert, SpeechPlay, SyncRequest, SyncResponse,
    TrialEvent, TrialEventKind, Welcome,
};
use wizundry_core::speech::{BoxKind, MicState, TranscriptEvent};
use wizundry_core::trial::{Feature, FeatureAssignment, FeatureSet, Role};

use super::Harness;

pub const ADMIN: usize = 0;
pub const W1: usize = 1;
pub const W2: usize = 2;
pub const USER: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Vis {
    All,
    /// Wizards and admin.
    Staff,
    /// Only the sender.
    Sender,
    /// w2 (the target of feature updates) and the admin.
    TargetAndAdmin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expect {
    Refused(ErrorCode),
    Accepted {
        reply: EnvelopeType,
        vis: Vis,
        logged: Option<EventType>,
    },
}

pub fn sender_of(role: Role) -> usize {
    match role {
        Role::Admin => ADMIN,
        Role::Wizard => W1,
        Role::EndUser => USER,
    }
}

pub fn expected(t: EnvelopeType, role: Role) -> Expect {
    use EnvelopeType as T;
    let wizard_only = |reply, vis, logged| {
        if role == Role::Wizard {
            Expect::Accepted {
                reply,
                vis,
                logged: Some(logged),
            }
        } else {
            Expect::Refused(ErrorCode::Forbidden)
        }
    };
    match t {
        T::SyncRequest => Expect::Accepted {
            reply: T::SyncResponse,
            vis: Vis::Sender,
            logged: None,
        },
        T::DocOp => wizard_only(T::DocOp, Vis::All, EventType::DocInsert),
        T::Awareness => match role {
            Role::Wizard => Expect::Accepted {
                reply: T::Awareness,
                vis: Vis::Staff,
                logged: None,
            },
            _ => Expect::Refused(ErrorCode::NotAWizard),
        },
        T::MicSet => wizard_only(T::MicState, Vis::All, EventType::MicSet),
        T::SpeechBoxUpsert => wizard_only(T::SpeechBoxUpsert, Vis::Staff, EventType::SpeechBoxUpsert),
        T::SpeechPlay => wizard_only(T::SpeechPlay, Vis::Staff, EventType::SpeechPlay),
        T::PlaybackToggle => wizard_only(T::PlaybackState, Vis::All, EventType::PlaybackToggle),
        T::LabelDef => wizard_only(T::LabelDef, Vis::All, EventType::LabelDef),
        T::AnnotationOp => wizard_only(T::AnnotationOp, Vis::All, EventType::AnnotationAdd),
        T::AudioChunk => match role {
            Role::EndUser => Expect::Accepted {
                reply: T::TranscriptEvent,
                vis: Vis::All,
                logged: None,
            },
            _ => Expect::Refused(ErrorCode::Forbidden),
        },
        T::FeatureUpdate => match role {
            Role::Admin => Expect::Accepted {
                reply: T::FeatureUpdate,
                vis: Vis::TargetAndAdmin,
                logged: Some(EventType::FeatureUpdate),
            },
            _ => Expect::Refused(ErrorCode::Forbidden),
        },
        T::TrialEvent => match role {
            Role::Admin => Expect::Accepted {
                reply: T::TrialEvent,
                vis: Vis::All,
                logged: Some(EventType::TrialClose),
            },
            _ => Expect::Refused(ErrorCode::Forbidden),
        },
        // HELLO after the handshake, and everything only the server sends.
        T::Hello
        | T::Welcome
        | T::SyncResponse
        | T::MicState
        | T::SpeakerState
        | T::PlaybackState
        | T::TranscriptEvent
        | T::Error => Expect::Refused(ErrorCode::Forbidden),
    }
}

fn presence() -> PresencePayload {
    PresencePayload {
        actor_id: String::new(),
        display_name: String::new(),
        color: "blue".into(),
        caret: Anchor::ROOT,
        selection: None,
        pointer: None,
        seq: 1,
        expires_at: 0,
    }
}

/// A representative envelope of type `t` from peer `i`.
pub fn sample(h: &mut Harness, i: usize, t: EnvelopeType) -> Envelope {
    use EnvelopeType as T;
    let r = &mut h.peers[i].replica;
    let msg = match t {
        T::Hello => Message::Hello(Hello {
            token: "x".into(),
            last_server_seq: None,
            display_name: None,
        }),
        T::Welcome => Message::Welcome(Welcome {
            actor_id: "x".into(),
            role: Role::Admin,
            replica: None,
            features: FeatureSet::empty(),
            doc_vv: VersionVector::new(),
            presence: vec![],
            head_seq: 0,
            palette: vec![],
        }),
        T::SyncRequest => Message::SyncRequest(SyncRequest {
            vv: VersionVector::new(),
        }),
        T::SyncResponse => Message::SyncResponse(SyncResponse {
            ops: vec![],
            label_defs: vec![],
            annotations: vec![],
            deleted_annotations: vec![],
            mic: MicState::default(),
            boxes: vec![],
            speaker_active: false,
            playback: None,
            head_seq: 0,
        }),
        T::DocOp => return r.insert(0, "x").unwrap(),
        T::Awareness => Message::Awareness(Awareness {
            actor_id: String::new(),
            state: Some(presence()),
        }),
        T::MicSet => Message::MicSet(MicSet { on: true }),
        T::MicState => Message::MicState(MicState::default()),
        T::SpeechBoxUpsert => Message::SpeechBoxUpsert(SpeechBoxUpsert {
            box_id: None,
            kind: BoxKind::Preset,
            text: "Okay".into(),
        }),
        T::SpeechPlay => Message::SpeechPlay(SpeechPlay {
            box_id: "B1".into(),
            text: None,
            duration_ms: None,
            box_after: None,
        }),
        T::SpeakerState => Message::SpeakerState(SpeakerState {
            active: true,
            source: SpeakerSource::Playback,
            text: None,
            duration_ms: None,
        }),
        T::PlaybackToggle => Message::PlaybackToggle(PlaybackToggle { from: None }),
        T::PlaybackState => Message::PlaybackState(PlaybackState {
            active: true,
            progress_index: 0,
            started_by: "x".into(),
        }),
        T::AudioChunk => Message::AudioChunk(AudioChunk {
            seq: 0,
            bytes: b"hi".to_vec(),
            is_final: false,
        }),
        T::TranscriptEvent => Message::TranscriptEvent(TranscriptEvent::interim(0, "x")),
        T::LabelDef => Message::LabelDef(LabelDefMsg::Define {
            name: "todo".into(),
            color: "pink".into(),
        }),
        T::AnnotationOp => Message::AnnotationOp(AnnotationOp::Add {
            body: AnnotationBody::Note {
                note_text: "n".into(),
            },
            start: Anchor::ROOT,
            end: Anchor::ROOT,
        }),
        T::FeatureUpdate => Message::FeatureUpdate(FeatureUpdate {
            actor_id: "w2".into(),
            features: [Feature::CollabEditor].into_iter().collect(),
        }),
        T::TrialEvent => Message::TrialEvent(TrialEvent {
            event: TrialEventKind::Close,
            actor_id: None,
            role: None,
            display_name: None,
        }),
        T::Error => Message::Error(ErrorPayload {
            code: ErrorCode::Internal,
            message: "x".into(),
            ref_type: None,
        }),
    };
    r.envelope(msg)
}

/// Four peers with some text, a speech box, and the mic on.
pub fn prepared(assignments: Vec<FeatureAssignment>) -> Harness {
    let mut h = Harness::four(assignments);
    let e = h.peers[W2].replica.insert(0, "Hello there.\n").unwrap();
    h.send(W2, e);
    h.send_msg(
        W2,
        Message::SpeechBoxUpsert(SpeechBoxUpsert {
            box_id: None,
            kind: BoxKind::Preset,
            text: "Okay".into(),
        }),
    );
    h.send_msg(W2, Message::MicSet(MicSet { on: true }));
    h.clear();
    h
}

/// Runs one cell in a fresh trial; returns a description of any mismatch.
pub fn check_cell(t: EnvelopeType, role: Role) -> Result<(), String> {
    let mut h = prepared(vec![]);
    let sender = sender_of(role);
    let logged_before = h.events().len();
    let env = sample(&mut h, sender, t);
    h.send(sender, env);
    let got_error = h.last_error(sender);
    match expected(t, role) {
        Expect::Refused(code) => {
            if got_error != Some(code) {
                return Err(format!("{t} from {role}: expected {code}, got {got_error:?}"));
            }
            let others = (0..4)
                .filter(|&p| p != sender)
                .any(|p| !h.peers[p].received.is_empty());
            if others {
                return Err(format!("{t} from {role}: refused request leaked a broadcast"));
            }
            let new: Vec<_> = h.events()[logged_before..].iter().map(|e| e.event_type).collect();
            if new != vec![EventType::Error] {
                return Err(format!("{t} from {role}: refusal logged as {new:?}"));
            }
        }
        Expect::Accepted { reply, vis, logged } => {
            if let Some(code) = got_error {
                return Err(format!("{t} from {role}: unexpected error {code}"));
            }
            for p in 0..4 {
                let saw = h.peers[p].received.iter().any(|e| e.kind() == reply);
                let should = match vis {
                    Vis::All => true,
                    Vis::Staff => p != USER,
                    Vis::Sender => p == sender,
                    Vis::TargetAndAdmin => p == W2 || p == ADMIN,
                };
                if saw != should {
                    return Err(format!(
                        "{t} from {role}: peer {} saw {reply}: {saw}, expected {should}",
                        h.peers[p].user
                    ));
                }
            }
            let new: Vec<_> = h.events()[logged_before..].iter().map(|e| e.event_type).collect();
            match logged {
                Some(ev) if !new.contains(&ev) => {
                    return Err(format!("{t} from {role}: {ev} not logged ({new:?})"))
                }
                None if !new.is_empty() => {
                    return Err(format!("{t} from {role}: unexpectedly logged {new:?}"))
                }
                _ => {}
            }
        }
    }
    Ok(())
}

/// The feature each wizard request needs, with the sample that exercises it.
pub const GATED: [(EnvelopeType, Feature); 8] = [
    (EnvelopeType::DocOp, Feature::CollabEditor),
    (EnvelopeType::Awareness, Feature::PresenceCursors),
    (EnvelopeType::MicSet, Feature::MicControl),
    (EnvelopeType::SpeechBoxUpsert, Feature::SpeechBoxes),
    (EnvelopeType::SpeechPlay, Feature::SpeechBoxes),
    (EnvelopeType::PlaybackToggle, Feature::ContentPlayback),
    (EnvelopeType::LabelDef, Feature::Labels),
    (EnvelopeType::AnnotationOp, Feature::SummaryNotes),
];

/// A wizard without the feature is refused with FEATURE_DISABLED.
pub fn check_feature_gate(t: EnvelopeType, feature: Feature) -> Result<(), String> {
    let without: FeatureSet = Feature::ALL.into_iter().filter(|f| *f != feature).collect();
    if without.contains(feature) {
        // The feature is implied by another one; drop those as well.
        let minimal: FeatureSet = Feature::ALL
            .into_iter()
            .filter(|f| {
                let one: FeatureSet = [*f].into_iter().collect();
                !one.contains(feature)
            })
            .collect();
        return check_gate_with(t, feature, minimal);
    }
    check_gate_with(t, feature, without)
}

fn check_gate_with(t: EnvelopeType, feature: Feature, set: FeatureSet) -> Result<(), String> {
    let mut h = prepared(vec![FeatureAssignment {
        actor_id: "w1".into(),
        features: set,
        role_tag: None,
    }]);
    let env = sample(&mut h, W1, t);
    h.send(W1, env);
    match h.last_error(W1) {
        Some(ErrorCode::FeatureDisabled) => Ok(()),
        other => Err(format!("{t} without {feature:?}: got {other:?}")),
    }
}

pub fn all_cells() -> Vec<(EnvelopeType, Role)> {
    EnvelopeType::ALL
        .into_iter()
        .flat_map(|t| Role::ALL.into_iter().map(move |r| (t, r)))
        .collect()
}

/// Drops the end-user, lets `missed` broadcasts go by, reconnects with its
/// last seen serverSeq and checks it got exactly the gap, in order.
pub fn check_gap_replay(missed: usize) -> Result<(), String> {
    let mut h = Harness::four(vec![]);
    let last = h.peers[USER].replica.last_server_seq;
    h.hub.disconnect(h.peers[USER].conn);
    for _ in 0..missed {
        let len = h.peers[W1].replica.doc.len();
        let e = h.peers[W1].replica.insert(len, "z").unwrap();
        h.send(W1, e);
    }
    h.peers[USER].received.clear();
    h.reconnect(USER);
    let head = h.hub.room(&h.trial_id()).unwrap().lock().server_seq();
    let got: Vec<u64> = h.peers[USER].received.iter().filter_map(|e| e.server_seq).collect();
    let want: Vec<u64> = (last + 1..=head).collect();
    if got != want {
        return Err(format!("replayed {got:?}, expected {want:?}"));
    }
    let dupes = h.peers[USER].received.len() - got.len();
    // Only the WELCOME is unsequenced.
    if dupes != 1 {
        return Err(format!("{dupes} unsequenced envelopes on resume"));
    }
    if h.peers[USER].replica.text() != h.server_text() {
        return Err("text differs after resume".into());
    }
    Ok(())
}

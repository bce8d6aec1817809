//! Scripted dictation session with edits made while and after composing.

use wizundry_core::annotations::AnnotationBody;
use wizundry_core::event_log::export_csv;
use wizundry_core::protocol::{
    AnnotationOp, AudioChunk, Message, MicSet, SpeechBoxUpsert, SpeechPlay,
};
use wizundry_core::speech::BoxKind;

use super::matrix::{USER, W1, W2};
use super::Harness;

pub const GOLDEN_TRANSCRIPT: &str = include_str!("../fixtures/golden_transcript.txt");
pub const GOLDEN_CSV_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/golden_log.csv");

fn speak(h: &mut Harness, seq: &mut u64, text: &str) {
    *seq += 1;
    h.send_msg(
        USER,
        Message::AudioChunk(AudioChunk {
            seq: *seq,
            bytes: text.as_bytes().to_vec(),
            is_final: false,
        }),
    );
    h.tick(400);
}

fn replace(h: &mut Harness, peer: usize, find: &str, with: &str) {
    let text = h.peers[peer].replica.text();
    let at = text[..text.find(find).expect("word present")].chars().count();
    let del = h.peers[peer].replica.delete(at, find.chars().count()).unwrap();
    h.send(peer, del);
    h.tick(150);
    let ins = h.peers[peer].replica.insert(at, with).unwrap();
    h.send(peer, ins);
    h.tick(150);
}

fn insert_before(h: &mut Harness, peer: usize, find: &str, text: &str) {
    let current = h.peers[peer].replica.text();
    let at = current[..current.find(find).expect("word present")].chars().count();
    let ins = h.peers[peer].replica.insert(at, text).unwrap();
    h.send(peer, ins);
    h.tick(150);
}

/// Returns the end-user's transcript and the exported log.
pub fn run_golden() -> (String, String) {
    let mut h = Harness::four(vec![]);
    let mut seq = 0;
    h.tick(1_000);
    h.send_msg(W1, Message::MicSet(MicSet { on: true }));
    speak(&mut h, &mut seq, "i want to  buy ");
    speak(&mut h, &mut seq, "some milk\n");
    speak(&mut h, &mut seq, "and call my mum");
    // Editing while composing: the language wizard fixes line one while
    // the second sentence is still open.
    insert_before(&mut h, W2, "milk", "oat ");
    speak(&mut h, &mut seq, "\n");
    h.send_msg(
        W1,
        Message::SpeechBoxUpsert(SpeechBoxUpsert {
            box_id: None,
            kind: BoxKind::Editable,
            text: "Anything else?".into(),
        }),
    );
    h.send_msg(
        W1,
        Message::SpeechPlay(SpeechPlay {
            box_id: "B1".into(),
            text: None,
            duration_ms: None,
            box_after: None,
        }),
    );
    h.tick(1_000);
    speak(&mut h, &mut seq, "remind me at five");
    speak(&mut h, &mut seq, "\n");
    h.send_msg(W1, Message::MicSet(MicSet { on: false }));
    // Editing after composing.
    replace(&mut h, W2, "mum", "mom");
    replace(&mut h, W1, "five", "5 pm");
    let text = h.peers[W1].replica.text();
    let line2 = text.find("And").unwrap();
    let end = line2 + "And call my mom.".len();
    let (s, e) = h.peers[W1].replica.range(line2, end).unwrap();
    h.send_msg(
        W1,
        Message::AnnotationOp(AnnotationOp::Add {
            body: AnnotationBody::Highlight {
                category: "yellow".into(),
            },
            start: s,
            end: e,
        }),
    );
    h.tick(200);
    h.send_msg(
        W2,
        Message::AnnotationOp(AnnotationOp::Add {
            body: AnnotationBody::Note {
                note_text: "user prefers oat milk".into(),
            },
            start: s,
            end: e,
        }),
    );
    h.tick(5_000);
    let transcript = h.peers[USER].replica.text();
    let csv = export_csv(&h.events());
    (transcript, csv)
}

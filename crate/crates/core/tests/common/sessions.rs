//! Randomised multi-wizard sessions driven through the hub.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wizundry_core::annotations::AnnotationBody;
use wizundry_core::event_log::replay;
use wizundry_core::protocol::{AnnotationOp, AudioChunk, Envelope, LabelDefMsg, Message, MicSet};

use super::matrix::{USER, W1, W2};
use super::Harness;

const WORDS: [&str; 8] = ["buy", "milk", "call", "mom", "and", "then", "tea", "maybe"];

pub struct SessionReport {
    pub text: String,
    pub events: usize,
    pub duplicates_sent: usize,
}

fn room_head(h: &Harness) -> u64 {
    h.hub.room(&h.trial_id()).unwrap().lock().server_seq()
}

/// Runs a seeded session and checks, at the end, that every client, the
/// server and a replay of the log agree on the transcript and annotations.
/// Every re-sent DOC_OP must leave the log and the broadcast stream alone.
pub fn run_session(seed: u64, actions: usize) -> Result<SessionReport, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = Harness::four(vec![]);
    let mut queues: [VecDeque<Envelope>; 2] = [VecDeque::new(), VecDeque::new()];
    let mut sent: Vec<(usize, Envelope)> = Vec::new();
    let mut duplicates = 0;
    let mut chunk_seq = 0;
    h.send_msg(W1, Message::MicSet(MicSet { on: true }));
    h.send_msg(W1, Message::LabelDef(LabelDefMsg::Define { name: "todo".into(), color: "pink".into() }));

    let flush = |h: &mut Harness, queues: &mut [VecDeque<Envelope>; 2], sent: &mut Vec<(usize, Envelope)>, q: usize| {
        let peer = [W1, W2][q];
        while let Some(env) = queues[q].pop_front() {
            sent.push((peer, env.clone()));
            h.send(peer, env);
        }
    };

    for _ in 0..actions {
        let q = rng.gen_range(0..2);
        let peer = [W1, W2][q];
        let len = h.peers[peer].replica.doc.len();
        match rng.gen_range(0..12) {
            0..=3 => {
                let at = rng.gen_range(0..=len);
                let word = format!("{} ", WORDS.choose(&mut rng).unwrap());
                let env = h.peers[peer].replica.insert(at, &word).unwrap();
                queues[q].push_back(env);
            }
            4 if len > 0 => {
                let at = rng.gen_range(0..len);
                let n = rng.gen_range(1..=3.min(len - at));
                let env = h.peers[peer].replica.delete(at, n).unwrap();
                queues[q].push_back(env);
            }
            5 | 6 => flush(&mut h, &mut queues, &mut sent, q),
            7 => {
                let word = WORDS.choose(&mut rng).unwrap();
                let text = if rng.gen_bool(0.3) { format!("{word}\n") } else { format!("{word} ") };
                chunk_seq += 1;
                h.send_msg(
                    USER,
                    Message::AudioChunk(AudioChunk { seq: chunk_seq, bytes: text.into_bytes(), is_final: false }),
                );
            }
            8 if queues[q].is_empty() && len > 1 => {
                let a = rng.gen_range(0..len);
                let b = rng.gen_range(a..=len);
                let (s, e) = h.peers[peer].replica.range(a, b).unwrap();
                let body = match rng.gen_range(0..3) {
                    0 => AnnotationBody::Label { label_id: "L1".into() },
                    1 => AnnotationBody::Highlight { category: "green".into() },
                    _ => AnnotationBody::Note { note_text: "check this".into() },
                };
                h.send_msg(peer, Message::AnnotationOp(AnnotationOp::Add { body, start: s, end: e }));
            }
            9 if !sent.is_empty() => {
                let (p, env) = sent.choose(&mut rng).unwrap().clone();
                let before = (h.events().len(), room_head(&h), h.server_text());
                h.send(p, env);
                duplicates += 1;
                let after = (h.events().len(), room_head(&h), h.server_text());
                if before != after {
                    return Err(format!("seed {seed}: duplicate DOC_OP changed state {before:?} -> {after:?}"));
                }
            }
            10 => h.reconnect(USER),
            _ => h.tick(50),
        }
    }
    for q in 0..2 {
        flush(&mut h, &mut queues, &mut sent, q);
    }
    h.send_msg(W1, Message::MicSet(MicSet { on: false }));

    let server = h.server_text();
    for p in &h.peers {
        if p.replica.text() != server {
            return Err(format!("seed {seed}: {} has {:?}, server {:?}", p.user, p.replica.text(), server));
        }
    }
    let events = h.events();
    let state = replay(&events).map_err(|e| format!("seed {seed}: replay failed at {}: {}", e.seq, e.reason))?;
    if state.doc.text() != server {
        return Err(format!("seed {seed}: replay gave {:?}, server {:?}", state.doc.text(), server));
    }
    let room = h.hub.room(&h.trial_id()).unwrap();
    let room = room.lock();
    let ids = |it: Vec<String>| {
        let mut v = it;
        v.sort();
        v
    };
    let live = ids(room.annotations().iter().map(|a| a.anno_id.clone()).collect());
    let replayed = ids(state.annotations.iter().map(|a| a.anno_id.clone()).collect());
    if live != replayed {
        return Err(format!("seed {seed}: annotations {live:?} vs replay {replayed:?}"));
    }
    if room.doc().resolved_marks() != state.doc.resolved_marks() {
        return Err(format!("seed {seed}: highlight marks differ after replay"));
    }
    for p in &h.peers {
        if p.replica.doc.resolved_marks() != room.doc().resolved_marks() {
            return Err(format!("seed {seed}: {} marks differ", p.user));
        }
        let mut mine: Vec<String> = p.replica.annotations.iter().map(|a| a.anno_id.clone()).collect();
        mine.sort();
        if mine != live {
            return Err(format!("seed {seed}: {} annotations {mine:?} vs {live:?}", p.user));
        }
    }
    Ok(SessionReport {
        text: server,
        events: events.len(),
        duplicates_sent: duplicates,
    })
}

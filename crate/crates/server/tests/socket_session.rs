mod common;

use common::{barrier, barrier_after, without_timestamps, Server, WsPeer};
use wizundry_core::annotations::AnnotationBody;
use wizundry_core::event_log::{parse_csv, EventType, FileLog, LogStore};
use wizundry_core::protocol::{
    AnnotationOp, AudioChunk, ErrorCode, Message, MicSet, SpeechBoxUpsert, SpeechPlay,
};
use wizundry_core::speech::BoxKind;

const GOLDEN_TRANSCRIPT: &str = include_str!("../../core/tests/fixtures/golden_transcript.txt");
const GOLDEN_CSV: &str = include_str!("../../core/tests/fixtures/golden_log.csv");

const ADMIN: usize = 0;
const W1: usize = 1;
const W2: usize = 2;
const USER: usize = 3;

async fn act(peers: &mut [WsPeer], i: usize, msg: Message) {
    peers[i].send_msg(msg).await;
    barrier_after(peers, i).await;
}

async fn speak(peers: &mut [WsPeer], seq: &mut u64, text: &str) {
    *seq += 1;
    let chunk = Message::AudioChunk(AudioChunk {
        seq: *seq,
        bytes: text.as_bytes().to_vec(),
        is_final: false,
    });
    act(peers, USER, chunk).await;
}

fn index_of(peer: &WsPeer, find: &str) -> usize {
    let text = peer.replica.text();
    text[..text.find(find).expect("word present")].chars().count()
}

async fn insert_before(peers: &mut [WsPeer], i: usize, find: &str, text: &str) {
    let at = index_of(&peers[i], find);
    let env = peers[i].replica.insert(at, text).unwrap();
    peers[i].send(env).await;
    barrier_after(peers, i).await;
}

async fn replace(peers: &mut [WsPeer], i: usize, find: &str, with: &str) {
    let at = index_of(&peers[i], find);
    let env = peers[i].replica.delete(at, find.chars().count()).unwrap();
    peers[i].send(env).await;
    barrier_after(peers, i).await;
    let env = peers[i].replica.insert(at, with).unwrap();
    peers[i].send(env).await;
    barrier_after(peers, i).await;
}

/// The scripted dictation from the core golden test, played by four real
/// websocket clients against a listening server.
#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn scripted_session_matches_golden_log() {
    let server = Server::start().await;
    let admin_token = server.login("admin").await;
    let trial = server.create_trial(&admin_token, "harness").await;
    let mut peers = Vec::new();
    for user in ["admin", "w1", "w2", "u1"] {
        peers.push(WsPeer::join(&server, &trial, user).await);
        barrier(&mut peers).await;
    }
    let mut seq = 0;

    act(&mut peers, W1, Message::MicSet(MicSet { on: true })).await;
    speak(&mut peers, &mut seq, "i want to  buy ").await;
    speak(&mut peers, &mut seq, "some milk\n").await;
    speak(&mut peers, &mut seq, "and call my mum").await;
    insert_before(&mut peers, W2, "milk", "oat ").await;
    speak(&mut peers, &mut seq, "\n").await;
    let upsert = Message::SpeechBoxUpsert(SpeechBoxUpsert {
        box_id: None,
        kind: BoxKind::Editable,
        text: "Anything else?".into(),
    });
    act(&mut peers, W1, upsert).await;
    let play = Message::SpeechPlay(SpeechPlay {
        box_id: "B1".into(),
        text: None,
        duration_ms: None,
        box_after: None,
    });
    act(&mut peers, W1, play).await;
    // The server clock ends the utterance.
    peers[W1]
        .until(|e| matches!(&e.message, Message::SpeakerState(s) if !s.active))
        .await;
    barrier(&mut peers).await;
    speak(&mut peers, &mut seq, "remind me at five").await;
    speak(&mut peers, &mut seq, "\n").await;
    act(&mut peers, W1, Message::MicSet(MicSet { on: false })).await;
    replace(&mut peers, W2, "mum", "mom").await;
    replace(&mut peers, W1, "five", "5 pm").await;

    let text = peers[W1].replica.text();
    let line2 = text.find("And").unwrap();
    let end = line2 + "And call my mom.".len();
    let (s, e) = peers[W1].replica.range(line2, end).unwrap();
    let highlight = Message::AnnotationOp(AnnotationOp::Add {
        body: AnnotationBody::Highlight {
            category: "yellow".into(),
        },
        start: s,
        end: e,
    });
    act(&mut peers, W1, highlight).await;
    let note = Message::AnnotationOp(AnnotationOp::Add {
        body: AnnotationBody::Note {
            note_text: "user prefers oat milk".into(),
        },
        start: s,
        end: e,
    });
    act(&mut peers, W2, note).await;

    assert_eq!(peers[USER].replica.text(), GOLDEN_TRANSCRIPT);
    for p in &peers {
        assert_eq!(p.replica.text(), GOLDEN_TRANSCRIPT, "{}", p.user);
        assert_eq!(p.replica.annotations.len(), 2, "{}: {:?}", p.user, p.replica.annotations);
        assert!(p.replica.errors.is_empty(), "{}: {:?}", p.user, p.replica.errors);
    }
    // Every client saw the same broadcast order.
    let seqs = |p: &WsPeer| -> Vec<u64> { p.received.iter().filter_map(|e| e.server_seq).collect() };
    for p in &peers {
        assert!(seqs(p).windows(2).all(|w| w[0] < w[1]), "{}", p.user);
    }
    let w2 = seqs(&peers[W2]);
    let w1: Vec<u64> = seqs(&peers[W1]).into_iter().filter(|s| *s >= w2[0]).collect();
    assert_eq!(w1, w2);

    let csv = server.log_csv(&admin_token, &trial).await;
    assert_eq!(without_timestamps(&csv), without_timestamps(GOLDEN_CSV));
    let events = parse_csv(&csv).unwrap();
    assert!(events.windows(2).all(|w| w[0].timestamp_ms <= w[1].timestamp_ms));
    assert!(peers[ADMIN].replica.errors.is_empty());
    server.running.stop().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn handshake_and_decode_errors() {
    let server = Server::start().await;
    let admin_token = server.login("admin").await;
    let trial = server.create_trial(&admin_token, "errors").await;

    // Garbage before the handshake: ERROR, socket stays usable.
    let mut p = WsPeer {
        user: "w1".into(),
        ws: server.socket().await,
        replica: wizundry_core::client::ClientReplica::new(&trial),
        received: Vec::new(),
        close: None,
    };
    p.send_raw("12:{\"type\":").await;
    let env = p.next().await.unwrap();
    assert!(matches!(&env.message, Message::Error(e) if e.code == ErrorCode::DecodeError), "{env:?}");
    p.send_msg(Message::MicSet(MicSet { on: true })).await;
    let env = p.next().await.unwrap();
    assert!(matches!(&env.message, Message::Error(e) if e.code == ErrorCode::NotHandshaken), "{env:?}");
    let token = server.login("w1").await;
    let hello = p.replica.hello(&token);
    p.send(hello).await;
    p.until(|e| matches!(e.message, Message::Welcome(_))).await;

    // A bad token: ERROR then a policy close carrying the code.
    let mut q = WsPeer {
        user: "w2".into(),
        ws: server.socket().await,
        replica: wizundry_core::client::ClientReplica::new(&trial),
        received: Vec::new(),
        close: None,
    };
    let hello = q.replica.hello("not-a-token");
    q.send(hello).await;
    let env = q.next().await.unwrap();
    assert!(matches!(&env.message, Message::Error(e) if e.code == ErrorCode::AuthFailed), "{env:?}");
    let frame = q.closed().await.expect("close frame");
    assert_eq!(u16::from(frame.code), 1008);
    assert_eq!(frame.reason.as_str(), "AUTH_FAILED");

    // Unknown trial.
    let mut r = WsPeer {
        user: "w2".into(),
        ws: server.socket().await,
        replica: wizundry_core::client::ClientReplica::new("t404"),
        received: Vec::new(),
        close: None,
    };
    let token = server.login("w2").await;
    let hello = r.replica.hello(&token);
    r.send(hello).await;
    let env = r.next().await.unwrap();
    assert!(matches!(&env.message, Message::Error(e) if e.code == ErrorCode::UnknownTrial), "{env:?}");
    assert_eq!(r.closed().await.unwrap().reason.as_str(), "UNKNOWN_TRIAL");
    server.running.stop().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn reconnect_replays_the_gap() {
    let server = Server::start().await;
    let admin_token = server.login("admin").await;
    let trial = server.create_trial(&admin_token, "gap").await;
    let mut w1 = WsPeer::join(&server, &trial, "w1").await;
    let mut u1 = WsPeer::join(&server, &trial, "u1").await;
    w1.sync().await;
    u1.sync().await;
    let last = u1.replica.last_server_seq;
    let replica = u1.replica.clone();
    drop(u1);
    for i in 0..5 {
        let len = w1.replica.doc.len();
        let env = w1.replica.insert(len, &format!("{i} ")).unwrap();
        w1.send(env).await;
        w1.sync().await;
    }
    let head = w1.replica.last_server_seq;
    let token = server.login("u1").await;
    let mut back = WsPeer {
        user: "u1".into(),
        ws: server.socket().await,
        replica,
        received: Vec::new(),
        close: None,
    };
    let hello = back.replica.hello(&token);
    back.send(hello).await;
    back.sync().await;
    let got: Vec<u64> = back.received.iter().filter_map(|e| e.server_seq).collect();
    // The LEAVE of the old socket and the new JOIN may land in the gap too.
    assert!(got.windows(2).all(|w| w[1] == w[0] + 1), "{got:?}");
    assert_eq!(got.first(), Some(&(last + 1)));
    assert!(*got.last().unwrap() >= head);
    assert_eq!(back.replica.text(), "0 1 2 3 4 ");
    server.running.stop().await.unwrap();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn shutdown_closes_trials_and_keeps_the_log() {
    let server = Server::start().await;
    let admin_token = server.login("admin").await;
    let trial = server.create_trial(&admin_token, "shutdown").await;
    let mut w1 = WsPeer::join(&server, &trial, "w1").await;
    for word in ["one ", "two "] {
        let len = w1.replica.doc.len();
        let env = w1.replica.insert(len, word).unwrap();
        w1.send(env).await;
    }
    w1.sync().await;
    let data = server.dir.path().join("data");
    server.running.stop().await.unwrap();
    let frame = w1.closed().await.expect("close frame");
    assert_eq!(u16::from(frame.code), 1001);

    let log = FileLog::open(&data).unwrap();
    let events = log.events(&trial).unwrap();
    let types: Vec<EventType> = events.iter().map(|e| e.event_type).collect();
    assert_eq!(
        types,
        [
            EventType::TrialOpen,
            EventType::Join,
            EventType::DocInsert,
            EventType::DocInsert,
            EventType::TrialClose,
        ]
    );
    assert_eq!(events.last().unwrap().actor_id, "system");
}

#[tokio::test]
async fn bind_failure_is_reported() {
    let server = Server::start().await;
    let dir = tempfile::tempdir().unwrap();
    let mut config = wizundry_server::config::ServerConfig::new("s", dir.path());
    config.listen_address = server.running.addr;
    let err = match wizundry_server::serve::start(&config).await {
        Ok(_) => panic!("second bind succeeded"),
        Err(e) => e,
    };
    assert!(err.to_string().starts_with("BIND_FAILED"), "{err}");
    server.running.stop().await.unwrap();
}

#![allow(dead_code)]

pub mod convergence;
pub mod golden;
pub mod matrix;
pub mod segmenter;
pub mod sessions;
pub mod tlx;

use std::sync::Arc;

use wizundry_core::auth::Claims;
use wizundry_core::client::ClientReplica;
use wizundry_core::clock::ManualClock;
use wizundry_core::event_log::{LogEvent, LogStore, MemoryLog};
use wizundry_core::hub::{Hub, HubConfig};
use wizundry_core::outlet::MemoryOutlet;
use wizundry_core::protocol::{decode, encode, Envelope, ErrorCode, Message};
use wizundry_core::room::ConnId;
use wizundry_core::speech::{MockStt, MockTts, SttProvider};
use wizundry_core::trial::{FeatureAssignment, Role, Trial};

pub const SECRET: &str = "harness-secret";
pub const T0: u64 = 1_700_000_000_000;

pub struct Peer {
    pub user: String,
    pub role: Role,
    pub conn: ConnId,
    pub outlet: MemoryOutlet,
    pub replica: ClientReplica,
    pub received: Vec<Envelope>,
}

pub struct Harness {
    pub hub: Hub,
    pub clock: ManualClock,
    pub log: Arc<MemoryLog>,
    pub tts: MockTts,
    pub trial: Trial,
    pub peers: Vec<Peer>,
}

pub fn admin_claims() -> Claims {
    Claims {
        user_id: "admin".into(),
        role: Role::Admin,
        trial_id: None,
        issued_at: T0,
        expires_at: u64::MAX,
    }
}

/// Every envelope crosses the frame codec, as it would on a socket.
pub fn wire(env: Envelope) -> Envelope {
    let back = decode(&encode(&env)).unwrap_or_else(|e| panic!("{e} for {env:?}"));
    assert_eq!(back, env, "frame round trip changed the envelope");
    back
}

impl Harness {
    pub fn new(assignments: Vec<FeatureAssignment>) -> Self {
        let clock = ManualClock::new(T0);
        let log = Arc::new(MemoryLog::new());
        let tts = MockTts::new();
        let hub = Hub::new(
            HubConfig {
                secret: SECRET.into(),
                token_ttl_ms: 3_600_000,
                presence_ttl_ms: 30_000,
            },
            Arc::new(clock.clone()),
            log.clone(),
            Arc::new(tts.clone()),
            Arc::new(|| Box::new(MockStt::new()) as Box<dyn SttProvider>),
        );
        let trial = hub
            .create_trial(&admin_claims(), "harness", assignments)
            .unwrap();
        Self {
            hub,
            clock,
            log,
            tts,
            trial,
            peers: Vec::new(),
        }
    }

    pub fn trial_id(&self) -> String {
        self.trial.trial_id.clone()
    }

    pub fn token(&self, user: &str, role: Role) -> String {
        self.hub.issue_token(user, role, None).unwrap()
    }

    /// Connects and handshakes; returns the peer index.
    pub fn join(&mut self, user: &str, role: Role) -> usize {
        let outlet = MemoryOutlet::default();
        let conn = self.hub.connect(Arc::new(outlet.clone()));
        let replica = ClientReplica::new(self.trial_id());
        let hello = replica.hello(&self.token(user, role));
        self.hub.receive(conn, wire(hello));
        self.peers.push(Peer {
            user: user.into(),
            role,
            conn,
            outlet,
            replica,
            received: Vec::new(),
        });
        let i = self.peers.len() - 1;
        self.pump();
        i
    }

    /// Admin, two wizards and the end-user, in that order.
    pub fn four(assignments: Vec<FeatureAssignment>) -> Self {
        let mut h = Self::new(assignments);
        h.join("admin", Role::Admin);
        h.join("w1", Role::Wizard);
        h.join("w2", Role::Wizard);
        h.join("u1", Role::EndUser);
        h.clear();
        h
    }

    pub fn reconnect(&mut self, i: usize) {
        self.hub.disconnect(self.peers[i].conn);
        let outlet = MemoryOutlet::default();
        let conn = self.hub.connect(Arc::new(outlet.clone()));
        let token = self.token(&self.peers[i].user.clone(), self.peers[i].role);
        let hello = self.peers[i].replica.hello(&token);
        self.hub.receive(conn, wire(hello));
        self.peers[i].conn = conn;
        self.peers[i].outlet = outlet;
        self.pump();
    }

    pub fn send(&mut self, i: usize, env: Envelope) {
        let env = wire(env);
        self.hub.receive(self.peers[i].conn, env);
        self.pump();
    }

    pub fn send_msg(&mut self, i: usize, msg: Message) {
        let env = self.peers[i].replica.envelope(msg);
        self.send(i, env);
    }

    pub fn pump(&mut self) {
        for p in &mut self.peers {
            for env in p.outlet.drain() {
                let env = wire(env);
                p.replica.apply(&env);
                p.received.push(env);
            }
        }
    }

    pub fn tick(&mut self, advance_ms: u64) {
        self.clock.advance(advance_ms);
        self.hub.tick();
        self.pump();
    }

    pub fn clear(&mut self) {
        for p in &mut self.peers {
            p.received.clear();
            p.replica.errors.clear();
        }
    }

    pub fn last_error(&self, i: usize) -> Option<ErrorCode> {
        self.peers[i].received.iter().rev().find_map(|e| match &e.message {
            Message::Error(p) => Some(p.code),
            _ => None,
        })
    }

    pub fn events(&self) -> Vec<LogEvent> {
        self.log.events(&self.trial.trial_id).unwrap()
    }

    pub fn server_text(&self) -> String {
        self.hub.room(&self.trial.trial_id).unwrap().lock().text()
    }
}

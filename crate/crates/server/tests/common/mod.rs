#![allow(dead_code)]

use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::protocol::CloseFrame;
use tokio_tungstenite::tungstenite::Message as WsMessage;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};
use wizundry_core::client::ClientReplica;
use wizundry_core::protocol::{decode, encode_string, Envelope, Message};
use wizundry_core::trial::Role;
use wizundry_server::config::{ServerConfig, UserEntry};
use wizundry_server::serve::{start, Running};

pub const SECRET: &str = "socket-secret";
pub const WAIT: Duration = Duration::from_secs(10);

pub struct Server {
    pub running: Running,
    pub http: reqwest::Client,
    pub dir: tempfile::TempDir,
}

pub fn users() -> Vec<UserEntry> {
    [("admin", Role::Admin), ("w1", Role::Wizard), ("w2", Role::Wizard), ("u1", Role::EndUser)]
        .into_iter()
        .map(|(u, role)| UserEntry {
            user_id: u.into(),
            password: format!("{u}-pw"),
            role,
        })
        .collect()
}

impl Server {
    pub async fn start() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ServerConfig::new(SECRET, dir.path().join("data"));
        config.listen_address = "127.0.0.1:0".parse().unwrap();
        config.users = users();
        let running = start(&config).await.unwrap();
        Self {
            running,
            http: reqwest::Client::new(),
            dir,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.running.addr)
    }

    pub async fn login(&self, user: &str) -> String {
        let res = self
            .http
            .post(self.url("/auth/login"))
            .json(&json!({"userId": user, "password": format!("{user}-pw")}))
            .send()
            .await
            .unwrap();
        assert!(res.status().is_success());
        let v: Value = res.json().await.unwrap();
        v["token"].as_str().unwrap().to_owned()
    }

    pub async fn create_trial(&self, admin_token: &str, name: &str) -> String {
        let res = self
            .http
            .post(self.url("/trials"))
            .bearer_auth(admin_token)
            .json(&json!({"name": name}))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status().as_u16(), 201);
        let v: Value = res.json().await.unwrap();
        v["trialId"].as_str().unwrap().to_owned()
    }

    pub async fn log_csv(&self, admin_token: &str, trial: &str) -> String {
        let res = self
            .http
            .get(self.url(&format!("/trials/{trial}/log.csv")))
            .bearer_auth(admin_token)
            .send()
            .await
            .unwrap();
        assert!(res.status().is_success());
        res.text().await.unwrap()
    }

    pub async fn socket(&self) -> WebSocketStream<MaybeTlsStream<TcpStream>> {
        let (ws, _) = connect_async(format!("ws://{}/ws", self.running.addr)).await.unwrap();
        ws
    }
}

/// A websocket client holding a full replica.
pub struct WsPeer {
    pub user: String,
    pub ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    pub replica: ClientReplica,
    pub received: Vec<Envelope>,
    pub close: Option<CloseFrame>,
}

impl WsPeer {
    pub async fn join(server: &Server, trial: &str, user: &str) -> Self {
        let token = server.login(user).await;
        let mut peer = Self {
            user: user.into(),
            ws: server.socket().await,
            replica: ClientReplica::new(trial),
            received: Vec::new(),
            close: None,
        };
        let hello = peer.replica.hello(&token);
        peer.send(hello).await;
        peer.until(|e| matches!(e.message, Message::Welcome(_))).await;
        peer
    }

    pub async fn send(&mut self, env: Envelope) {
        self.ws.send(WsMessage::text(encode_string(&env))).await.unwrap();
    }

    pub async fn send_msg(&mut self, msg: Message) {
        let env = self.replica.envelope(msg);
        self.send(env).await;
    }

    pub async fn send_raw(&mut self, text: &str) {
        self.ws.send(WsMessage::text(text)).await.unwrap();
    }

    /// Next envelope, or None once the server has closed the socket.
    pub async fn next(&mut self) -> Option<Envelope> {
        loop {
            let msg = tokio::time::timeout(WAIT, self.ws.next())
                .await
                .unwrap_or_else(|_| panic!("{}: nothing received within {WAIT:?}", self.user));
            match msg {
                Some(Ok(WsMessage::Text(t))) => {
                    let env = decode(t.as_bytes()).unwrap();
                    self.replica.apply(&env);
                    self.received.push(env.clone());
                    return Some(env);
                }
                Some(Ok(WsMessage::Close(frame))) => {
                    self.close = frame;
                }
                Some(Ok(_)) => {}
                Some(Err(_)) | None => return None,
            }
        }
    }

    pub async fn until(&mut self, pred: impl Fn(&Envelope) -> bool) -> Envelope {
        loop {
            let env = self
                .next()
                .await
                .unwrap_or_else(|| panic!("{}: socket closed while waiting", self.user));
            if pred(&env) {
                return env;
            }
        }
    }

    /// Round trip through the room: everything the server queued for this
    /// peer before the request has been applied afterwards.
    pub async fn sync(&mut self) {
        let req = self.replica.sync_request();
        self.send(req).await;
        self.until(|e| matches!(e.message, Message::SyncResponse(_))).await;
    }

    /// Reads until the server closes the socket.
    pub async fn closed(&mut self) -> Option<CloseFrame> {
        while self.next().await.is_some() {}
        self.close.clone()
    }
}

/// Waits until the room has processed everything `sender` sent and every
/// peer has applied the resulting broadcasts. Sockets are not ordered with
/// respect to each other, so the sender's round trip must come first.
pub async fn barrier_after(peers: &mut [WsPeer], sender: usize) {
    peers[sender].sync().await;
    for (i, p) in peers.iter_mut().enumerate() {
        if i != sender {
            p.sync().await;
        }
    }
}

pub async fn barrier(peers: &mut [WsPeer]) {
    let last = peers.len() - 1;
    barrier_after(peers, last).await;
}

/// Zeroes the timestamp column so logs from different clocks compare.
pub fn without_timestamps(csv: &str) -> String {
    csv.lines()
        .enumerate()
        .map(|(i, line)| {
            if i == 0 {
                return line.to_owned();
            }
            let mut parts = line.splitn(3, ',');
            let seq = parts.next().unwrap();
            let _ts = parts.next().unwrap();
            format!("{seq},0,{}", parts.next().unwrap())
        })
        .collect::<Vec<_>>()
        .join("\n")
}

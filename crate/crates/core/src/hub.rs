//! Trial registry and connection front door. Transports hand every inbound
//! frame to [`Hub::receive_frame`]; outbound traffic goes through the
//! [`Outlet`] registered at connect time.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};

use crate::auth::{issue_token, verify_token, AuthError, Claims};
use crate::clock::Clock;
use crate::event_log::{export_csv, LogError, LogStore};
use crate::outlet::{CloseReason, Outlet};
use crate::protocol::{decode, Envelope, EnvelopeType, ErrorCode, ErrorPayload, Message};
use crate::room::{ConnId, Reject, RoomDeps, TrialRoom};
use crate::speech::{SttProvider, TtsProvider};
use crate::trial::{require_role, FeatureAssignment, FeatureSet, Role, Trial, TrialError};

pub type SttFactory = Arc<dyn Fn() -> Box<dyn SttProvider> + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum HubError {
    #[error(transparent)]
    Auth(#[from] AuthError),
    #[error(transparent)]
    Trial(#[from] TrialError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{}", .0.message)]
    Rejected(Reject),
}

impl HubError {
    pub fn code(&self) -> ErrorCode {
        match self {
            HubError::Auth(e) => e.code(),
            HubError::Trial(e) => e.code(),
            HubError::Log(e) => e.code(),
            HubError::Rejected(r) => r.code,
        }
    }
}

impl From<Reject> for HubError {
    fn from(r: Reject) -> Self {
        HubError::Rejected(r)
    }
}

pub struct HubConfig {
    pub secret: String,
    pub token_ttl_ms: u64,
    pub presence_ttl_ms: u64,
}

struct ConnState {
    outlet: Arc<dyn Outlet>,
    trial_id: Option<String>,
}

pub struct Hub {
    secret: String,
    token_ttl_ms: u64,
    deps: RoomDeps,
    stt: SttFactory,
    rooms: RwLock<BTreeMap<String, Arc<Mutex<TrialRoom>>>>,
    // Never held while a room is locked.
    conns: Mutex<HashMap<ConnId, ConnState>>,
    next_conn: AtomicU64,
    next_trial: AtomicU64,
}

impl Hub {
    pub fn new(
        config: HubConfig,
        clock: Arc<dyn Clock>,
        log: Arc<dyn LogStore>,
        tts: Arc<dyn TtsProvider>,
        stt: SttFactory,
    ) -> Self {
        Self {
            secret: config.secret,
            token_ttl_ms: config.token_ttl_ms,
            deps: RoomDeps {
                clock,
                log,
                tts,
                presence_ttl_ms: config.presence_ttl_ms,
            },
            stt,
            rooms: RwLock::new(BTreeMap::new()),
            conns: Mutex::new(HashMap::new()),
            next_conn: AtomicU64::new(1),
            next_trial: AtomicU64::new(1),
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.deps.clock.now_ms()
    }

    pub fn log_store(&self) -> &Arc<dyn LogStore> {
        &self.deps.log
    }

    pub fn issue_token(&self, user_id: &str, role: Role, trial_id: Option<&str>) -> Result<String, HubError> {
        Ok(issue_token(
            user_id,
            role,
            trial_id,
            &self.secret,
            self.token_ttl_ms,
            self.now_ms(),
        )?)
    }

    pub fn verify(&self, token: &str) -> Result<Claims, HubError> {
        Ok(verify_token(token, &self.secret, self.now_ms())?)
    }

    pub fn room(&self, trial_id: &str) -> Option<Arc<Mutex<TrialRoom>>> {
        self.rooms.read().get(trial_id).cloned()
    }

    fn rooms(&self) -> Vec<Arc<Mutex<TrialRoom>>> {
        self.rooms.read().values().cloned().collect()
    }

    pub fn create_trial(
        &self,
        claims: &Claims,
        name: &str,
        assignments: Vec<FeatureAssignment>,
    ) -> Result<Trial, HubError> {
        require_role(claims, Role::Admin)?;
        let mut rooms = self.rooms.write();
        let existing = self.deps.log.trial_ids()?;
        // The registry write lock serialises creation, so the counter only
        // moves once the trial is valid.
        let mut n = self.next_trial.load(Ordering::Relaxed);
        let id = loop {
            let id = format!("t{n}");
            n += 1;
            if !rooms.contains_key(&id) && !existing.contains(&id) {
                break id;
            }
        };
        let trial = Trial::new(id.clone(), name, self.now_ms(), assignments)?;
        self.next_trial.store(n, Ordering::Relaxed);
        self.deps.log.create(&id)?;
        let room = TrialRoom::new(trial.clone(), self.deps.clone(), (self.stt)());
        rooms.insert(id, Arc::new(Mutex::new(room)));
        Ok(trial)
    }

    pub fn list_trials(&self, claims: &Claims) -> Result<Vec<Trial>, HubError> {
        require_role(claims, Role::Admin)?;
        Ok(self.rooms().iter().map(|r| r.lock().trial().clone()).collect())
    }

    /// Closes the trial and drops its connections. The log is kept, and so
    /// is the registry entry (as CLOSED) so the log stays downloadable.
    pub fn delete_trial(&self, claims: &Claims, trial_id: &str) -> Result<(), HubError> {
        require_role(claims, Role::Admin)?;
        let room = self
            .room(trial_id)
            .ok_or_else(|| TrialError::UnknownTrial(trial_id.to_owned()))?;
        room.lock().close(&claims.user_id, CloseReason::TrialClosed);
        self.unbind_trial(trial_id);
        Ok(())
    }

    pub fn assign_features(
        &self,
        claims: &Claims,
        trial_id: &str,
        actor_id: &str,
        features: FeatureSet,
    ) -> Result<FeatureSet, HubError> {
        require_role(claims, Role::Admin)?;
        let room = self
            .room(trial_id)
            .ok_or_else(|| TrialError::UnknownTrial(trial_id.to_owned()))?;
        let mut room = room.lock();
        Ok(room.assign_features(&claims.user_id, actor_id, features)?)
    }

    pub fn export_csv(&self, claims: &Claims, trial_id: &str) -> Result<String, HubError> {
        require_role(claims, Role::Admin)?;
        if !self.deps.log.trial_ids()?.iter().any(|t| t == trial_id) {
            return Err(TrialError::UnknownTrial(trial_id.to_owned()).into());
        }
        Ok(export_csv(&self.deps.log.events(trial_id)?))
    }

    pub fn connect(&self, outlet: Arc<dyn Outlet>) -> ConnId {
        let id = self.next_conn.fetch_add(1, Ordering::Relaxed);
        self.conns.lock().insert(
            id,
            ConnState {
                outlet,
                trial_id: None,
            },
        );
        id
    }

    pub fn connection_count(&self) -> usize {
        self.conns.lock().len()
    }

    pub fn disconnect(&self, conn: ConnId) {
        let state = self.conns.lock().remove(&conn);
        if let Some(trial) = state.and_then(|s| s.trial_id) {
            if let Some(room) = self.room(&trial) {
                room.lock().disconnect(conn);
            }
        }
    }

    fn unbind_trial(&self, trial_id: &str) {
        for s in self.conns.lock().values_mut() {
            if s.trial_id.as_deref() == Some(trial_id) {
                s.trial_id = None;
            }
        }
    }

    fn send_error(outlet: &dyn Outlet, trial_id: &str, code: ErrorCode, message: String, ref_type: Option<EnvelopeType>) {
        let env = Envelope::new(
            trial_id,
            "",
            Message::Error(ErrorPayload {
                code,
                message,
                ref_type: ref_type.map(|t| t.as_str().to_owned()),
            }),
        );
        outlet.push(&env);
    }

    /// Decodes one frame and processes it. Undecodable frames get an ERROR
    /// reply; the connection stays open.
    pub fn receive_frame(&self, conn: ConnId, bytes: &[u8]) {
        match decode(bytes) {
            Ok(env) => self.receive(conn, env),
            Err(e) => {
                let outlet = self.conns.lock().get(&conn).map(|s| Arc::clone(&s.outlet));
                if let Some(o) = outlet {
                    Self::send_error(o.as_ref(), "", e.code(), e.to_string(), None);
                }
            }
        }
    }

    pub fn receive(&self, conn: ConnId, env: Envelope) {
        let Some((outlet, bound)) = self
            .conns
            .lock()
            .get(&conn)
            .map(|s| (Arc::clone(&s.outlet), s.trial_id.clone()))
        else {
            return;
        };
        match bound {
            Some(trial_id) => {
                let Some(room) = self.room(&trial_id) else {
                    return;
                };
                let mut room = room.lock();
                if room.has_conn(conn) {
                    room.handle(conn, env);
                }
            }
            None => self.handshake(conn, outlet, env),
        }
    }

    fn handshake(&self, conn: ConnId, outlet: Arc<dyn Outlet>, env: Envelope) {
        let kind = env.kind();
        let Message::Hello(hello) = env.message else {
            Self::send_error(
                outlet.as_ref(),
                &env.trial_id,
                ErrorCode::NotHandshaken,
                "send HELLO first".into(),
                Some(kind),
            );
            return;
        };
        let fail = |code: ErrorCode, message: String| {
            Self::send_error(outlet.as_ref(), &env.trial_id, code, message, Some(kind));
            outlet.close(CloseReason::Error(code));
        };
        let claims = match self.verify(&hello.token) {
            Ok(c) => c,
            Err(e) => return fail(ErrorCode::AuthFailed, e.to_string()),
        };
        let trial_id = if env.trial_id.is_empty() {
            claims.trial_id.clone().unwrap_or_default()
        } else {
            env.trial_id.clone()
        };
        let Some(room) = self.room(&trial_id) else {
            return fail(ErrorCode::UnknownTrial, format!("unknown trial {trial_id:?}"));
        };
        let mut room = room.lock();
        if room.trial().is_closed() {
            return fail(ErrorCode::TrialClosed, format!("trial {trial_id} is closed"));
        }
        match room.join(conn, Arc::clone(&outlet), &claims, &hello) {
            Ok(()) => {
                if let Some(s) = self.conns.lock().get_mut(&conn) {
                    s.trial_id = Some(trial_id);
                }
            }
            Err(r) => fail(r.code, r.message),
        }
    }

    /// Periodic housekeeping for every open trial.
    pub fn tick(&self) {
        for room in self.rooms() {
            let mut room = room.lock();
            if !room.trial().is_closed() {
                room.tick();
            }
        }
    }

    /// Closes every open trial (logging TRIAL_CLOSE) and drops all
    /// connections.
    pub fn shutdown(&self) {
        for room in self.rooms() {
            room.lock().close(crate::event_log::SYSTEM_ACTOR, CloseReason::Shutdown);
        }
        let conns: Vec<Arc<dyn Outlet>> = self
            .conns
            .lock()
            .drain()
            .map(|(_, s)| s.outlet)
            .collect();
        for o in conns {
            o.close(CloseReason::Shutdown);
        }
    }
}

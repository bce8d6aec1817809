//! Process lifecycle: build the hub, bind, tick, shut down.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use wizundry_core::clock::SystemClock;
use wizundry_core::event_log::FileLog;
use wizundry_core::hub::{Hub, HubConfig, SttFactory};
use wizundry_core::speech::{ExternalCommandStt, MockStt, MockTts, SttProvider, TranscriptEvent};

use crate::config::{ensure_data_dir, ConfigError, ServerConfig, SttProviderKind, TtsProviderKind};
use crate::http::{router, AppState};

pub const TICK_INTERVAL: Duration = Duration::from_millis(50);

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("BIND_FAILED: {addr}: {source}")]
    BindFailed {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("cannot open event log: {0}")]
    Log(#[from] wizundry_core::event_log::LogError),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Stand-in when the external recogniser cannot be started: the trial
/// still runs, the failure is in the server log, and no text arrives.
struct UnavailableStt;

impl SttProvider for UnavailableStt {
    fn push_chunk(&mut self, _bytes: &[u8]) -> Vec<TranscriptEvent> {
        Vec::new()
    }

    fn flush(&mut self) -> Vec<TranscriptEvent> {
        Vec::new()
    }
}

fn stt_factory(config: &ServerConfig) -> SttFactory {
    match config.stt.provider {
        SttProviderKind::Mock => Arc::new(|| Box::new(MockStt::new()) as Box<dyn SttProvider>),
        SttProviderKind::ExternalCommand => {
            let program = config.stt.command.clone().unwrap_or_default();
            let args = config.stt.args.clone();
            Arc::new(move || match ExternalCommandStt::spawn(&program, &args) {
                Ok(stt) => Box::new(stt) as Box<dyn SttProvider>,
                Err(e) => {
                    tracing::error!(%program, "cannot start speech recogniser: {e}");
                    Box::new(UnavailableStt)
                }
            })
        }
    }
}

/// Builds the hub over a file log in `dataDir`.
pub fn build_hub(config: &ServerConfig) -> Result<Arc<Hub>, ServeError> {
    ensure_data_dir(&config.data_dir)?;
    let log = FileLog::open(&config.data_dir)?;
    let tts = match config.tts.provider {
        TtsProviderKind::Mock => MockTts::new(),
    };
    Ok(Arc::new(Hub::new(
        HubConfig {
            secret: config.secret.clone(),
            token_ttl_ms: config.token_ttl_seconds * 1000,
            presence_ttl_ms: config.presence_ttl_seconds * 1000,
        },
        Arc::new(SystemClock),
        Arc::new(log),
        Arc::new(tts),
        stt_factory(config),
    )))
}

/// A server bound and running in the background.
pub struct Running {
    pub addr: SocketAddr,
    pub hub: Arc<Hub>,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<Result<(), ServeError>>,
}

impl Running {
    /// Graceful stop: every open trial is closed and logged, sockets are
    /// drained, then the listener goes away.
    pub async fn stop(mut self) -> Result<(), ServeError> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        self.task
            .await
            .map_err(|e| ServeError::Io(std::io::Error::other(e)))?
    }
}

pub async fn start(config: &ServerConfig) -> Result<Running, ServeError> {
    let hub = build_hub(config)?;
    let listener = TcpListener::bind(config.listen_address)
        .await
        .map_err(|source| ServeError::BindFailed {
            addr: config.listen_address,
            source,
        })?;
    let addr = listener.local_addr()?;
    let state = AppState {
        hub: hub.clone(),
        users: Arc::new(config.users.clone()),
    };
    let app = router(state, config.static_dir.as_deref());
    let (tx, rx) = oneshot::channel();
    let task = tokio::spawn(run(listener, app, hub.clone(), async {
        let _ = rx.await;
    }));
    tracing::info!(%addr, "listening");
    Ok(Running {
        addr,
        hub,
        stop: Some(tx),
        task,
    })
}

async fn run(
    listener: TcpListener,
    app: axum::Router,
    hub: Arc<Hub>,
    stop: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let ticker = {
        let hub = hub.clone();
        tokio::spawn(async move {
            let mut interval = tokio::time::interval(TICK_INTERVAL);
            interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                interval.tick().await;
                hub.tick();
            }
        })
    };
    let shutdown_hub = hub.clone();
    let result = axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            stop.await;
            tracing::info!("shutting down");
            shutdown_hub.shutdown();
        })
        .await;
    ticker.abort();
    result.map_err(ServeError::Io)
}

/// Resolves on SIGINT or SIGTERM (Ctrl-C elsewhere). The handlers are
/// installed before this returns, so no signal is missed while starting.
pub fn termination_signal() -> std::io::Result<impl Future<Output = ()>> {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut int = signal(SignalKind::interrupt())?;
        let mut term = signal(SignalKind::terminate())?;
        Ok(async move {
            tokio::select! {
                _ = int.recv() => {}
                _ = term.recv() => {}
            }
        })
    }
    #[cfg(not(unix))]
    {
        Ok(async {
            let _ = tokio::signal::ctrl_c().await;
        })
    }
}

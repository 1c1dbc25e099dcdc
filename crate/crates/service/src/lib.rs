//! Registry, job workers and HTTP service for the annotation backend.

pub mod api;
pub mod registry;

use std::net::{SocketAddr, TcpListener};
use std::path::PathBuf;
use std::thread::JoinHandle;

use thiserror::Error;
use tokio::sync::oneshot;

pub use registry::{Registry, RegistryError};

pub const ENV_ADDR: &str = "LAB_ADDR";
pub const ENV_STORE: &str = "LAB_STORE";
pub const ENV_WORKERS: &str = "LAB_WORKERS";

#[derive(Debug, Clone, PartialEq)]
pub struct ServeConfig {
    pub addr: SocketAddr,
    pub store: PathBuf,
    pub workers: usize,
    /// Path prefix for every endpoint, e.g. `/api`; empty for the root.
    pub prefix: String,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            store: PathBuf::from("store"),
            workers: 1,
            prefix: String::new(),
        }
    }
}

impl ServeConfig {
    /// Defaults overridden by `LAB_ADDR`, `LAB_STORE` and `LAB_WORKERS`.
    pub fn from_env() -> Result<Self, ServeError> {
        let mut cfg = Self::default();
        if let Ok(addr) = std::env::var(ENV_ADDR) {
            cfg.addr = addr.parse().map_err(|_| ServeError::Config(format!("{ENV_ADDR}={addr:?}")))?;
        }
        if let Ok(store) = std::env::var(ENV_STORE) {
            cfg.store = store.into();
        }
        if let Ok(workers) = std::env::var(ENV_WORKERS) {
            cfg.workers = workers
                .parse()
                .map_err(|_| ServeError::Config(format!("{ENV_WORKERS}={workers:?}")))?;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Store(#[from] RegistryError),
    #[error("invalid setting {0}")]
    Config(String),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// A server running on its own thread; dropping it shuts it down.
pub struct ServerHandle {
    pub addr: SocketAddr,
    registry: Registry,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Drains in-flight requests, then stops the workers; running jobs are
    /// recorded as interrupted.
    pub fn stop(mut self) -> Result<(), ServeError> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> Result<(), ServeError> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        let res = match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        };
        self.registry.shutdown();
        res.map_err(ServeError::from)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}

/// Opens the store, starts the workers and serves on a background thread.
pub fn spawn(cfg: &ServeConfig) -> Result<ServerHandle, ServeError> {
    let registry = Registry::open(&cfg.store)?;
    let listener = TcpListener::bind(cfg.addr).map_err(|source| ServeError::BindFailure { addr: cfg.addr, source })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    registry.spawn_workers(cfg.workers.max(1));
    let app = api::router(registry.clone(), &cfg.prefix);
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, app)
                .with_graceful_shutdown(async move {
                    let _ = rx.await;
                })
                .await
        })
    });
    Ok(ServerHandle {
        addr,
        registry,
        stop: Some(tx),
        thread: Some(thread),
    })
}

/// Serves until Ctrl-C, then shuts down gracefully.
pub fn run_until_signal(cfg: &ServeConfig, on_ready: impl FnOnce(SocketAddr)) -> Result<(), ServeError> {
    let handle = spawn(cfg)?;
    on_ready(handle.addr);
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()?
        .block_on(tokio::signal::ctrl_c())?;
    handle.stop()
}

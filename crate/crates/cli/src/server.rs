// SPDX-License-Identifier: Apache-2.0

//! Starts and stops the HTTP API and both session listeners together.

use std::fmt::Write as _;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use amdt_core::stream::DEFAULT_MAX_CHUNK_BYTES;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tokio::task::JoinHandle;

use crate::catalog::{Catalog, DatasetKind};
use crate::error::{CliError, ExitClass};
use crate::http::{router, ApiState};
use crate::session::{serve_tcp, ws_router, Hub};

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub data_root: PathBuf,
    pub host: IpAddr,
    /// 0 picks a free port; see [`RunningServer`] for the bound address.
    pub port: u16,
    pub session_port: u16,
    pub ws_port: u16,
    pub max_clients: Option<usize>,
    pub max_chunk_bytes: usize,
}

impl ServeConfig {
    /// Loopback, ephemeral ports.
    pub fn ephemeral(data_root: impl Into<PathBuf>) -> Self {
        Self {
            data_root: data_root.into(),
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 0,
            session_port: 0,
            ws_port: 0,
            max_clients: None,
            max_chunk_bytes: DEFAULT_MAX_CHUNK_BYTES,
        }
    }
}

pub struct RunningServer {
    pub http_addr: SocketAddr,
    pub session_addr: SocketAddr,
    pub ws_addr: SocketAddr,
    pub state: Arc<ApiState>,
    shutdown: watch::Sender<bool>,
    tasks: Vec<JoinHandle<()>>,
}

async fn bind(host: IpAddr, port: u16, what: &str) -> Result<TcpListener, CliError> {
    TcpListener::bind((host, port)).await.map_err(|e| {
        if e.kind() == std::io::ErrorKind::AddrInUse {
            CliError::new(
                ExitClass::Runtime,
                "PortInUse",
                format!("{what} port {host}:{port} is already in use"),
            )
        } else {
            CliError::new(
                ExitClass::Runtime,
                "Bind",
                format!("cannot bind {what} port {host}:{port}: {e}"),
            )
        }
    })
}

fn local_addr(l: &TcpListener) -> Result<SocketAddr, CliError> {
    l.local_addr()
        .map_err(|e| CliError::new(ExitClass::Runtime, "Bind", e.to_string()))
}

async fn stopped(mut rx: watch::Receiver<bool>) {
    let _ = rx.wait_for(|&stop| stop).await;
}

/// Loads the data root, binds all three listeners and starts serving.
pub async fn start(config: &ServeConfig) -> Result<RunningServer, CliError> {
    let catalog = Catalog::open(&config.data_root)?;
    let http = bind(config.host, config.port, "http").await?;
    let tcp = bind(config.host, config.session_port, "session").await?;
    let ws = bind(config.host, config.ws_port, "websocket").await?;
    let max_chunk = config.max_chunk_bytes;
    let state = tokio::task::spawn_blocking(move || ApiState::load(&catalog, max_chunk))
        .await
        .expect("load task")?;
    let state = Arc::new(state);
    let (shutdown, rx) = watch::channel(false);
    let hub = Hub::new(config.max_clients);
    let (http_addr, session_addr, ws_addr) = (local_addr(&http)?, local_addr(&tcp)?, local_addr(&ws)?);

    let mut tasks = Vec::new();
    let app = router(state.clone());
    let stop = rx.clone();
    tasks.push(tokio::spawn(async move {
        let _ = axum::serve(http, app).with_graceful_shutdown(stopped(stop)).await;
    }));
    let ws_app = ws_router(hub.clone());
    let stop = rx.clone();
    tasks.push(tokio::spawn(async move {
        let _ = axum::serve(ws, ws_app).with_graceful_shutdown(stopped(stop)).await;
    }));
    let mut stop = rx;
    tasks.push(tokio::spawn(async move {
        loop {
            tokio::select! {
                accepted = tcp.accept() => match accepted {
                    Ok((stream, peer)) => {
                        tracing::debug!(%peer, "session connection");
                        tokio::spawn(serve_tcp(hub.clone(), stream));
                    }
                    Err(e) => tracing::warn!("accept failed: {e}"),
                },
                _ = stop.wait_for(|&s| s) => break,
            }
        }
    }));

    Ok(RunningServer {
        http_addr,
        session_addr,
        ws_addr,
        state,
        shutdown,
        tasks,
    })
}

impl RunningServer {
    /// Dataset listing and listener addresses, one item per line.
    pub fn startup_report(&self) -> String {
        let mut out = String::new();
        for d in &self.state.descriptors {
            let _ = write!(out, "dataset {} kind={}", d.id, d.kind.name());
            match d.kind {
                DatasetKind::Volume => {
                    if let Some(h) = self.state.volumes.get(&d.id) {
                        let [x, y, z] = h.geometry().dims;
                        let _ = write!(out, " dims={x}x{y}x{z} levels={}", h.level_count());
                    }
                }
                DatasetKind::Toolpath | DatasetKind::Machine => {
                    if let Some(p) = self.state.paths.get(&d.id) {
                        let _ = write!(out, " layers={}", p.registry.layer_count());
                    }
                    if let Some(pair) = d.pair() {
                        let _ = write!(out, " pair={pair}");
                    }
                }
                DatasetKind::Images => {
                    if let Some(i) = self.state.images.get(&d.id) {
                        let _ = write!(out, " layers={}", i.len());
                    }
                }
            }
            out.push('\n');
        }
        let _ = writeln!(out, "http listening on {}", self.http_addr);
        let _ = writeln!(out, "session listening on {}", self.session_addr);
        let _ = writeln!(out, "websocket listening on {}", self.ws_addr);
        out
    }

    /// Stops accepting, lets in-flight requests finish (bounded wait) and
    /// returns.
    pub async fn shutdown(self) {
        let _ = self.shutdown.send(true);
        for task in self.tasks {
            let abort = task.abort_handle();
            if tokio::time::timeout(Duration::from_secs(3), task).await.is_err() {
                abort.abort();
            }
        }
    }
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn termination_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Session transport: raw TCP (4-byte big-endian length prefix per frame)
//! and WebSocket (one text frame per message) in front of one actor task per
//! named session.
//!
//! A connection is bound to the sender id of its accepted Join until that
//! client leaves. Messages from any other sender on that connection are
//! rejected, so one peer cannot speak for another.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use amdt_core::sync::{Coalescer, Payload, Session, SyncError, SyncMessage, WireError, SERVER_SENDER};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::any;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::sync::mpsc;

/// Frames above this size close the connection.
pub const MAX_FRAME_BYTES: usize = 16 << 20;
pub const DEFAULT_SESSION: &str = "default";

type Outbox = mpsc::UnboundedSender<String>;

enum Command {
    Message {
        conn: u64,
        msg: Box<SyncMessage>,
        outbox: Outbox,
    },
    Disconnect {
        conn: u64,
        client: String,
    },
}

/// Routes connections to per-session actors.
pub struct Hub {
    sessions: Mutex<HashMap<String, mpsc::UnboundedSender<Command>>>,
    max_clients: Option<usize>,
    next_conn: AtomicU64,
}

impl Hub {
    pub fn new(max_clients: Option<usize>) -> Arc<Self> {
        Arc::new(Self {
            sessions: Mutex::new(HashMap::new()),
            max_clients,
            next_conn: AtomicU64::new(1),
        })
    }

    fn actor(&self, name: &str) -> mpsc::UnboundedSender<Command> {
        let mut sessions = self.sessions.lock().expect("hub lock");
        if let Some(tx) = sessions.get(name) {
            if !tx.is_closed() {
                return tx.clone();
            }
        }
        let (tx, rx) = mpsc::unbounded_channel();
        let session = match self.max_clients {
            Some(n) => Session::with_max_clients(n),
            None => Session::new(),
        };
        tokio::spawn(run_actor(name.to_string(), session, rx));
        sessions.insert(name.to_string(), tx.clone());
        tx
    }

    /// Drives one connection: `incoming` yields decoded text frames,
    /// `outbox` carries frames to write back.
    pub async fn serve_connection<S>(self: Arc<Self>, mut incoming: S, outbox: Outbox)
    where
        S: futures::Stream<Item = String> + Unpin,
    {
        let conn = self.next_conn.fetch_add(1, Ordering::Relaxed);
        // (session actor, client id) once joined.
        let mut bound: Option<(mpsc::UnboundedSender<Command>, String)> = None;
        while let Some(text) = incoming.next().await {
            let msg = match SyncMessage::from_json(&text) {
                Ok(m) => m,
                Err(e) => {
                    let _ = outbox.send(wire_error(&e).to_json());
                    continue;
                }
            };
            match (&bound, &msg.payload) {
                (Some((_, client)), _) if *client != msg.sender => {
                    let _ = outbox.send(
                        server_error(
                            msg.client_seq,
                            "SenderMismatch",
                            format!("connection belongs to `{client}`, not `{}`", msg.sender),
                        )
                        .to_json(),
                    );
                    continue;
                }
                (None, Payload::Join { session, .. }) => {
                    let name = session.clone().unwrap_or_else(|| DEFAULT_SESSION.to_string());
                    bound = Some((self.actor(&name), msg.sender.clone()));
                }
                _ => {}
            }
            match &bound {
                Some((actor, _)) => {
                    let leaving = matches!(msg.payload, Payload::Leave {});
                    let _ = actor.send(Command::Message {
                        conn,
                        msg: Box::new(msg),
                        outbox: outbox.clone(),
                    });
                    if leaving {
                        bound = None;
                    }
                }
                None => {
                    let err = SyncError::NotJoined(msg.sender.clone()).to_message(msg.client_seq);
                    let _ = outbox.send(err.to_json());
                }
            }
        }
        if let Some((actor, client)) = bound {
            let _ = actor.send(Command::Disconnect { conn, client });
        }
    }
}

fn server_error(client_seq: u64, code: &str, message: String) -> SyncMessage {
    SyncMessage::new(
        SERVER_SENDER,
        client_seq,
        Payload::Error {
            code: code.to_string(),
            message,
        },
    )
}

fn wire_error(e: &WireError) -> SyncMessage {
    let code = match e {
        WireError::Malformed(_) => "Malformed",
        WireError::Field(_) => "InvalidField",
        WireError::Payload { .. } => "InvalidPayload",
    };
    server_error(0, code, e.to_string())
}

struct Member {
    conn: u64,
    outbox: Outbox,
}

struct Actor {
    name: String,
    session: Session,
    coalescer: Coalescer,
    members: HashMap<String, Member>,
}

impl Actor {
    fn sequence(&mut self, msg: SyncMessage, reply: Option<(u64, Outbox)>) {
        let sender = msg.sender.clone();
        let client_seq = msg.client_seq;
        match self.session.sequence(msg) {
            Ok(outcome) => {
                if let (Some(welcome), Some((conn, outbox))) = (&outcome.welcome, &reply) {
                    let _ = outbox.send(welcome.to_json());
                    self.members.insert(
                        sender.clone(),
                        Member {
                            conn: *conn,
                            outbox: outbox.clone(),
                        },
                    );
                }
                let text = outcome.sequenced.to_json();
                if let Some(m) = self.members.get(&sender) {
                    let _ = m.outbox.send(text.clone());
                }
                for peer in &outcome.multicast {
                    if let Some(m) = self.members.get(peer) {
                        let _ = m.outbox.send(text.clone());
                    }
                }
                if matches!(outcome.sequenced.payload, Payload::Leave {}) {
                    self.members.remove(&sender);
                    self.coalescer.forget_sender(&sender);
                }
            }
            Err(e) => self.reject(&sender, client_seq, &e, reply.map(|r| r.1)),
        }
    }

    fn reject(&self, sender: &str, client_seq: u64, e: &SyncError, outbox: Option<Outbox>) {
        tracing::debug!(session = %self.name, sender, code = e.code(), "rejected");
        let outbox = outbox.or_else(|| self.members.get(sender).map(|m| m.outbox.clone()));
        if let Some(outbox) = outbox {
            let _ = outbox.send(e.to_message(client_seq).to_json());
        }
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Message { conn, msg, outbox } => {
                let msg = *msg;
                // A connection whose Join was refused must not speak for a
                // client joined elsewhere.
                let joining = matches!(msg.payload, Payload::Join { .. });
                if !joining && self.members.get(&msg.sender).is_none_or(|m| m.conn != conn) {
                    let e = SyncError::NotJoined(msg.sender.clone());
                    let _ = outbox.send(e.to_message(msg.client_seq).to_json());
                    return;
                }
                if let Err(e) = self.session.admit(&msg) {
                    self.reject(&msg.sender, msg.client_seq, &e, Some(outbox));
                    return;
                }
                if let Some(msg) = self.coalescer.offer(msg, Instant::now()) {
                    self.sequence(msg, Some((conn, outbox)));
                }
            }
            Command::Disconnect { conn, client } => {
                if self.members.get(&client).is_some_and(|m| m.conn == conn) {
                    self.coalescer.forget_sender(&client);
                    self.members.remove(&client);
                    if let Some(outcome) = self.session.disconnect(&client) {
                        let text = outcome.sequenced.to_json();
                        for peer in &outcome.multicast {
                            if let Some(m) = self.members.get(peer) {
                                let _ = m.outbox.send(text.clone());
                            }
                        }
                    }
                }
            }
        }
    }

    fn flush(&mut self) {
        for msg in self.coalescer.flush_due(Instant::now()) {
            self.sequence(msg, None);
        }
    }
}

async fn run_actor(name: String, session: Session, mut rx: mpsc::UnboundedReceiver<Command>) {
    let mut actor = Actor {
        name,
        session,
        coalescer: Coalescer::default(),
        members: HashMap::new(),
    };
    loop {
        let deadline = actor.coalescer.next_deadline();
        tokio::select! {
            cmd = rx.recv() => match cmd {
                Some(cmd) => actor.handle(cmd),
                None => break,
            },
            _ = async {
                match deadline {
                    Some(d) => tokio::time::sleep_until(d.into()).await,
                    None => std::future::pending().await,
                }
            } => actor.flush(),
        }
    }
}

/// Serves one length-prefixed TCP connection.
pub async fn serve_tcp(hub: Arc<Hub>, stream: TcpStream) {
    let _ = stream.set_nodelay(true);
    let (reader, mut writer) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    let writer_task = tokio::spawn(async move {
        while let Some(text) = rx.recv().await {
            let bytes = text.as_bytes();
            let Ok(len) = u32::try_from(bytes.len()) else { continue };
            if writer.write_all(&len.to_be_bytes()).await.is_err() || writer.write_all(bytes).await.is_err() {
                break;
            }
        }
    });
    let incoming = futures::stream::unfold(
        reader,
        |mut r| async move { read_frame(&mut r).await.map(|text| (text, r)) },
    );
    hub.serve_connection(Box::pin(incoming), tx).await;
    // The outbox senders held by the session are dropped on disconnect;
    // give queued frames a moment to drain.
    let _ = tokio::time::timeout(std::time::Duration::from_millis(200), writer_task).await;
}

/// Reads one frame; `None` on EOF, I/O error, oversized frame or non-UTF-8.
async fn read_frame(r: &mut tokio::net::tcp::OwnedReadHalf) -> Option<String> {
    let len = r.read_u32().await.ok()? as usize;
    if len > MAX_FRAME_BYTES {
        return None;
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).await.ok()?;
    String::from_utf8(buf).ok()
}

/// Length-prefixed frame encoding used by TCP clients.
pub fn encode_frame(text: &str) -> Vec<u8> {
    let mut out = (text.len() as u32).to_be_bytes().to_vec();
    out.extend_from_slice(text.as_bytes());
    out
}

/// WebSocket endpoint, served at `/` and `/session`.
pub fn ws_router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/", any(ws_upgrade))
        .route("/session", any(ws_upgrade))
        .with_state(hub)
}

async fn ws_upgrade(State(hub): State<Arc<Hub>>, ws: WebSocketUpgrade) -> Response {
    ws.max_message_size(MAX_FRAME_BYTES)
        .on_upgrade(move |socket| serve_ws(hub, socket))
}

async fn serve_ws(hub: Arc<Hub>, socket: WebSocket) {
    let (mut sink, stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    let writer_task = tokio::spawn(async move {
        while let Some(text) = rx.recv().await {
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    let reply = tx.clone();
    let incoming = stream
        .take_while(|m| std::future::ready(matches!(m, Ok(m) if !matches!(m, Message::Close(_)))))
        .filter_map(move |m| {
            let reply = reply.clone();
            async move {
                match m {
                    Ok(Message::Text(t)) => Some(t.to_string()),
                    Ok(Message::Binary(_)) => {
                        let err = server_error(0, "Malformed", "messages must be text frames".into());
                        let _ = reply.send(err.to_json());
                        None
                    }
                    _ => None,
                }
            }
        });
    hub.serve_connection(Box::pin(incoming), tx).await;
    let _ = tokio::time::timeout(std::time::Duration::from_millis(200), writer_task).await;
}

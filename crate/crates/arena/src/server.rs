//! WebSocket transport. Each session has one ticker task that owns the
//! world; connection readers post into its mailbox, and frames fan out
//! through a watch channel so a slow client only ever sees the newest one.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};
use tokio::time::Instant;

use crate::frame::FRAME_SCHEMA;
use crate::protocol::{Envelope, ServerMessage};
use crate::session::{ClientId, Session, SessionSetup};

/// Session used by the bare `/ws` route.
pub const DEFAULT_SESSION: &str = "main";

#[derive(Clone, Debug)]
pub struct ServerOptions {
    /// Setup new sessions start from.
    pub setup: SessionSetup,
    /// Wall-clock tick period.
    pub tick: Duration,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            setup: SessionSetup::default(),
            tick: Duration::from_millis(100),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("session refused: {0}")]
    Session(#[from] pposg_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

enum Inbound {
    Join(ClientId, mpsc::UnboundedSender<Outbound>),
    Leave(ClientId),
    Message(ClientId, Envelope),
    Malformed(ClientId, String),
}

enum Outbound {
    Text(String),
    Close,
}

#[derive(Clone)]
struct SessionHandle {
    mailbox: mpsc::UnboundedSender<Inbound>,
    frames: watch::Receiver<Option<Arc<str>>>,
}

struct Inner {
    options: ServerOptions,
    sessions: Mutex<HashMap<String, SessionHandle>>,
    next_client: AtomicU64,
}

#[derive(Clone)]
struct AppState(Arc<Inner>);

impl AppState {
    fn session(&self, id: &str) -> pposg_core::Result<SessionHandle> {
        let mut sessions = self.0.sessions.lock().expect("session registry");
        if let Some(h) = sessions.get(id) {
            if !h.mailbox.is_closed() {
                return Ok(h.clone());
            }
        }
        let session = Session::new(id, self.0.options.setup.clone())?;
        let (mailbox, rx) = mpsc::unbounded_channel();
        let (tx, frames) = watch::channel(None);
        tokio::spawn(run_ticker(session, rx, tx, self.0.options.tick));
        let h = SessionHandle { mailbox, frames };
        sessions.insert(id.to_string(), h.clone());
        Ok(h)
    }
}

/// Routes: `/ws` (default session), `/ws/{session}`, `/schema/frame`.
/// Fails when the configured setup cannot start a session.
pub fn router(options: ServerOptions) -> Result<Router, ServeError> {
    Session::new(DEFAULT_SESSION, options.setup.clone())?;
    let state = AppState(Arc::new(Inner {
        options,
        sessions: Mutex::new(HashMap::new()),
        next_client: AtomicU64::new(1),
    }));
    Ok(Router::new()
        .route("/ws", get(ws_default))
        .route("/ws/{session}", get(ws_named))
        .route("/schema/frame", get(schema))
        .with_state(state))
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, options: ServerOptions) -> Result<(), ServeError> {
    let app = router(options)?;
    log::info!("arena listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}

async fn schema() -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/schema+json")], FRAME_SCHEMA)
}

async fn ws_default(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    upgrade(ws, state, DEFAULT_SESSION.to_string())
}

async fn ws_named(ws: WebSocketUpgrade, State(state): State<AppState>, Path(id): Path<String>) -> Response {
    upgrade(ws, state, id)
}

fn upgrade(ws: WebSocketUpgrade, state: AppState, id: String) -> Response {
    match state.session(&id) {
        Ok(handle) => {
            let client = state.0.next_client.fetch_add(1, Ordering::Relaxed);
            ws.on_upgrade(move |socket| connection(socket, handle, client))
        }
        Err(e) => (StatusCode::SERVICE_UNAVAILABLE, format!("session refused: {e}")).into_response(),
    }
}

async fn connection(socket: WebSocket, handle: SessionHandle, client: ClientId) {
    let (mut sink, mut stream) = socket.split();
    let (tx, mut rx) = mpsc::unbounded_channel();
    if handle.mailbox.send(Inbound::Join(client, tx)).is_err() {
        return;
    }
    let mut frames = handle.frames.clone();
    frames.mark_unchanged();
    let writer = async move {
        loop {
            tokio::select! {
                out = rx.recv() => match out {
                    Some(Outbound::Text(t)) => {
                        if sink.send(Message::Text(t.into())).await.is_err() {
                            break;
                        }
                    }
                    Some(Outbound::Close) | None => {
                        let _ = sink.send(Message::Close(None)).await;
                        break;
                    }
                },
                changed = frames.changed() => {
                    if changed.is_err() {
                        break;
                    }
                    let latest = frames.borrow_and_update().clone();
                    if let Some(text) = latest {
                        if sink.send(Message::Text(text.as_ref().into())).await.is_err() {
                            break;
                        }
                    }
                }
            }
        }
    };
    let mailbox = handle.mailbox.clone();
    let reader = async move {
        while let Some(Ok(msg)) = stream.next().await {
            let inbound = match msg {
                Message::Text(t) => match Envelope::parse(t.as_str()) {
                    Ok(env) => Inbound::Message(client, env),
                    Err(e) => Inbound::Malformed(client, e),
                },
                Message::Binary(_) => Inbound::Malformed(client, "binary frames are not supported".into()),
                Message::Close(_) => break,
                _ => continue,
            };
            if mailbox.send(inbound).is_err() {
                break;
            }
        }
    };
    tokio::select! {
        _ = writer => {}
        _ = reader => {}
    }
    let _ = handle.mailbox.send(Inbound::Leave(client));
}

struct Ticker {
    session: Session,
    clients: HashMap<ClientId, mpsc::UnboundedSender<Outbound>>,
    seq: u64,
}

impl Ticker {
    fn send(&mut self, client: ClientId, msg: &ServerMessage) {
        self.seq += 1;
        let text = msg.envelope(self.seq).to_text();
        if let Some(tx) = self.clients.get(&client) {
            let _ = tx.send(Outbound::Text(text));
        }
    }

    fn apply(&mut self, m: Inbound) {
        match m {
            Inbound::Join(id, tx) => {
                self.clients.insert(id, tx);
                self.session.join(id);
            }
            Inbound::Leave(id) => {
                self.clients.remove(&id);
                self.session.leave(id);
            }
            Inbound::Message(id, env) => {
                for reply in self.session.handle(id, &env) {
                    self.send(id, &reply);
                }
                if env.kind == "bye" {
                    if let Some(tx) = self.clients.remove(&id) {
                        let _ = tx.send(Outbound::Close);
                    }
                }
            }
            Inbound::Malformed(id, e) => self.send(id, &ServerMessage::error(None, e)),
        }
    }
}

/// Owns the session. Ticks on absolute deadlines; missed deadlines are
/// skipped rather than burst. With no clients it blocks on the mailbox.
async fn run_ticker(
    session: Session,
    mut rx: mpsc::UnboundedReceiver<Inbound>,
    frames: watch::Sender<Option<Arc<str>>>,
    period: Duration,
) {
    let mut t = Ticker {
        session,
        clients: HashMap::new(),
        seq: 0,
    };
    let mut deadline = Instant::now() + period;
    loop {
        if t.clients.is_empty() {
            match rx.recv().await {
                Some(m) => t.apply(m),
                None => return,
            }
            deadline = Instant::now() + period;
            continue;
        }
        tokio::time::sleep_until(deadline).await;
        let now = Instant::now();
        while deadline <= now {
            deadline += period;
        }
        loop {
            match rx.try_recv() {
                Ok(m) => t.apply(m),
                Err(mpsc::error::TryRecvError::Empty) => break,
                Err(mpsc::error::TryRecvError::Disconnected) => return,
            }
        }
        match t.session.tick() {
            Ok(Some(frame)) => {
                t.seq += 1;
                let text = ServerMessage::Frame(Box::new(frame)).envelope(t.seq).to_text();
                frames.send_replace(Some(text.into()));
            }
            Ok(None) => {}
            Err(e) => {
                log::error!("session {} stopped: {e}", t.session.id());
                let ids: Vec<ClientId> = t.clients.keys().copied().collect();
                for id in ids {
                    t.send(id, &ServerMessage::error(None, format!("session stopped: {e}")));
                }
                t.session.pause();
            }
        }
    }
}

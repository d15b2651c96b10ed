//! HTTP and WebSocket front end.
//!
//! `GET /ws` upgrades to the JSON protocol, `GET /metrics` returns the
//! telemetry report plus loop counters, `GET /healthz` returns build info.

use std::net::SocketAddr;
use std::sync::atomic::Ordering::Relaxed;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::ws::{Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{IntoResponse, Json};
use axum::routing::get;
use axum::Router;
use chrono::Utc;
use nanotouch_core::experiments::{hysteresis_energy, quasi_static_sweep};
use nanotouch_core::kernel::KernelConfig;
use serde_json::json;
use tokio::net::TcpSocket;
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::task::JoinHandle;

use crate::config::Config;
use crate::protocol::{
    Command, CommandMessage, ServerMessage, SweepArgs, SweepSummary, WireEvent, WireSnapshot,
    PROTOCOL_VERSION,
};
use crate::realtime::{run_realtime_loop, LoopCommand, LoopHandle, LoopMetrics, Mailbox};
use crate::telemetry::TelemetryStore;

/// Frames buffered per client before snapshots are dropped for it.
pub const CLIENT_QUEUE: usize = 8;
/// Frames the loop can publish ahead of the slowest forwarder.
pub const BROADCAST_CAPACITY: usize = 64;
/// Kernel send buffer for client sockets; small, so a stalled client backs
/// up into its own queue quickly instead of into megabytes of socket buffer.
pub const SEND_BUFFER_BYTES: u32 = 16 * 1024;

struct AppState {
    mailbox: Arc<Mailbox>,
    metrics: Arc<LoopMetrics>,
    frames: broadcast::Sender<Arc<str>>,
    telemetry: Arc<Mutex<TelemetryStore>>,
    desired: Mutex<KernelConfig>,
    clock: Instant,
    closing: watch::Receiver<bool>,
}

impl AppState {
    fn now(&self) -> f64 {
        self.clock.elapsed().as_secs_f64()
    }

    fn telemetry(&self) -> std::sync::MutexGuard<'_, TelemetryStore> {
        self.telemetry.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    state: Arc<AppState>,
    closing: watch::Sender<bool>,
    stop_http: Option<oneshot::Sender<()>>,
    http: Option<JoinHandle<std::io::Result<()>>>,
    stepping: Option<LoopHandle>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn metrics(&self) -> &LoopMetrics {
        &self.state.metrics
    }

    pub fn metrics_snapshot(&self) -> crate::realtime::MetricsSnapshot {
        self.state.metrics.snapshot(&self.state.mailbox)
    }

    pub fn telemetry_report(&self) -> crate::telemetry::TelemetryReport {
        self.state.telemetry().report()
    }

    pub fn closed_sessions(&self) -> Vec<crate::telemetry::SessionTelemetry> {
        self.state.telemetry().closed().to_vec()
    }

    /// Disconnects clients, closes their sessions and stops the loop.
    pub async fn shutdown(mut self) {
        let _ = self.closing.send(true);
        if let Some(tx) = self.stop_http.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.http.take() {
            let _ = h.await;
        }
        let now = self.state.now();
        self.state.telemetry().close_all(now);
        if let Some(l) = self.stepping.take() {
            tokio::task::spawn_blocking(move || l.shutdown()).await.ok();
        }
    }
}

pub async fn start(config: &Config, addr: SocketAddr) -> std::io::Result<ServerHandle> {
    config
        .validate()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    let kcfg = config.kernel_config();
    let mailbox = Arc::new(Mailbox::new());
    let (frames, _) = broadcast::channel::<Arc<str>>(BROADCAST_CAPACITY);

    let tx = frames.clone();
    let stepping = run_realtime_loop(kcfg, config.service.snapshot_hz, mailbox.clone(), move |snap: WireSnapshot| {
        let events = snap.events_since_last.clone();
        let msg = ServerMessage::Snapshot {
            v: PROTOCOL_VERSION,
            snapshot: snap,
        };
        // No subscribers is fine: the frame is simply discarded.
        let _ = tx.send(Arc::from(msg.to_json()));
        for event in events {
            let _ = tx.send(Arc::from(
                ServerMessage::Event {
                    v: PROTOCOL_VERSION,
                    event,
                }
                .to_json(),
            ));
        }
    })
    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;

    let telemetry = match &config.service.telemetry_dir {
        Some(d) => TelemetryStore::with_dir(d.clone()),
        None => TelemetryStore::new(),
    };
    let (closing_tx, closing_rx) = watch::channel(false);
    let state = Arc::new(AppState {
        mailbox,
        metrics: stepping.metrics.clone(),
        frames,
        telemetry: Arc::new(Mutex::new(telemetry)),
        desired: Mutex::new(kcfg),
        clock: Instant::now(),
        closing: closing_rx,
    });

    let socket = if addr.is_ipv4() {
        TcpSocket::new_v4()?
    } else {
        TcpSocket::new_v6()?
    };
    socket.set_reuseaddr(true)?;
    // Accepted sockets inherit the listener's buffer size.
    socket.set_send_buffer_size(SEND_BUFFER_BYTES)?;
    socket.bind(addr)?;
    let listener = socket.listen(1024)?;
    let addr = listener.local_addr()?;

    let app = Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/metrics", get(metrics))
        .route("/healthz", get(healthz))
        .with_state(state.clone());
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let http = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stop_rx.await;
            })
            .await
    });
    log::info!("listening on {addr}");

    Ok(ServerHandle {
        addr,
        state,
        closing: closing_tx,
        stop_http: Some(stop_tx),
        http: Some(http),
        stepping: Some(stepping),
    })
}

async fn healthz() -> impl IntoResponse {
    Json(json!({
        "status": "ok",
        "name": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "protocol": PROTOCOL_VERSION,
    }))
}

async fn metrics(State(st): State<Arc<AppState>>) -> impl IntoResponse {
    let report = st.telemetry().report();
    let mut body = serde_json::to_value(report).expect("plain data");
    body["loop"] = serde_json::to_value(st.metrics.snapshot(&st.mailbox)).expect("plain data");
    Json(body)
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(st): State<Arc<AppState>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| session(socket, st))
}

/// Copies broadcast frames into one client's queue without ever waiting.
fn spawn_forwarder(st: &Arc<AppState>, out: mpsc::Sender<Arc<str>>) -> JoinHandle<()> {
    let mut rx = st.frames.subscribe();
    let metrics = st.metrics.clone();
    tokio::spawn(async move {
        loop {
            match rx.recv().await {
                Ok(frame) => match out.try_send(frame) {
                    Ok(()) => {}
                    Err(mpsc::error::TrySendError::Full(_)) => {
                        metrics.snapshot_drops.fetch_add(1, Relaxed);
                    }
                    Err(mpsc::error::TrySendError::Closed(_)) => break,
                },
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    metrics.snapshot_drops.fetch_add(n, Relaxed);
                }
                Err(broadcast::error::RecvError::Closed) => break,
            }
        }
    })
}

async fn session(mut socket: WebSocket, st: Arc<AppState>) {
    let id = uuid::Uuid::new_v4().to_string();
    st.telemetry().open(&id, st.now(), Utc::now());
    log::info!("session {id} opened");

    let (out_tx, mut out_rx) = mpsc::channel::<Arc<str>>(CLIENT_QUEUE);
    let hello = ServerMessage::Hello {
        v: PROTOCOL_VERSION,
        session_id: id.clone(),
        config: *st.desired.lock().unwrap_or_else(|e| e.into_inner()),
    };
    let forwarder = spawn_forwarder(&st, out_tx.clone());
    let mut closing = st.closing.clone();
    let mut last_seq: Option<u64> = None;

    if socket.send(Message::Text(hello.to_json().into())).await.is_ok() {
        loop {
            tokio::select! {
                incoming = socket.recv() => match incoming {
                    Some(Ok(Message::Text(text))) => {
                        if let Some(reply) = handle_text(&st, &id, &text, &mut last_seq, &out_tx) {
                            if out_tx.send(Arc::from(reply.to_json())).await.is_err() {
                                break;
                            }
                        }
                    }
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => {}
                },
                frame = out_rx.recv() => match frame {
                    Some(f) => {
                        if socket.send(Message::Text(Utf8Bytes::from(&*f))).await.is_err() {
                            break;
                        }
                    }
                    None => break,
                },
                _ = closing.changed() => {
                    let _ = socket.send(Message::Close(None)).await;
                    break;
                }
            }
        }
    }

    forwarder.abort();
    if let Some(s) = st.telemetry().close(&id, st.now()) {
        log::info!(
            "session {id} closed: presence {:.1} s, manipulation {:.1} s",
            s.presence_s,
            s.manipulation_s
        );
    }
}

fn handle_text(
    st: &Arc<AppState>,
    id: &str,
    text: &str,
    last_seq: &mut Option<u64>,
    out: &mpsc::Sender<Arc<str>>,
) -> Option<ServerMessage> {
    let msg: CommandMessage = match serde_json::from_str(text) {
        Ok(m) => m,
        Err(e) => return Some(ServerMessage::error(None, format!("bad command: {e}"))),
    };
    let seq = msg.seq;
    if msg.v != PROTOCOL_VERSION {
        return Some(ServerMessage::error(
            Some(seq),
            format!("unsupported protocol version {}", msg.v),
        ));
    }
    if last_seq.is_some_and(|last| seq <= last) {
        return Some(ServerMessage::error(
            Some(seq),
            "sequence numbers must increase",
        ));
    }
    *last_seq = Some(seq);
    let err = |m: String| Some(ServerMessage::error(Some(seq), m));

    let lu = st.desired.lock().unwrap_or_else(|e| e.into_inner()).scene.length_unit;
    match msg.command {
        Command::SetHandle { pos } => {
            if !pos.is_finite() {
                return err(format!("handle position must be finite, got {pos}"));
            }
            let _ = st.mailbox.post(LoopCommand::SetHandle(pos / lu));
            st.telemetry().handle_input(id, pos, st.now());
            None
        }
        Command::SetBlend { value } => {
            if !(0.0..=1.0).contains(&value) {
                return err(format!("blend must be in [0, 1], got {value}"));
            }
            st.telemetry().blend_input(id, value);
            reconfigure(st, seq, |c| c.scene.blend = value)
        }
        Command::SetParams(patch) => reconfigure(st, seq, |c| *c = patch.apply(c)),
        Command::Reset {} => match st.mailbox.post(LoopCommand::Reset) {
            Ok(()) => None,
            Err(e) => err(e.to_string()),
        },
        Command::StartSweep(args) => {
            let cfg = *st.desired.lock().unwrap_or_else(|e| e.into_inner());
            let out = out.clone();
            tokio::spawn(async move {
                let reply = tokio::task::spawn_blocking(move || run_sweep(cfg, seq, args))
                    .await
                    .unwrap_or_else(|e| ServerMessage::error(Some(seq), e.to_string()));
                let _ = out.send(Arc::from(reply.to_json())).await;
            });
            None
        }
    }
}

fn reconfigure(
    st: &AppState,
    seq: u64,
    edit: impl FnOnce(&mut KernelConfig),
) -> Option<ServerMessage> {
    let mut desired = st.desired.lock().unwrap_or_else(|e| e.into_inner());
    let mut next = *desired;
    edit(&mut next);
    if let Err(e) = next.validate() {
        return Some(ServerMessage::error(Some(seq), format!("rejected: {e}")));
    }
    match st.mailbox.post(LoopCommand::Configure(next)) {
        Ok(()) => {
            *desired = next;
            None
        }
        Err(e) => Some(ServerMessage::error(Some(seq), e.to_string())),
    }
}

fn run_sweep(cfg: KernelConfig, seq: u64, args: SweepArgs) -> ServerMessage {
    let lu = cfg.scene.length_unit;
    let fu = cfg.scene.force_unit;
    match quasi_static_sweep(&cfg, args.z_start / lu, args.z_end / lu, args.speed / lu) {
        Ok(curve) => {
            let pairs = |b: &[nanotouch_core::experiments::CurveSample]| {
                b.iter()
                    .map(|s| [s.handle_pos * lu, s.handle_force * fu])
                    .collect()
            };
            ServerMessage::SweepResult {
                v: PROTOCOL_VERSION,
                seq,
                result: SweepSummary {
                    hysteresis_energy_j: hysteresis_energy(&curve).ok(),
                    events: curve.events.iter().map(|e| WireEvent::from_sim(e, lu)).collect(),
                    approach: pairs(&curve.approach),
                    retract: pairs(&curve.retract),
                },
            }
        }
        Err(e) => ServerMessage::error(Some(seq), format!("sweep failed: {e}")),
    }
}

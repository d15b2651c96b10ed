//! Scripted WebSocket client shared by the integration tests.
#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use nanotouch_service::config::Config;
use nanotouch_service::server::{self, ServerHandle};
use serde_json::Value;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpSocket, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{client_async, WebSocketStream};

pub type Ws = WebSocketStream<TcpStream>;

pub async fn start(cfg: Config) -> ServerHandle {
    server::start(&cfg, "127.0.0.1:0".parse().unwrap())
        .await
        .expect("server starts")
}

/// Connects with an optional small receive buffer, so a client that stops
/// reading backs up quickly.
pub async fn connect_with(addr: SocketAddr, recv_buffer: Option<u32>) -> Ws {
    let sock = TcpSocket::new_v4().unwrap();
    if let Some(n) = recv_buffer {
        sock.set_recv_buffer_size(n).unwrap();
    }
    let stream = sock.connect(addr).await.unwrap();
    let (ws, _) = client_async(format!("ws://{addr}/ws"), stream).await.unwrap();
    ws
}

pub async fn connect(addr: SocketAddr) -> Ws {
    connect_with(addr, None).await
}

pub async fn send(ws: &mut Ws, msg: Value) {
    ws.send(Message::Text(msg.to_string().into())).await.unwrap();
}

/// Next JSON text frame, or `None` on close or timeout.
pub async fn recv(ws: &mut Ws, timeout: Duration) -> Option<Value> {
    let deadline = tokio::time::Instant::now() + timeout;
    loop {
        let frame = tokio::time::timeout_at(deadline, ws.next()).await.ok()??;
        match frame.ok()? {
            Message::Text(t) => return Some(serde_json::from_str(&t).unwrap()),
            Message::Close(_) => return None,
            _ => {}
        }
    }
}

/// Next frame of the given `type`, skipping others.
pub async fn recv_type(ws: &mut Ws, ty: &str, timeout: Duration) -> Option<Value> {
    let deadline = tokio::time::Instant::now() + timeout;
    loop {
        let left = deadline.saturating_duration_since(tokio::time::Instant::now());
        let v = recv(ws, left).await?;
        if v["type"] == ty {
            return Some(v);
        }
    }
}

/// Plain HTTP/1.1 GET returning status and JSON body.
pub async fn get(addr: SocketAddr, path: &str) -> (u16, Value) {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n");
    s.write_all(req.as_bytes()).await.unwrap();
    let mut raw = String::new();
    s.read_to_string(&mut raw).await.unwrap();
    let (head, body) = raw.split_once("\r\n\r\n").expect("http response");
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    (status, serde_json::from_str(body).unwrap_or(Value::Null))
}

//! Websocket endpoint: binary PCM frames in, JSON viseme events out.
//!
//! One connection is one session. The wire format is documented in
//! `docs/PROTOCOL.md`.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio_tungstenite::tungstenite::Message;

use crate::audio::{decode_pcm_le, LimiterConfig, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::pipeline::{Session, SessionConfig, VisemeEvent};
use crate::viseme::{VisemeId, FRAME_RATE};

pub const PROTOCOL_VERSION: u32 = 1;

/// Outgoing queue depth per connection. Stats are dropped when it is full.
const OUTBOX: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        version: u32,
        sample_rate: u32,
        frame_rate: u32,
        audio_delay_ms: f64,
        algorithmic_latency_ms: f64,
    },
    Viseme {
        frame: usize,
        time_ms: f64,
        viseme: VisemeId,
        code: u8,
        wall_latency_ms: f64,
    },
    Stats {
        processing_ms: f64,
        hops: usize,
        samples: u64,
    },
    End {
        frames: usize,
        mean_processing_ms: f64,
    },
    Error {
        kind: String,
        message: String,
    },
}

impl From<&VisemeEvent> for ServerMessage {
    fn from(e: &VisemeEvent) -> Self {
        ServerMessage::Viseme {
            frame: e.frame,
            time_ms: e.time_ms,
            viseme: e.viseme,
            code: e.viseme.code(),
            wall_latency_ms: e.wall_latency_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    End,
}

enum Outgoing {
    Text(String),
    Close,
}

/// A bound listener ready to accept sessions.
pub struct Server {
    listener: TcpListener,
    model: Arc<Model>,
    limiter: LimiterConfig,
    audio_delay_ms: f64,
}

impl Server {
    pub async fn bind(addr: &str, model: Arc<Model>, cfg: &SessionConfig) -> Result<Self> {
        let probe = Session::new(model.clone(), cfg.limiter)?;
        cfg.validate(probe.algorithmic_latency_ms())?;
        let listener = TcpListener::bind(addr).await?;
        Ok(Self {
            listener,
            model,
            limiter: cfg.limiter,
            audio_delay_ms: cfg.audio_delay_ms,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts connections until the task is dropped.
    pub async fn run(self) -> Result<()> {
        loop {
            let (stream, peer) = self.listener.accept().await?;
            let model = self.model.clone();
            let limiter = self.limiter;
            let delay = self.audio_delay_ms;
            tokio::spawn(async move {
                if let Err(e) = handle(stream, model, limiter, delay).await {
                    tracing::warn!(%peer, error = %e, "session ended with an error");
                }
            });
        }
    }
}

/// Loads the model named in `cfg` and serves until interrupted.
pub async fn serve(cfg: &SessionConfig) -> Result<()> {
    let model = Arc::new(Model::load(&cfg.model_path)?);
    let server = Server::bind(&format!("{}:{}", cfg.bind, cfg.port), model, cfg).await?;
    tracing::info!(addr = %server.local_addr()?, "listening");
    server.run().await
}

fn ws_error(e: tokio_tungstenite::tungstenite::Error) -> Error {
    Error::IoBare(std::io::Error::other(e))
}

fn encode(msg: &ServerMessage) -> String {
    serde_json::to_string(msg).expect("server messages serialise")
}

async fn handle(stream: TcpStream, model: Arc<Model>, limiter: LimiterConfig, audio_delay_ms: f64) -> Result<()> {
    let ws = tokio_tungstenite::accept_async(stream).await.map_err(ws_error)?;
    let (mut sink, mut source) = ws.split();
    let (tx, mut rx) = mpsc::channel::<Outgoing>(OUTBOX);
    let writer = tokio::spawn(async move {
        while let Some(out) = rx.recv().await {
            match out {
                Outgoing::Text(t) => sink.send(Message::text(t)).await?,
                Outgoing::Close => {
                    sink.send(Message::Close(None)).await?;
                    break;
                }
            }
        }
        sink.flush().await
    });

    let mut session = Session::new(model, limiter)?;
    let hello = ServerMessage::Hello {
        version: PROTOCOL_VERSION,
        sample_rate: SAMPLE_RATE,
        frame_rate: FRAME_RATE,
        audio_delay_ms,
        algorithmic_latency_ms: session.algorithmic_latency_ms(),
    };
    let mut link = Link { tx, last: None };
    link.send(encode(&hello)).await;

    let mut events = Vec::new();
    while let Some(msg) = source.next().await {
        let arrival = Instant::now();
        let msg = match msg {
            Ok(m) => m,
            Err(e) => {
                tracing::debug!(error = %e, "connection dropped");
                break;
            }
        };
        match msg {
            Message::Binary(bytes) => {
                if bytes.len() % 2 != 0 {
                    link.fail("malformed_frame", format!("odd PCM frame length {}", bytes.len())).await;
                    break;
                }
                let hops_before = session.hops();
                let busy_before = session.mean_processing_ms() * hops_before as f64;
                events.clear();
                session.push_at(&decode_pcm_le(&bytes), arrival, &mut events);
                link.events(&events).await;
                let hops = session.hops() - hops_before;
                if hops > 0 {
                    let busy = session.mean_processing_ms() * session.hops() as f64 - busy_before;
                    link.stats(ServerMessage::Stats {
                        processing_ms: busy / hops as f64,
                        hops: session.hops(),
                        samples: session.samples_in(),
                    });
                }
            }
            Message::Text(text) => match serde_json::from_str::<ClientMessage>(text.as_str()) {
                Ok(ClientMessage::End) => {
                    events.clear();
                    session.finish(&mut events);
                    link.events(&events).await;
                    link.send(encode(&ServerMessage::End {
                        frames: session.frames_out(),
                        mean_processing_ms: session.mean_processing_ms(),
                    }))
                    .await;
                    link.close().await;
                    break;
                }
                Err(e) => {
                    link.fail("malformed_message", e.to_string()).await;
                    break;
                }
            },
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) | Message::Frame(_) => {}
        }
    }
    drop(link);
    writer.await.map_err(|e| Error::IoBare(std::io::Error::other(e)))?.map_err(ws_error)
}

struct Link {
    tx: mpsc::Sender<Outgoing>,
    last: Option<VisemeId>,
}

impl Link {
    async fn send(&self, text: String) {
        // a closed receiver means the writer already failed; the reader loop ends soon after
        let _ = self.tx.send(Outgoing::Text(text)).await;
    }

    async fn events(&mut self, events: &[VisemeEvent]) {
        for e in events {
            if self.last != Some(e.viseme) {
                self.last = Some(e.viseme);
                self.send(encode(&ServerMessage::from(e))).await;
            }
        }
    }

    fn stats(&self, msg: ServerMessage) {
        if self.tx.try_send(Outgoing::Text(encode(&msg))).is_err() {
            tracing::trace!("stats dropped under backpressure");
        }
    }

    async fn fail(&self, kind: &str, message: String) {
        self.send(encode(&ServerMessage::Error {
            kind: kind.into(),
            message,
        }))
        .await;
        self.close().await;
    }

    async fn close(&self) {
        let _ = self.tx.send(Outgoing::Close).await;
    }
}

/// What a client saw over one session.
#[derive(Debug, Clone, Default)]
pub struct ClientTranscript {
    pub hello: Option<ServerMessage>,
    /// (frame, viseme) at every change.
    pub changes: Vec<(usize, VisemeId)>,
    pub wall_latency_ms: Vec<f64>,
    pub stats: Vec<f64>,
    pub frames: Option<usize>,
    pub errors: Vec<(String, String)>,
}

impl ClientTranscript {
    /// The full 24 fps track reconstructed from the change events.
    pub fn track(&self) -> Result<crate::viseme::VisemeTrack24> {
        let frames = self
            .frames
            .ok_or_else(|| Error::Format("session did not end cleanly".into()))?;
        crate::pipeline::track_from_changes(&self.changes, frames)
    }
}

/// Streams PCM to a server in chunks of `chunk` samples, optionally paced in
/// real time, then asks for the end of the session and collects every reply.
pub async fn stream_pcm(url: &str, pcm: &[i16], chunk: usize, realtime: bool) -> Result<ClientTranscript> {
    let (ws, _) = tokio_tungstenite::connect_async(url).await.map_err(ws_error)?;
    let (mut sink, mut source) = ws.split();
    let chunks: Vec<Vec<u8>> = pcm
        .chunks(chunk.max(1))
        .map(|c| c.iter().flat_map(|s| s.to_le_bytes()).collect())
        .collect();
    let sender = async move {
        let start = Instant::now();
        let mut sent = 0usize;
        for c in chunks {
            sent += c.len() / 2;
            sink.send(Message::Binary(c.into())).await?;
            if realtime {
                let due = start + Duration::from_secs_f64(sent as f64 / SAMPLE_RATE as f64);
                tokio::time::sleep_until(due.into()).await;
            }
        }
        sink.send(Message::text(r#"{"type":"end"}"#)).await?;
        Ok::<_, tokio_tungstenite::tungstenite::Error>(sink)
    };
    let receiver = async move {
        let mut t = ClientTranscript::default();
        while let Some(msg) = source.next().await {
            let text = match msg.map_err(ws_error)? {
                Message::Text(text) => text,
                Message::Close(_) => break,
                _ => continue,
            };
            match serde_json::from_str::<ServerMessage>(text.as_str())? {
                m @ ServerMessage::Hello { .. } => t.hello = Some(m),
                ServerMessage::Viseme {
                    frame,
                    viseme,
                    wall_latency_ms,
                    ..
                } => {
                    t.changes.push((frame, viseme));
                    t.wall_latency_ms.push(wall_latency_ms);
                }
                ServerMessage::Stats { processing_ms, .. } => t.stats.push(processing_ms),
                ServerMessage::End { frames, .. } => t.frames = Some(frames),
                ServerMessage::Error { kind, message } => t.errors.push((kind, message)),
            }
        }
        Ok::<_, Error>(t)
    };
    let (sent, transcript) = tokio::join!(sender, receiver);
    if let Ok(mut sink) = sent {
        let _ = sink.close().await;
    }
    transcript
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_shapes() {
        let m = ServerMessage::Viseme {
            frame: 3,
            time_ms: 125.0,
            viseme: VisemeId::Ah,
            code: VisemeId::Ah.code(),
            wall_latency_ms: 1.5,
        };
        let v: serde_json::Value = serde_json::from_str(&encode(&m)).unwrap();
        assert_eq!(v["type"], "viseme");
        assert_eq!(v["viseme"], "Ah");
        assert_eq!(v["time_ms"], 125.0);
        let e: ClientMessage = serde_json::from_str(r#"{"type":"end"}"#).unwrap();
        assert_eq!(e, ClientMessage::End);
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"stop"}"#).is_err());
        let h = encode(&ServerMessage::Hello {
            version: 1,
            sample_rate: 16000,
            frame_rate: 24,
            audio_delay_ms: 200.0,
            algorithmic_latency_ms: 123.0,
        });
        assert!(h.starts_with(r#"{"type":"hello""#));
    }
}

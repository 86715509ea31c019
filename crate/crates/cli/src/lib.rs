//! Scenario loading and the live websocket server behind the `manikin`
//! binary.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::mpsc as std_mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use futures_util::{SinkExt, StreamExt};
use manikin::sim::{bundled, Command, CommandLog, Scenario, ServerMessage, Session, Tick};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, oneshot};
use tokio_tungstenite::tungstenite::Message;

/// Loads a scenario file, or a bundled scenario when `spec` is not a path
/// to an existing file.
pub fn load_scenario(spec: &str, overrides: &[String]) -> Result<Scenario> {
    if Path::new(spec).is_file() {
        return Scenario::from_path(spec, overrides).with_context(|| format!("loading {spec}"));
    }
    let name = spec.strip_prefix("bundled:").unwrap_or(spec);
    if bundled::names().any(|n| n == name) {
        return bundled::load(name, overrides)
            .with_context(|| format!("loading bundled scenario {name}"));
    }
    anyhow::bail!(
        "no scenario file {spec} and no bundled scenario of that name (bundled: {})",
        bundled::names().collect::<Vec<_>>().join(", ")
    )
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    /// Outbound frames buffered per client before a laggard drops frames.
    pub buffer: usize,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            speed: 1.0,
            buffer: 64,
        }
    }
}

enum Inbound {
    Command(Command, oneshot::Sender<Result<(), String>>),
    Stop(oneshot::Sender<CommandLog>),
}

/// A running server. Dropping it without [`ServerHandle::shutdown`] leaves
/// the simulation thread running until the process exits.
pub struct ServerHandle {
    pub addr: SocketAddr,
    inbound: std_mpsc::Sender<Inbound>,
    accept: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    /// Stops the simulation and returns the session's command log.
    pub async fn shutdown(self) -> Result<CommandLog> {
        let (tx, rx) = oneshot::channel();
        self.inbound
            .send(Inbound::Stop(tx))
            .map_err(|_| anyhow::anyhow!("simulation thread already stopped"))?;
        let log = rx
            .await
            .context("simulation thread stopped without a log")?;
        self.accept.abort();
        Ok(log)
    }
}

/// Binds `addr` and starts the simulation loop and the websocket listener.
pub async fn spawn_server(
    scenario: Scenario,
    addr: &str,
    options: ServeOptions,
) -> Result<ServerHandle> {
    let listener = TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    let addr = listener.local_addr()?;
    let session = Session::new(scenario)?;
    let hello = Arc::new(ServerMessage::Hello(session.hello()).to_json());
    let first = Arc::new(ServerMessage::Frame(session.frame()).to_json());
    let (frames, _) = broadcast::channel::<Arc<String>>(options.buffer.max(1));
    let (inbound, rx) = std_mpsc::channel();

    let out = frames.clone();
    thread::Builder::new()
        .name("manikin-sim".into())
        .spawn(move || simulate(session, rx, out, options.speed))?;

    let tx = inbound.clone();
    let accept = tokio::spawn(async move {
        while let Ok((stream, _)) = listener.accept().await {
            let client = Client {
                hello: hello.clone(),
                first: first.clone(),
                frames: frames.subscribe(),
                inbound: tx.clone(),
            };
            tokio::spawn(async move {
                let _ = client.run(stream).await;
            });
        }
    });
    Ok(ServerHandle {
        addr,
        inbound,
        accept,
    })
}

/// The simulation loop: the only owner of the session. Commands are drained
/// at step boundaries; frames go out as immutable strings.
fn simulate(
    mut session: Session,
    rx: std_mpsc::Receiver<Inbound>,
    frames: broadcast::Sender<Arc<String>>,
    speed: f64,
) {
    let dt = session.world().dt();
    let period = Duration::from_secs_f64(dt / speed.max(1e-9));
    let mut next = Instant::now();
    let mut failed = false;
    loop {
        loop {
            match rx.try_recv() {
                Ok(Inbound::Command(cmd, reply)) => {
                    let _ = reply.send(session.submit(cmd).map_err(|e| e.to_string()));
                }
                Ok(Inbound::Stop(reply)) => {
                    let _ = reply.send(session.log());
                    return;
                }
                Err(std_mpsc::TryRecvError::Empty) => break,
                Err(std_mpsc::TryRecvError::Disconnected) => return,
            }
        }
        if !failed {
            match session.tick() {
                Ok(Tick::Stepped(_) | Tick::Reset(_) | Tick::Paused) => {
                    let _ = frames.send(Arc::new(ServerMessage::Frame(session.frame()).to_json()));
                }
                Err(e) => {
                    failed = true;
                    let _ = frames.send(Arc::new(
                        ServerMessage::error(format!("simulation stopped: {e}")).to_json(),
                    ));
                }
            }
        }
        next += period;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else {
            // Behind schedule: keep the pace from here rather than bursting.
            next = now;
        }
    }
}

struct Client {
    hello: Arc<String>,
    first: Arc<String>,
    frames: broadcast::Receiver<Arc<String>>,
    inbound: std_mpsc::Sender<Inbound>,
}

impl Client {
    async fn run(mut self, stream: TcpStream) -> Result<()> {
        let ws = tokio_tungstenite::accept_async(stream).await?;
        let (mut sink, mut source) = ws.split();
        sink.send(Message::text(self.hello.as_str())).await?;
        sink.send(Message::text(self.first.as_str())).await?;
        loop {
            tokio::select! {
                frame = self.frames.recv() => match frame {
                    Ok(text) => sink.send(Message::text(text.as_str())).await?,
                    // Slow client: skip what it missed.
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                msg = source.next() => match msg {
                    Some(Ok(Message::Text(text))) => {
                        if let Some(err) = self.submit(&text).await {
                            sink.send(Message::text(ServerMessage::error(err).to_json())).await?;
                        }
                    }
                    Some(Ok(Message::Binary(_))) => {
                        sink.send(Message::text(ServerMessage::error("binary messages are not supported").to_json())).await?;
                    }
                    Some(Ok(Message::Close(_))) | None => break,
                    Some(Ok(_)) => {}
                    Some(Err(e)) => return Err(e.into()),
                },
            }
        }
        Ok(())
    }

    async fn submit(&self, text: &str) -> Option<String> {
        let cmd = match Command::parse(text) {
            Ok(c) => c,
            Err(e) => return Some(e.to_string()),
        };
        let (tx, rx) = oneshot::channel();
        if self.inbound.send(Inbound::Command(cmd, tx)).is_err() {
            return Some("simulation stopped".into());
        }
        match rx.await {
            Ok(Ok(())) => None,
            Ok(Err(e)) => Some(e),
            Err(_) => Some("simulation stopped".into()),
        }
    }
}

//! Live service: one TCP or WebSocket client at a time.
//!
//! The simulation loop runs on its own thread and talks to the socket
//! thread only through bounded channels. Wall-clock pacing happens in the
//! outbound sink, so the loop itself still runs on simulated time.

use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::Path;
use std::sync::mpsc::{self, Receiver, SyncSender, TryRecvError};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use tungstenite::WebSocket;

use cobot_intent::control::InputSample;
use cobot_intent::protocol::{
    decode, encode, record, replay, Frame, FrameStamper, Message, ProtocolError, LOG_EXTENSION,
    PROTOCOL_VERSION,
};
use cobot_intent::session::{
    fold_inputs, run_session, FrameSink, InputSource, Operator, Scenario, SessionConfig,
};

const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);
const POLL_INTERVAL: Duration = Duration::from_millis(2);

enum Transport {
    Tcp {
        reader: BufReader<TcpStream>,
        writer: TcpStream,
        pending: Vec<u8>,
    },
    Ws {
        socket: Box<WebSocket<TcpStream>>,
        pending: Vec<String>,
    },
}

fn timed_out(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut)
}

impl Transport {
    /// Browsers open with an HTTP upgrade request; anything else is raw lines.
    fn open(stream: TcpStream) -> anyhow::Result<Self> {
        stream.set_read_timeout(Some(HANDSHAKE_TIMEOUT))?;
        let mut head = [0u8; 4];
        let n = stream.peek(&mut head)?;
        if &head[..n] == b"GET " {
            let socket = tungstenite::accept(stream).map_err(|e| anyhow::anyhow!("websocket handshake: {e}"))?;
            Ok(Transport::Ws {
                socket: Box::new(socket),
                pending: Vec::new(),
            })
        } else {
            Ok(Transport::Tcp {
                reader: BufReader::new(stream.try_clone()?),
                writer: stream,
                pending: Vec::new(),
            })
        }
    }

    fn set_timeout(&mut self, t: Duration) -> io::Result<()> {
        match self {
            Transport::Tcp { writer, .. } => writer.set_read_timeout(Some(t)),
            Transport::Ws { socket, .. } => socket.get_mut().set_read_timeout(Some(t)),
        }
    }

    fn send(&mut self, frame: &Frame) -> io::Result<()> {
        let line = encode(frame);
        match self {
            Transport::Tcp { writer, .. } => {
                writer.write_all(line.as_bytes())?;
                writer.write_all(b"\n")
            }
            Transport::Ws { socket, .. } => socket
                .send(tungstenite::Message::text(line))
                .map_err(ws_io_error),
        }
    }

    /// Next inbound line; `Ok(None)` when nothing arrived before the timeout.
    /// A closed connection is `UnexpectedEof`.
    fn recv_line(&mut self) -> io::Result<Option<String>> {
        match self {
            Transport::Tcp {
                reader, pending, ..
            } => match reader.read_until(b'\n', pending) {
                Ok(0) => Err(io::ErrorKind::UnexpectedEof.into()),
                Ok(_) if pending.ends_with(b"\n") => {
                    let line = String::from_utf8_lossy(pending).into_owned();
                    pending.clear();
                    Ok(Some(line))
                }
                // eof in the middle of a line
                Ok(_) => Err(io::ErrorKind::UnexpectedEof.into()),
                Err(e) if timed_out(&e) => Ok(None),
                Err(e) => Err(e),
            },
            Transport::Ws { socket, pending } => {
                if let Some(line) = pending.pop() {
                    return Ok(Some(line));
                }
                match socket.read() {
                    Ok(tungstenite::Message::Text(text)) => {
                        let mut lines: Vec<String> = text
                            .as_str()
                            .lines()
                            .filter(|l| !l.trim().is_empty())
                            .map(str::to_owned)
                            .collect();
                        lines.reverse();
                        *pending = lines;
                        Ok(pending.pop())
                    }
                    Ok(tungstenite::Message::Close(_)) => Err(io::ErrorKind::UnexpectedEof.into()),
                    Ok(_) => Ok(None),
                    Err(tungstenite::Error::Io(e)) if timed_out(&e) => Ok(None),
                    Err(e) => Err(ws_io_error(e)),
                }
            }
        }
    }

    fn close(&mut self) {
        match self {
            Transport::Tcp { writer, .. } => {
                let _ = writer.flush();
                let _ = writer.shutdown(std::net::Shutdown::Both);
            }
            Transport::Ws { socket, .. } => {
                let _ = socket.close(None);
                let _ = socket.flush();
            }
        }
    }
}

fn ws_io_error(e: tungstenite::Error) -> io::Error {
    match e {
        tungstenite::Error::Io(e) => e,
        tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed => {
            io::ErrorKind::BrokenPipe.into()
        }
        other => io::Error::other(other.to_string()),
    }
}

/// Inputs forwarded from the socket thread, restamped with simulated time
/// so a recorded session re-runs identically from its log.
struct ChannelSource(Receiver<InputSample>);

impl InputSource for ChannelSource {
    fn poll(&mut self, _tick: u64, now_ms: u64) -> Option<InputSample> {
        let mut latest: Option<InputSample> = None;
        while let Ok(s) = self.0.try_recv() {
            latest = Some(match latest {
                Some(prev) => fold_inputs(prev, s),
                None => s,
            });
        }
        latest.map(|s| InputSample {
            timestamp_ms: now_ms,
            ..s
        })
    }
}

/// Holds each frame until its tick is due, then queues it for the socket.
struct PacedSink {
    tx: SyncSender<Frame>,
    start: Instant,
    seconds_per_tick: f64,
}

impl FrameSink for PacedSink {
    fn send(&mut self, frame: &Frame) -> io::Result<()> {
        if self.seconds_per_tick > 0.0 {
            let due = self.start + Duration::from_secs_f64(frame.tick as f64 * self.seconds_per_tick);
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
        }
        self.tx
            .send(frame.clone())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "client disconnected"))
    }
}

fn reject(transport: &mut Transport, session: &str, reason: String) {
    let bye = FrameStamper::new(session).stamp(0, Message::Bye { reason });
    let _ = transport.send(&bye);
    transport.close();
}

pub fn serve(
    prepared: &(Scenario, SessionConfig),
    addr: &str,
    speed: f64,
    once: bool,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let listener = crate::bind(addr)?;
    for (n, stream) in listener.incoming().enumerate() {
        let result = stream
            .map_err(anyhow::Error::from)
            .and_then(|s| handle_client(prepared, s, n, speed, out));
        if let Err(e) = result {
            eprintln!("session {n}: {e:#}");
        }
        if once {
            break;
        }
    }
    Ok(())
}

fn handle_client(
    (scenario, base): &(Scenario, SessionConfig),
    stream: TcpStream,
    n: usize,
    speed: f64,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let mut transport = Transport::open(stream)?;
    let mut cfg = base.clone();
    cfg.session_id = format!("{}-live{n}", base.session_id);

    let first = transport
        .recv_line()?
        .context("client sent nothing before the handshake timeout")?;
    match decode(&first) {
        Ok(Frame {
            message: Message::Hello {
                scheme, autonomy, ..
            },
            ..
        }) => {
            cfg.scheme = scheme;
            cfg.autonomy = autonomy;
        }
        Err(ProtocolError::Version { found, .. }) => {
            let reason = format!("protocol version mismatch: expected {PROTOCOL_VERSION}, got {found}");
            reject(&mut transport, &cfg.session_id, reason.clone());
            bail!(reason);
        }
        Ok(other) => {
            reject(&mut transport, &cfg.session_id, "expected hello".into());
            bail!("client opened with {}", other.message.tag());
        }
        Err(e) => {
            reject(&mut transport, &cfg.session_id, format!("bad hello: {e}"));
            bail!("bad hello: {e}");
        }
    }

    let (in_tx, in_rx) = mpsc::sync_channel::<InputSample>(256);
    let (out_tx, out_rx) = mpsc::sync_channel::<Frame>(1024);
    let seconds_per_tick = cfg.dt * speed.max(0.0);
    let session = {
        let scenario = scenario.clone();
        let cfg = cfg.clone();
        thread::spawn(move || {
            let mut source = ChannelSource(in_rx);
            let mut sink = PacedSink {
                tx: out_tx,
                start: Instant::now(),
                seconds_per_tick,
            };
            run_session(&scenario, &cfg, Operator::External(&mut source), &mut sink)
        })
    };

    transport.set_timeout(POLL_INTERVAL)?;
    pump(&mut transport, &out_rx, &in_tx);
    drop(out_rx);
    drop(in_tx);
    transport.close();

    let outcome = session
        .join()
        .map_err(|_| anyhow::anyhow!("session thread panicked"))??;
    eprintln!("session {} ended: {}", cfg.session_id, outcome.reason);
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        record(&outcome.log, dir.join(format!("{}.{LOG_EXTENSION}", cfg.session_id)))?;
    }
    Ok(())
}

/// Moves frames out and inputs in until the session says bye or the
/// client goes away.
fn pump(transport: &mut Transport, out_rx: &Receiver<Frame>, in_tx: &SyncSender<InputSample>) {
    loop {
        loop {
            match out_rx.try_recv() {
                Ok(frame) => {
                    if transport.send(&frame).is_err() {
                        return;
                    }
                    if matches!(frame.message, Message::Bye { .. }) {
                        return;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return,
            }
        }
        match transport.recv_line() {
            Ok(Some(line)) => match decode(&line) {
                Ok(Frame {
                    message: Message::Input { sample },
                    ..
                }) => {
                    // a full queue means the loop is far behind; dropping is latest-wins anyway
                    let _ = in_tx.try_send(sample);
                }
                Ok(Frame {
                    message: Message::Bye { .. },
                    ..
                }) => return,
                Ok(_) => {}
                Err(e) => eprintln!("ignoring client line: {e}"),
            },
            Ok(None) => {}
            Err(_) => return,
        }
    }
}

/// Streams a recorded log to the first client that connects.
pub fn serve_replay(log: &Path, speed: f64, addr: &str) -> anyhow::Result<()> {
    let frames = replay(log, speed)?;
    let listener = crate::bind(addr)?;
    let (stream, _) = listener.accept()?;
    let mut transport = Transport::open(stream)?;
    let mut result = Ok(());
    for frame in frames {
        match frame {
            Ok(frame) => transport.send(&frame)?,
            Err(e) => {
                result = Err(e.into());
                break;
            }
        }
    }
    transport.close();
    result
}

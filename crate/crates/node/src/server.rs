//! The operator service: one listening port for both WebSocket and
//! newline-delimited TCP clients, a single application thread that owns the
//! session and the command log.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;
use twin_core::kinematics::KinematicChain;
use twin_core::session::{Event, Session, SessionConfig};
use twin_core::world::GroundTruthWorld;

use crate::log::{CommandLog, LogHeader};
use crate::wire::{encode, AckMsg, DecodeError, Envelope, ErrorMsg, Message, SceneStateMsg, StreamDecoder, MAX_FRAME};

/// How long a new connection has to announce a WebSocket handshake before it
/// is treated as a plain TCP client.
const SNIFF_WINDOW: Duration = Duration::from_millis(200);
const POLL: Duration = Duration::from_millis(20);

/// Source of `stamp_ms` for applied commands. Either way the stamp is
/// recorded in the log, so replay never consults a clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    /// Milliseconds since the server started.
    Wall,
    /// Logical clock advanced by a fixed step per command.
    Step(u64),
}

impl Default for ClockMode {
    fn default() -> Self {
        ClockMode::Step(100)
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub world: GroundTruthWorld,
    pub chain: KinematicChain,
    pub session: SessionConfig,
    pub log_path: PathBuf,
    pub clock: ClockMode,
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("cannot create log: {0}")]
    Log(io::Error),
    #[error("{0}")]
    Io(#[from] io::Error),
}

type ConnId = u64;

enum AppMsg {
    Register(ConnId, Sender<String>),
    Unregister(ConnId),
    Frame(ConnId, Vec<u8>),
    Reject(ConnId, DecodeError),
    Shutdown(Sender<Session>),
}

pub struct ServerHandle {
    addr: SocketAddr,
    app_tx: Sender<AppMsg>,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    app: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, writes the log trailer and returns the final session.
    pub fn shutdown(mut self) -> Session {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        let (tx, rx) = mpsc::channel();
        self.app_tx.send(AppMsg::Shutdown(tx)).expect("application thread alive");
        let session = rx.recv().expect("application thread replies on shutdown");
        if let Some(a) = self.app.take() {
            let _ = a.join();
        }
        session
    }

    /// Blocks until the process is killed.
    pub fn wait(mut self) {
        if let Some(a) = self.app.take() {
            let _ = a.join();
        }
    }
}

/// Binds `addr` and starts serving. Use port 0 for an ephemeral port.
pub fn serve(addr: &str, config: ServerConfig) -> Result<ServerHandle, ServeError> {
    let listener = TcpListener::bind(addr).map_err(|source| ServeError::Bind { addr: addr.into(), source })?;
    let local = listener.local_addr()?;
    listener.set_nonblocking(true)?;

    let header = LogHeader::new(&config.world, &config.chain, &config.session);
    let log = CommandLog::create(&config.log_path, &header).map_err(ServeError::Log)?;
    let session = header.session(&config.world);

    let (app_tx, app_rx) = mpsc::channel();
    let app = thread::spawn(move || App::new(session, log, config.clock).run(app_rx));

    let stop = Arc::new(AtomicBool::new(false));
    let acceptor = {
        let stop = stop.clone();
        let app_tx = app_tx.clone();
        thread::spawn(move || accept_loop(listener, app_tx, stop))
    };
    Ok(ServerHandle { addr: local, app_tx, stop, acceptor: Some(acceptor), app: Some(app) })
}

fn accept_loop(listener: TcpListener, app_tx: Sender<AppMsg>, stop: Arc<AtomicBool>) {
    let next_id = AtomicU64::new(1);
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let id = next_id.fetch_add(1, Ordering::SeqCst);
                let tx = app_tx.clone();
                thread::spawn(move || {
                    // a failing client only takes down its own threads
                    let _ = handle_connection(id, stream, tx);
                });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(_) => thread::sleep(POLL),
        }
    }
}

fn is_websocket(stream: &TcpStream) -> io::Result<bool> {
    stream.set_read_timeout(Some(POLL))?;
    let deadline = Instant::now() + SNIFF_WINDOW;
    let mut buf = [0u8; 4];
    while Instant::now() < deadline {
        match stream.peek(&mut buf) {
            Ok(0) => return Ok(false),
            Ok(n) if n >= 4 => return Ok(&buf == b"GET "),
            Ok(n) if !b"GET ".starts_with(&buf[..n]) => return Ok(false),
            Ok(_) => thread::sleep(Duration::from_millis(2)),
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(false)
}

fn handle_connection(id: ConnId, stream: TcpStream, app: Sender<AppMsg>) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    if is_websocket(&stream)? {
        serve_websocket(id, stream, app)
    } else {
        serve_tcp(id, stream, app)
    }
}

/// One line of at most `MAX_FRAME` bytes. Longer lines are consumed and
/// reported as `Err(TooLarge)`. `None` at end of stream.
fn read_frame<R: BufRead>(r: &mut R) -> io::Result<Option<Result<Vec<u8>, DecodeError>>> {
    let mut line = Vec::new();
    let mut oversized = false;
    loop {
        let buf = match r.fill_buf() {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        if buf.is_empty() {
            return Ok(if line.is_empty() && !oversized { None } else if oversized { Some(Err(DecodeError::TooLarge)) } else { Some(Ok(line)) });
        }
        let (chunk, done) = match buf.iter().position(|&b| b == b'\n') {
            Some(i) => (&buf[..i], Some(i + 1)),
            None => (buf, None),
        };
        if !oversized {
            if line.len() + chunk.len() > MAX_FRAME {
                oversized = true;
                line = Vec::new();
            } else {
                line.extend_from_slice(chunk);
            }
        }
        let used = done.unwrap_or(buf.len());
        r.consume(used);
        if done.is_some() {
            return Ok(Some(if oversized { Err(DecodeError::TooLarge) } else { Ok(line) }));
        }
    }
}

fn serve_tcp(id: ConnId, stream: TcpStream, app: Sender<AppMsg>) -> io::Result<()> {
    stream.set_read_timeout(None)?;
    let (out_tx, out_rx) = mpsc::channel::<String>();
    let mut writer = stream.try_clone()?;
    let writer_thread = thread::spawn(move || {
        for line in out_rx {
            if writer.write_all(line.as_bytes()).and_then(|_| writer.write_all(b"\n")).is_err() {
                break;
            }
        }
        // unblocks the reader once the application drops this connection
        let _ = writer.shutdown(std::net::Shutdown::Both);
    });
    if app.send(AppMsg::Register(id, out_tx)).is_err() {
        return Ok(());
    }
    let mut reader = BufReader::new(stream);
    while let Ok(Some(frame)) = read_frame(&mut reader) {
        let msg = match frame {
            Ok(bytes) if bytes.iter().all(u8::is_ascii_whitespace) => continue,
            Ok(bytes) => AppMsg::Frame(id, bytes),
            Err(e) => AppMsg::Reject(id, e),
        };
        if app.send(msg).is_err() {
            break;
        }
    }
    let _ = app.send(AppMsg::Unregister(id));
    let _ = writer_thread.join();
    Ok(())
}

fn serve_websocket(id: ConnId, stream: TcpStream, app: Sender<AppMsg>) -> io::Result<()> {
    use tungstenite::{Error as WsError, Message as WsMessage};
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let mut ws = tungstenite::accept(stream).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let (out_tx, out_rx) = mpsc::channel::<String>();
    if app.send(AppMsg::Register(id, out_tx)).is_err() {
        return Ok(());
    }
    'conn: loop {
        loop {
            match out_rx.try_recv() {
                Ok(text) => {
                    if ws.send(WsMessage::Text(text)).is_err() {
                        break 'conn;
                    }
                }
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    break 'conn;
                }
            }
        }
        let msg = match ws.read() {
            Ok(WsMessage::Text(t)) => AppMsg::Frame(id, t.into_bytes()),
            Ok(WsMessage::Binary(b)) => AppMsg::Frame(id, b),
            Ok(WsMessage::Close(_)) => break,
            Ok(_) => continue,
            Err(WsError::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => continue,
            Err(_) => break,
        };
        if app.send(msg).is_err() {
            break;
        }
    }
    let _ = app.send(AppMsg::Unregister(id));
    Ok(())
}

struct Client {
    tx: Sender<String>,
    decoder: StreamDecoder,
}

struct App {
    session: Session,
    log: Option<CommandLog>,
    clock: ClockMode,
    started: Instant,
    clients: BTreeMap<ConnId, Client>,
    out_seq: u64,
    commands: u64,
    last_stamp: u64,
}

fn decode_code(e: &DecodeError) -> &'static str {
    match e {
        DecodeError::TooLarge => "frame_too_large",
        DecodeError::NotUtf8 | DecodeError::Malformed(_) => "malformed",
        DecodeError::UnknownType(_) => "unknown_type",
        DecodeError::BadPayload { .. } => "bad_payload",
        DecodeError::SeqRegression { .. } => "seq_regression",
    }
}

impl App {
    fn new(session: Session, log: CommandLog, clock: ClockMode) -> Self {
        App {
            session,
            log: Some(log),
            clock,
            started: Instant::now(),
            clients: BTreeMap::new(),
            out_seq: 0,
            commands: 0,
            last_stamp: 0,
        }
    }

    fn run(mut self, rx: Receiver<AppMsg>) {
        loop {
            let msg = match rx.recv_timeout(Duration::from_secs(1)) {
                Ok(m) => m,
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => return,
            };
            match msg {
                AppMsg::Register(id, tx) => {
                    self.clients.insert(id, Client { tx, decoder: StreamDecoder::new() });
                    let scene = self.scene_message();
                    self.send_to(id, scene);
                }
                AppMsg::Unregister(id) => {
                    self.clients.remove(&id);
                }
                AppMsg::Frame(id, bytes) => self.on_frame(id, &bytes),
                AppMsg::Reject(id, e) => self.send_error(id, decode_code(&e), e.to_string()),
                AppMsg::Shutdown(reply) => {
                    self.clients.clear();
                    if let Some(log) = self.log.take() {
                        let _ = log.finish(self.session.digest(), self.last_stamp);
                    }
                    let _ = reply.send(self.session);
                    return;
                }
            }
        }
    }

    fn next_stamp(&mut self) -> u64 {
        let s = match self.clock {
            ClockMode::Wall => self.started.elapsed().as_millis() as u64,
            ClockMode::Step(step) => (self.commands + 1) * step,
        };
        // the session clock never runs backwards
        self.last_stamp = s.max(self.last_stamp);
        self.last_stamp
    }

    fn on_frame(&mut self, id: ConnId, bytes: &[u8]) {
        let Some(client) = self.clients.get_mut(&id) else { return };
        let env = match client.decoder.decode(bytes) {
            Ok(env) => env,
            Err(e) => return self.send_error(id, decode_code(&e), e.to_string()),
        };
        let Some(cmd) = env.payload.to_command() else {
            let tag = env.payload.type_tag();
            return self.send_error(id, "not_a_command", format!("`{tag}` is server-to-client only"));
        };
        let stamp = self.next_stamp();
        let logged = Envelope::new(self.commands + 1, stamp, env.payload.clone());
        if let Some(log) = self.log.as_mut() {
            if let Err(e) = log.append(&logged) {
                return self.send_error(id, "log_io", e.to_string());
            }
        }
        self.commands += 1;
        let events = self.session.apply(cmd, stamp);
        let phase = self.session.phase;
        let mut ok = true;
        for ev in &events {
            let msg = Message::from_event(ev, phase);
            match ev {
                Event::Error { .. } => {
                    ok = false;
                    self.send_to(id, msg);
                }
                Event::Passthrough(_) => self.send_to(id, msg),
                _ => self.broadcast(msg),
            }
        }
        let ack = AckMsg { command_seq: env.seq, ok, phase, revision: self.session.belief.revision };
        self.send_to(id, Message::Ack(ack));
    }

    fn scene_message(&self) -> Message {
        let b = &self.session.belief;
        Message::SceneState(SceneStateMsg { revision: b.revision, phase: self.session.phase, objects: b.objects.clone() })
    }

    fn frame(&mut self, payload: Message) -> String {
        self.out_seq += 1;
        encode(&Envelope::new(self.out_seq, self.last_stamp, payload))
    }

    fn send_to(&mut self, id: ConnId, payload: Message) {
        let text = self.frame(payload);
        if let Some(c) = self.clients.get(&id) {
            let _ = c.tx.send(text);
        }
    }

    fn send_error(&mut self, id: ConnId, code: &str, message: String) {
        self.send_to(id, Message::Error(ErrorMsg { code: code.into(), message }));
    }

    fn broadcast(&mut self, payload: Message) {
        let text = self.frame(payload);
        self.clients.retain(|_, c| c.tx.send(text.clone()).is_ok());
    }
}

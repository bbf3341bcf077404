//! TCP transport for the valuation exchange.
//!
//! The broker accepts two kinds of connection, told apart by the first
//! `HELLO`:
//!
//! ```text
//! buyer  -> HELLO {role: buyer, sellers: N}, QUERY, REVEAL
//! broker -> VALUATION (one per seller, tagged with the seller name) | ERROR
//!
//! seller -> HELLO {role: seller, seller: name}
//! broker -> QUERY
//! seller -> VARIANCES
//! broker -> VALUATION | ERROR
//! ```
//!
//! Sessions are single-shot: any protocol violation aborts the session and
//! both the offending seller and the buyer receive `ERROR`. Each step waits
//! at most the configured timeout (30 s by default).

use std::collections::HashMap;
use std::io::{BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{mpsc, Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::wire::{
    codes, decode, encode, ErrorPayload, HelloPayload, Message, QueryPayload, RevealPayload,
    Role, ValuationPayload, VariancesPayload,
};
use super::{broker_valuate, seller_respond, BuyerSecret, DirectionQuery, VarianceResponse};
use crate::error::{Error, Result};
use crate::linalg::DataMatrix;
use crate::valuation::ValuationConfig;

pub const DEFAULT_STEP_TIMEOUT: Duration = Duration::from_secs(30);

/// A line-oriented JSON connection.
pub struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Connection {
    pub fn new(stream: TcpStream, timeout: Duration) -> Result<Self> {
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        Ok(Self { reader: BufReader::new(stream), writer })
    }

    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self> {
        let mut last = None;
        let addrs = addr
            .to_socket_addrs()
            .map_err(|e| Error::Transport(format!("cannot resolve address: {e}")))?;
        for a in addrs {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(s) => return Self::new(s, timeout),
                Err(e) => last = Some(format!("{a}: {e}")),
            }
        }
        Err(Error::Transport(format!(
            "cannot connect ({})",
            last.unwrap_or_else(|| "no address".into())
        )))
    }

    pub fn send(&mut self, session: &str, message: &Message) -> Result<()> {
        let mut line = encode(session, message);
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(io_error)
    }

    /// Sends a raw line as-is; used to exercise malformed input.
    pub fn send_raw(&mut self, line: &str) -> Result<()> {
        self.writer
            .write_all(format!("{line}\n").as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(io_error)
    }

    /// Next message. Transport problems and undecodable lines are both errors;
    /// the latter keep their `ERROR` code in [`Received::Invalid`].
    pub fn recv(&mut self) -> Result<Received> {
        let mut line = String::new();
        let n = self.reader.read_line(&mut line).map_err(io_error)?;
        if n == 0 {
            return Err(Error::Transport("connection closed by peer".into()));
        }
        Ok(match decode(&line) {
            Ok((session, message)) => Received::Message { session, message },
            Err(e) => Received::Invalid { code: e.code, detail: e.detail },
        })
    }
}

#[derive(Debug)]
pub enum Received {
    Message { session: String, message: Message },
    Invalid { code: &'static str, detail: String },
}

fn io_error(e: std::io::Error) -> Error {
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => Error::Timeout(e.to_string()),
        _ => Error::Transport(e.to_string()),
    }
}

fn remote_error(p: ErrorPayload) -> Error {
    match p.code.as_str() {
        codes::TIMEOUT => Error::Timeout(p.detail),
        codes::SESSION => Error::Session(p.detail),
        _ => Error::ProtocolViolation(format!("{}: {}", p.code, p.detail)),
    }
}

/// Receives one well-formed message, converting `ERROR` replies and
/// undecodable lines into errors.
fn expect_message(conn: &mut Connection) -> Result<(String, Message)> {
    match conn.recv()? {
        Received::Message { message: Message::Error(p), .. } => Err(remote_error(p)),
        Received::Message { session, message } => Ok((session, message)),
        Received::Invalid { code, detail } => {
            Err(Error::ProtocolViolation(format!("{code}: {detail}")))
        }
    }
}

fn unexpected(expected: &str, got: &Message) -> Error {
    Error::ProtocolViolation(format!("expected {expected}, received {}", got.kind()))
}

/// A valuation completed by the broker.
#[derive(Debug, Clone, PartialEq)]
pub struct BrokerEvent {
    pub session_id: String,
    pub seller: String,
    pub valuation: ValuationPayload,
}

#[derive(Debug, Clone)]
pub struct BrokerOptions {
    pub config: ValuationConfig,
    pub step_timeout: Duration,
    /// Stop accepting once this many sessions have finished.
    pub max_sessions: Option<usize>,
}

impl Default for BrokerOptions {
    fn default() -> Self {
        Self {
            config: ValuationConfig::default(),
            step_timeout: DEFAULT_STEP_TIMEOUT,
            max_sessions: None,
        }
    }
}

struct SessionState {
    query: DirectionQuery,
    secret: BuyerSecret,
    expected: usize,
    claimed: usize,
    closed: bool,
    to_buyer: mpsc::Sender<Message>,
}

#[derive(Default)]
struct Registry {
    sessions: Mutex<HashMap<String, SessionState>>,
    finished: Mutex<usize>,
    changed: Condvar,
}

impl Registry {
    fn abort(&self, session: &str, message: Message) {
        let mut sessions = self.sessions.lock().expect("registry lock");
        if let Some(state) = sessions.get_mut(session) {
            if !state.closed {
                state.closed = true;
                let _ = state.to_buyer.send(message);
            }
        }
    }
}

pub struct Broker {
    listener: TcpListener,
    registry: Arc<Registry>,
    options: BrokerOptions,
    events: Option<mpsc::Sender<BrokerEvent>>,
}

impl Broker {
    pub fn bind(addr: impl ToSocketAddrs, options: BrokerOptions) -> Result<Self> {
        options.config.validate()?;
        let listener =
            TcpListener::bind(addr).map_err(|e| Error::Transport(format!("cannot listen: {e}")))?;
        Ok(Self { listener, registry: Arc::default(), options, events: None })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Completed valuations are also pushed to `events`.
    pub fn with_events(mut self, events: mpsc::Sender<BrokerEvent>) -> Self {
        self.events = Some(events);
        self
    }

    /// Accepts connections until `max_sessions` sessions have finished, or
    /// forever when no limit is set. Each connection runs on its own thread.
    pub fn serve(self) -> Result<()> {
        self.listener.set_nonblocking(true)?;
        let mut workers: Vec<JoinHandle<()>> = Vec::new();
        loop {
            if let Some(max) = self.options.max_sessions {
                if *self.registry.finished.lock().expect("counter lock") >= max {
                    break;
                }
            }
            match self.listener.accept() {
                Ok((stream, _)) => {
                    stream.set_nonblocking(false)?;
                    let registry = Arc::clone(&self.registry);
                    let options = self.options.clone();
                    let events = self.events.clone();
                    workers.push(thread::spawn(move || {
                        if let Ok(conn) = Connection::new(stream, options.step_timeout) {
                            handle_connection(conn, &registry, &options, events.as_ref());
                        }
                    }));
                    workers.retain(|w| !w.is_finished());
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => return Err(Error::Transport(e.to_string())),
            }
        }
        for w in workers {
            let _ = w.join();
        }
        Ok(())
    }

    pub fn spawn(self) -> JoinHandle<Result<()>> {
        thread::spawn(move || self.serve())
    }
}

fn handle_connection(
    mut conn: Connection,
    registry: &Registry,
    options: &BrokerOptions,
    events: Option<&mpsc::Sender<BrokerEvent>>,
) {
    let (session, hello) = match conn.recv() {
        Ok(Received::Message { session, message: Message::Hello(h) }) => (session, h),
        Ok(Received::Message { session, message }) => {
            let _ = conn.send(&session, &Message::error(codes::UNEXPECTED, format!("expected HELLO, received {}", message.kind())));
            return;
        }
        Ok(Received::Invalid { code, detail }) => {
            let _ = conn.send("", &Message::error(code, detail));
            return;
        }
        Err(_) => return,
    };
    match hello.role {
        Role::Buyer => buyer_session(conn, session, hello, registry, options),
        Role::Seller => seller_session(conn, session, hello, registry, options, events),
    }
}

/// Reads one message of the expected kind, answering anything else with
/// `ERROR`.
fn read_step<T>(
    conn: &mut Connection,
    session: &str,
    expected: &str,
    pick: impl FnOnce(Message) -> std::result::Result<T, Message>,
) -> std::result::Result<T, Message> {
    let reply = match conn.recv() {
        Ok(Received::Message { session: s, .. }) if s != session => {
            Message::error(codes::SESSION, format!("message for session {s:?} on session {session:?}"))
        }
        Ok(Received::Message { message, .. }) => match pick(message) {
            Ok(v) => return Ok(v),
            Err(other) => Message::error(
                codes::UNEXPECTED,
                format!("expected {expected}, received {}", other.kind()),
            ),
        },
        Ok(Received::Invalid { code, detail }) => Message::error(code, detail),
        Err(Error::Timeout(d)) => Message::error(codes::TIMEOUT, format!("waiting for {expected}: {d}")),
        Err(e) => Message::error(codes::ABORTED, e.to_string()),
    };
    let _ = conn.send(session, &reply);
    Err(reply)
}

fn buyer_session(
    mut conn: Connection,
    session: String,
    hello: HelloPayload,
    registry: &Registry,
    options: &BrokerOptions,
) {
    let expected = hello.sellers.unwrap_or(1);
    let Ok(query) = read_step(&mut conn, &session, "QUERY", |m| match m {
        Message::Query(q) => Ok(q),
        other => Err(other),
    }) else {
        return;
    };
    let Ok(reveal) = read_step(&mut conn, &session, "REVEAL", |m| match m {
        Message::Reveal(r) => Ok(r),
        other => Err(other),
    }) else {
        return;
    };
    let query = match query.into_query(session.clone()) {
        Ok(q) => q,
        Err(e) => {
            let _ = conn.send(&session, &Message::error(codes::PROTOCOL_VIOLATION, e.to_string()));
            return;
        }
    };
    let secret = reveal.into_secret(session.clone(), query.len());
    if let Err(e) = secret.validate() {
        let _ = conn.send(&session, &Message::error(codes::PROTOCOL_VIOLATION, e.to_string()));
        return;
    }

    let (tx, rx) = mpsc::channel();
    {
        let mut sessions = registry.sessions.lock().expect("registry lock");
        if sessions.contains_key(&session) {
            drop(sessions);
            let _ = conn.send(&session, &Message::error(codes::SESSION, format!("session {session:?} already exists")));
            return;
        }
        sessions.insert(
            session.clone(),
            SessionState { query, secret, expected, claimed: 0, closed: expected == 0, to_buyer: tx },
        );
    }
    registry.changed.notify_all();

    let mut delivered = 0;
    while delivered < expected {
        match rx.recv_timeout(options.step_timeout) {
            Ok(msg @ Message::Valuation(_)) => {
                delivered += 1;
                if conn.send(&session, &msg).is_err() {
                    break;
                }
            }
            Ok(msg) => {
                let _ = conn.send(&session, &msg);
                break;
            }
            Err(_) => {
                let msg = Message::error(codes::TIMEOUT, "no seller completed in time");
                registry.abort(&session, msg.clone());
                let _ = conn.send(&session, &msg);
                break;
            }
        }
    }
    if let Some(state) = registry.sessions.lock().expect("registry lock").get_mut(&session) {
        state.closed = true;
    }
    *registry.finished.lock().expect("counter lock") += 1;
}

fn seller_session(
    mut conn: Connection,
    session: String,
    hello: HelloPayload,
    registry: &Registry,
    options: &BrokerOptions,
    events: Option<&mpsc::Sender<BrokerEvent>>,
) {
    let deadline = Instant::now() + options.step_timeout;
    let claimed = {
        let mut sessions = registry.sessions.lock().expect("registry lock");
        loop {
            if sessions.contains_key(&session) {
                break;
            }
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            sessions = registry
                .changed
                .wait_timeout(sessions, deadline - now)
                .expect("registry lock")
                .0;
        }
        match sessions.get_mut(&session) {
            None => Err(format!("unknown session {session:?}")),
            Some(s) if s.closed => Err(format!("session {session:?} is closed")),
            Some(s) if s.claimed >= s.expected => Err(format!("session {session:?} has all its sellers")),
            Some(s) => {
                s.claimed += 1;
                Ok((s.query.clone(), s.secret.clone(), s.to_buyer.clone(), s.claimed))
            }
        }
    };
    let (query, secret, to_buyer, slot) = match claimed {
        Ok(c) => c,
        Err(detail) => {
            let _ = conn.send(&session, &Message::error(codes::SESSION, detail));
            return;
        }
    };
    let seller = hello.seller.unwrap_or_else(|| format!("seller-{slot}"));

    if conn.send(&session, &Message::Query(QueryPayload::from(&query))).is_err() {
        registry.abort(&session, Message::error(codes::ABORTED, format!("lost seller {seller}")));
        return;
    }
    let variances = match read_step(&mut conn, &session, "VARIANCES", |m| match m {
        Message::Variances(v) => Ok(v),
        other => Err(other),
    }) {
        Ok(v) => v,
        Err(reply) => {
            registry.abort(&session, reply);
            return;
        }
    };
    let response = VarianceResponse { session_id: session.clone(), variances: variances.variances };
    match broker_valuate(&secret, &response, &options.config) {
        Ok(outcome) => {
            let payload = ValuationPayload::from_report(&outcome.report, None);
            let _ = conn.send(&session, &Message::Valuation(payload.clone()));
            let tagged = ValuationPayload { seller: Some(seller.clone()), ..payload };
            if let Some(events) = events {
                let _ = events.send(BrokerEvent {
                    session_id: session.clone(),
                    seller,
                    valuation: tagged.clone(),
                });
            }
            let _ = to_buyer.send(Message::Valuation(tagged));
        }
        Err(e) => {
            let code = match e {
                Error::Session(_) => codes::SESSION,
                Error::ProtocolViolation(_) => codes::PROTOCOL_VIOLATION,
                _ => codes::BAD_PAYLOAD,
            };
            let reply = Message::error(code, format!("seller {seller}: {e}"));
            let _ = conn.send(&session, &reply);
            registry.abort(&session, reply);
        }
    }
}

/// Runs the buyer side: sends the query and the reveal, then collects one
/// valuation per expected seller (each tagged with the seller's name).
pub fn buyer_client(
    addr: impl ToSocketAddrs,
    query: &DirectionQuery,
    secret: &BuyerSecret,
    expected_sellers: usize,
    timeout: Duration,
) -> Result<Vec<ValuationPayload>> {
    let mut conn = Connection::connect(addr, timeout)?;
    let session = query.session_id.as_str();
    conn.send(
        session,
        &Message::Hello(HelloPayload { role: Role::Buyer, seller: None, sellers: Some(expected_sellers) }),
    )?;
    conn.send(session, &Message::Query(query.into()))?;
    conn.send(session, &Message::Reveal(RevealPayload::from(secret)))?;
    let mut out = Vec::with_capacity(expected_sellers);
    while out.len() < expected_sellers {
        match expect_message(&mut conn)? {
            (_, Message::Valuation(v)) => out.push(v),
            (_, other) => return Err(unexpected("VALUATION", &other)),
        }
    }
    Ok(out)
}

/// Runs the seller side: answers the broker's query from local data and
/// returns the valuation the broker computed.
pub fn seller_client(
    addr: impl ToSocketAddrs,
    session_id: &str,
    seller_id: &str,
    data: &DataMatrix,
    timeout: Duration,
) -> Result<ValuationPayload> {
    let mut conn = Connection::connect(addr, timeout)?;
    conn.send(
        session_id,
        &Message::Hello(HelloPayload { role: Role::Seller, seller: Some(seller_id.to_owned()), sellers: None }),
    )?;
    let query = match expect_message(&mut conn)? {
        (s, Message::Query(q)) => q.into_query(s)?,
        (_, other) => return Err(unexpected("QUERY", &other)),
    };
    let response = seller_respond(data, &query)?;
    conn.send(session_id, &Message::Variances(VariancesPayload::from(&response)))?;
    match expect_message(&mut conn)? {
        (_, Message::Valuation(v)) => Ok(v),
        (_, other) => Err(unexpected("VALUATION", &other)),
    }
}

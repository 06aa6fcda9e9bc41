//! Star-topology relay that fixes the total order of broadcasts.
//!
//! The relay checks signatures and sequence numbers but cannot forge
//! messages; it is trusted only to keep delivering. Every accepted envelope
//! and every lane digest goes to the bus log and is echoed to all clients.

use std::collections::{BTreeMap, HashMap};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use boardroom::protocol::{ElectionConfig, ProtocolMessage};
use boardroom::transport::{
    log_file_name, BusLog, EnvelopeVerifier, LaneEnvelope, LogEntry, LogWriter,
};
use boardroom::PartyId;

use crate::frame::{read_frame, write_frame, Frame};
use crate::NetError;

enum RelayEvent {
    Connected(u64, TcpStream),
    Frame(u64, Frame),
    Closed(u64),
}

struct Conn {
    stream: TcpStream,
    registered: bool,
    party: Option<PartyId>,
}

pub struct RelaySummary {
    pub log: BusLog,
    pub rejected: Vec<String>,
}

pub struct Relay {
    config: ElectionConfig,
    listener: TcpListener,
    log_writer: Option<LogWriter>,
    linger: Duration,
}

impl Relay {
    /// Binds the listener. With `log_dir`, the log is persisted there as it
    /// grows under a name derived from the election id.
    pub fn bind(addr: &str, config: ElectionConfig, log_dir: Option<&Path>) -> Result<Self, NetError> {
        if config.verification_keys.is_empty() {
            return Err(NetError::Config("the roster lists no verification keys".into()));
        }
        let listener = TcpListener::bind(addr)?;
        let log_writer = match log_dir {
            Some(dir) => Some(LogWriter::create(
                &dir.join(log_file_name(&config.election_id)),
                &config.election_id,
            )?),
            None => None,
        };
        Ok(Relay {
            config,
            listener,
            log_writer,
            linger: Duration::from_secs(2),
        })
    }

    pub fn with_linger(mut self, linger: Duration) -> Self {
        self.linger = linger;
        self
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener")
    }

    /// Serves until the election ends and every party has disconnected or
    /// the linger period ran out.
    pub fn run(mut self) -> Result<RelaySummary, NetError> {
        let (tx, rx) = mpsc::channel();
        let stop = Arc::new(AtomicBool::new(false));
        self.listener.set_nonblocking(true)?;
        let listener = self.listener.try_clone()?;
        let accept_stop = stop.clone();
        let acceptor = thread::spawn(move || accept_loop(listener, tx, accept_stop));
        let outcome = self.sequence(rx);
        stop.store(true, Ordering::SeqCst);
        let _ = acceptor.join();
        outcome
    }

    fn sequence(&mut self, rx: Receiver<RelayEvent>) -> Result<RelaySummary, NetError> {
        let mut verifier = EnvelopeVerifier::new(&self.config)?;
        let mut log = BusLog::new(&self.config.election_id);
        let mut conns: HashMap<u64, Conn> = HashMap::new();
        let mut pending_lane: BTreeMap<PartyId, Vec<LaneEnvelope>> = BTreeMap::new();
        let mut rejected = Vec::new();
        let mut finished_at: Option<Instant> = None;

        loop {
            if let Some(at) = finished_at {
                let parties_left = conns.values().any(|c| c.party.is_some());
                if !parties_left || at.elapsed() > self.linger {
                    return Ok(RelaySummary { log, rejected });
                }
            }
            let event = match rx.recv_timeout(Duration::from_millis(50)) {
                Ok(e) => e,
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => return Ok(RelaySummary { log, rejected }),
            };
            match event {
                RelayEvent::Connected(id, stream) => {
                    conns.insert(
                        id,
                        Conn {
                            stream,
                            registered: false,
                            party: None,
                        },
                    );
                }
                RelayEvent::Closed(id) => {
                    conns.remove(&id);
                }
                RelayEvent::Frame(id, frame) => {
                    let sender = conns.get(&id).map(|c| (c.registered, c.party));
                    let Some((registered, party)) = sender else { continue };
                    let reject = |conns: &mut HashMap<u64, Conn>, rejected: &mut Vec<String>, reason: String| {
                        eprintln!("relay: rejected from connection {id}: {reason}");
                        rejected.push(reason.clone());
                        if let Some(c) = conns.get_mut(&id) {
                            let _ = write_frame(&mut c.stream, &Frame::Reject { reason });
                        }
                    };
                    match frame {
                        Frame::Hello { election_id, party: claimed } => {
                            if registered {
                                reject(&mut conns, &mut rejected, "already registered".into());
                                continue;
                            }
                            if election_id != self.config.election_id {
                                reject(&mut conns, &mut rejected, format!("unknown election `{election_id}`"));
                                conns.remove(&id);
                                continue;
                            }
                            let mut as_party = None;
                            if let Some((p, sig)) = claimed {
                                if let Err(e) = verifier.check_hello(p, &sig) {
                                    reject(&mut conns, &mut rejected, e.to_string());
                                    conns.remove(&id);
                                    continue;
                                }
                                if conns.values().any(|c| c.party == Some(p)) {
                                    reject(&mut conns, &mut rejected, format!("{p} is already connected"));
                                    conns.remove(&id);
                                    continue;
                                }
                                as_party = Some(p);
                            }
                            let conn = conns.get_mut(&id).expect("present");
                            conn.registered = true;
                            conn.party = as_party;
                            let mut ok = true;
                            for (entry, digest) in log.entries().iter().zip(log.digests()) {
                                let frame = Frame::Logged {
                                    entry: entry.clone(),
                                    digest: *digest,
                                };
                                ok &= write_frame(&mut conn.stream, &frame).is_ok();
                            }
                            if let Some(p) = as_party {
                                for env in pending_lane.remove(&p).unwrap_or_default() {
                                    ok &= write_frame(&mut conn.stream, &Frame::Lane(env)).is_ok();
                                }
                            }
                            if !ok {
                                conns.remove(&id);
                            }
                        }
                        Frame::Broadcast(env) => {
                            if party != Some(env.sender) {
                                reject(&mut conns, &mut rejected, format!("envelope from {} on another party's connection", env.sender));
                                continue;
                            }
                            match verifier.accept(&env) {
                                Err(e) => reject(&mut conns, &mut rejected, e.to_string()),
                                Ok(message) => {
                                    if matches!(
                                        message,
                                        ProtocolMessage::UnmaskReveal { .. } | ProtocolMessage::Abort { .. }
                                    ) {
                                        finished_at.get_or_insert_with(Instant::now);
                                    }
                                    self.append(&mut log, &mut conns, LogEntry::Envelope(env))?;
                                }
                            }
                        }
                        Frame::Lane(env) => {
                            if party != Some(env.from) {
                                reject(&mut conns, &mut rejected, format!("lane message from {} on another party's connection", env.from));
                                continue;
                            }
                            if let Err(e) = verifier.check_lane(&env) {
                                reject(&mut conns, &mut rejected, e.to_string());
                                continue;
                            }
                            self.append(&mut log, &mut conns, LogEntry::Lane(env.record()))?;
                            let target = conns.iter_mut().find(|(_, c)| c.party == Some(env.to));
                            match target {
                                Some((&tid, c)) => {
                                    if write_frame(&mut c.stream, &Frame::Lane(env)).is_err() {
                                        conns.remove(&tid);
                                    }
                                }
                                None => pending_lane.entry(env.to).or_default().push(env),
                            }
                        }
                        Frame::Logged { .. } | Frame::Reject { .. } => {
                            reject(&mut conns, &mut rejected, "clients may not send relay frames".into());
                        }
                    }
                }
            }
        }
    }

    fn append(&mut self, log: &mut BusLog, conns: &mut HashMap<u64, Conn>, entry: LogEntry) -> Result<(), NetError> {
        let digest = log.append(entry.clone());
        if let Some(w) = self.log_writer.as_mut() {
            w.append(&entry, &digest)?;
        }
        let frame = Frame::Logged { entry, digest };
        let mut dead = Vec::new();
        for (id, c) in conns.iter_mut().filter(|(_, c)| c.registered) {
            if write_frame(&mut c.stream, &frame).is_err() {
                dead.push(*id);
            }
        }
        for id in dead {
            conns.remove(&id);
        }
        Ok(())
    }
}

fn accept_loop(listener: TcpListener, tx: Sender<RelayEvent>, stop: Arc<AtomicBool>) {
    let mut next_id = 0u64;
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let _ = stream.set_nonblocking(false);
                let _ = stream.set_nodelay(true);
                let Ok(reader) = stream.try_clone() else { continue };
                let id = next_id;
                next_id += 1;
                if tx.send(RelayEvent::Connected(id, stream)).is_err() {
                    return;
                }
                let tx = tx.clone();
                thread::spawn(move || read_loop(id, reader, tx));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(10));
            }
            Err(_) => thread::sleep(Duration::from_millis(10)),
        }
    }
}

fn read_loop(id: u64, mut stream: TcpStream, tx: Sender<RelayEvent>) {
    loop {
        match read_frame(&mut stream) {
            Ok(Some(frame)) => {
                if tx.send(RelayEvent::Frame(id, frame)).is_err() {
                    return;
                }
            }
            Ok(None) | Err(_) => {
                let _ = tx.send(RelayEvent::Closed(id));
                return;
            }
        }
    }
}

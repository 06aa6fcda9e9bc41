//! A live party (or observer) connected to the relay.

use std::net::TcpStream;
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use ed25519_dalek::SigningKey;

use boardroom::audit::audit;
use boardroom::protocol::{
    message_digest, Counters, ElectionConfig, ElectionResult, Input, Misbehavior, Output, Party,
    PartyEvent, PartySeed, Phase, ProtocolMessage,
};
use boardroom::transport::{replay, BusLog, EnvelopeSigner, EnvelopeVerifier, LogEntry, ReplayError};
use boardroom::PartyId;

use crate::frame::{read_frame, write_frame, Frame};
use crate::ui::{UiCommand, UiEvent, UiLane};
use crate::NetError;

pub enum NodeRole {
    Party {
        id: PartyId,
        key: SigningKey,
        seed: PartySeed,
    },
    Observer,
}

pub struct NodeOptions {
    pub config: ElectionConfig,
    pub role: NodeRole,
    pub relay: String,
    /// Scripted choice; otherwise the node waits for a `cast` command.
    pub choice: Option<usize>,
    pub misbehavior: Vec<Misbehavior>,
    pub ui: Option<(UiLane, mpsc::Receiver<UiCommand>)>,
    pub connect_timeout: Duration,
    /// Silence after which the current round is declared timed out.
    pub round_timeout: Duration,
}

impl NodeOptions {
    pub fn new(config: ElectionConfig, role: NodeRole, relay: &str) -> Self {
        let round_timeout = config.round_timeout.unwrap_or(Duration::from_secs(120));
        NodeOptions {
            config,
            role,
            relay: relay.to_string(),
            choice: None,
            misbehavior: Vec::new(),
            ui: None,
            connect_timeout: Duration::from_secs(10),
            round_timeout,
        }
    }
}

pub struct NodeReport {
    pub party: Option<PartyId>,
    pub phase: Option<Phase>,
    pub log: BusLog,
    pub result: Result<ElectionResult, ReplayError>,
    pub events: Vec<PartyEvent>,
    pub counters: Option<Counters>,
    pub vote_digest: Option<String>,
}

enum NodeInput {
    Frame(Frame),
    Command(UiCommand),
    Closed,
}

fn connect(addr: &str, within: Duration) -> Result<TcpStream, NetError> {
    let start = Instant::now();
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => {
                s.set_nodelay(true)?;
                return Ok(s);
            }
            Err(e) if start.elapsed() < within => {
                let _ = e;
                thread::sleep(Duration::from_millis(100));
            }
            Err(e) => return Err(NetError::Unreachable(format!("{addr}: {e}"))),
        }
    }
}

fn is_terminal(entry: &LogEntry, config: &ElectionConfig) -> bool {
    match entry {
        LogEntry::Envelope(env) => matches!(
            ProtocolMessage::decode(&env.payload, &config.params),
            Ok(ProtocolMessage::UnmaskReveal { .. } | ProtocolMessage::Abort { .. })
        ),
        LogEntry::Lane(_) => false,
    }
}

struct Runner {
    config: ElectionConfig,
    party: Option<Party>,
    signer: Option<EnvelopeSigner>,
    verifier: EnvelopeVerifier,
    log: BusLog,
    stream: TcpStream,
    ui: Option<UiLane>,
    events: Vec<PartyEvent>,
    vote_digest: Option<String>,
    terminal_seen: bool,
}

impl Runner {
    fn emit_ui<T: serde::Serialize>(&self, event: &T) {
        if let Some(ui) = &self.ui {
            ui.emit(event);
        }
    }

    fn feed(&mut self, input: Input) -> Result<(), NetError> {
        let Some(party) = self.party.as_mut() else { return Ok(()) };
        let outputs = party.handle(input);
        let signer = self.signer.as_mut().expect("parties sign");
        for o in outputs {
            match o {
                Output::Broadcast(message) => {
                    if let ProtocolMessage::EncryptedVote { .. } = &message {
                        self.vote_digest = Some(hex::encode(message_digest(&message)));
                    }
                    write_frame(&mut self.stream, &Frame::Broadcast(signer.seal(&message)))?;
                }
                Output::Lane {
                    to,
                    session,
                    phase,
                    bytes,
                } => {
                    let env = signer.seal_lane(to, session, phase, bytes);
                    write_frame(&mut self.stream, &Frame::Lane(env))?;
                }
                Output::Event(e) => {
                    if let Some(ui) = &self.ui {
                        ui.emit(&e);
                    }
                    self.events.push(e);
                }
            }
        }
        Ok(())
    }

    fn on_frame(&mut self, frame: Frame) -> Result<(), NetError> {
        match frame {
            Frame::Logged { entry, digest } => {
                let local = self.log.append(entry.clone());
                if local != digest {
                    return Err(NetError::Protocol(format!(
                        "relay digest diverges at entry {}",
                        self.log.len() - 1
                    )));
                }
                self.terminal_seen |= is_terminal(&entry, &self.config);
                if let LogEntry::Envelope(env) = entry {
                    let message = self.verifier.accept(&env)?;
                    self.emit_ui(&UiEvent::Envelope {
                        round: env.round,
                        sender: env.sender,
                        kind: message.kind(),
                        digest: hex::encode(message_digest(&message)),
                    });
                    self.feed(Input::Deliver {
                        sender: env.sender,
                        round: env.round,
                        message,
                    })?;
                }
            }
            Frame::Lane(env) => {
                self.verifier.check_lane(&env)?;
                let me = self.party.as_ref().map(Party::id);
                if me == Some(env.to) {
                    self.feed(Input::Lane {
                        from: env.from,
                        bytes: env.bytes,
                    })?;
                }
            }
            Frame::Reject { reason } => {
                eprintln!("relay rejected a message: {reason}");
                self.emit_ui(&UiEvent::Error { reason });
            }
            Frame::Hello { .. } | Frame::Broadcast(_) => {
                return Err(NetError::Protocol("relay sent a client frame".into()));
            }
        }
        Ok(())
    }

    fn on_command(&mut self, cmd: UiCommand) -> Result<(), NetError> {
        match cmd {
            UiCommand::Cast { candidate } => {
                let phase = self.party.as_ref().map(Party::phase);
                if !matches!(phase, Some(p) if p <= Phase::Selecting) {
                    self.emit_ui(&UiEvent::Error {
                        reason: "voting is closed for this panel".into(),
                    });
                    return Ok(());
                }
                match candidate.resolve(&self.config.candidates) {
                    Some(i) => self.feed(Input::Choose(i)),
                    None => {
                        self.emit_ui(&UiEvent::Error {
                            reason: "unknown candidate".into(),
                        });
                        Ok(())
                    }
                }
            }
            UiCommand::Allege { claim } => {
                if self.party.is_none() {
                    self.emit_ui(&UiEvent::Error {
                        reason: "observers cannot allege".into(),
                    });
                    return Ok(());
                }
                self.feed(Input::Allege(claim))
            }
        }
    }

    fn finished(&self) -> bool {
        match &self.party {
            Some(p) => match p.phase() {
                Phase::Done => true,
                Phase::Aborted => self.terminal_seen,
                _ => false,
            },
            None => self.terminal_seen,
        }
    }
}

/// Runs one node to completion and tallies its copy of the log.
pub fn run_node(options: NodeOptions) -> Result<NodeReport, NetError> {
    let NodeOptions {
        config,
        role,
        relay,
        choice,
        misbehavior,
        ui,
        connect_timeout,
        round_timeout,
    } = options;
    let verifier = EnvelopeVerifier::new(&config)?;
    let (party, signer) = match role {
        NodeRole::Party { id, key, seed } => {
            let signer = EnvelopeSigner::new(&config.election_id, id, key);
            if config.verification_keys.get(&id) != Some(&signer.verifying_key()) {
                return Err(NetError::Config(format!("signing key does not match the roster entry of {id}")));
            }
            let mut party = Party::new(config.clone(), id, seed)?;
            for m in misbehavior {
                party.misbehave(m);
            }
            (Some(party), Some(signer))
        }
        NodeRole::Observer => (None, None),
    };

    let mut stream = connect(&relay, connect_timeout)?;
    let hello = Frame::Hello {
        election_id: config.election_id.clone(),
        party: signer.as_ref().map(|s| (party.as_ref().unwrap().id(), s.hello_signature())),
    };
    write_frame(&mut stream, &hello)?;

    let (tx, rx) = mpsc::channel::<NodeInput>();
    let mut reader = stream.try_clone()?;
    let frame_tx = tx.clone();
    thread::spawn(move || loop {
        match read_frame(&mut reader) {
            Ok(Some(f)) => {
                if frame_tx.send(NodeInput::Frame(f)).is_err() {
                    return;
                }
            }
            _ => {
                let _ = frame_tx.send(NodeInput::Closed);
                return;
            }
        }
    });
    let ui_lane = match ui {
        Some((lane, commands)) => {
            forward_commands(commands, tx.clone());
            Some(lane)
        }
        None => None,
    };
    drop(tx);

    let mut runner = Runner {
        log: BusLog::new(&config.election_id),
        config,
        party,
        signer,
        verifier,
        stream,
        ui: ui_lane,
        events: Vec::new(),
        vote_digest: None,
        terminal_seen: false,
    };
    runner.emit_ui(&UiEvent::Hello {
        election_id: runner.config.election_id.clone(),
        party: runner.party.as_ref().map(Party::id),
        role: if runner.party.is_some() { "voter" } else { "observer" },
        candidates: runner.config.candidates.clone(),
        phase: runner.party.as_ref().map(Party::phase),
    });
    runner.feed(Input::Start)?;
    if let Some(c) = choice {
        runner.feed(Input::Choose(c))?;
    }

    let mut last_progress = Instant::now();
    let mut aborted_at: Option<Instant> = None;
    while !runner.finished() {
        if let Some(at) = aborted_at {
            // Our own abort should echo back promptly; stop waiting if not.
            if at.elapsed() > Duration::from_secs(3) {
                break;
            }
        }
        match rx.recv_timeout(Duration::from_millis(100)) {
            Ok(NodeInput::Frame(f)) => {
                runner.on_frame(f)?;
                last_progress = Instant::now();
            }
            Ok(NodeInput::Command(c)) => runner.on_command(c)?,
            Ok(NodeInput::Closed) | Err(RecvTimeoutError::Disconnected) => {
                if runner.finished() {
                    break;
                }
                return Err(NetError::RelayClosed);
            }
            Err(RecvTimeoutError::Timeout) => {
                if last_progress.elapsed() > round_timeout {
                    runner.feed(Input::Timeout)?;
                    last_progress = Instant::now();
                }
            }
        }
        if aborted_at.is_none() && runner.party.as_ref().map(Party::phase) == Some(Phase::Aborted) {
            aborted_at = Some(Instant::now());
        }
    }

    let result = replay(&runner.config, &runner.log);
    match &result {
        Ok(r) => runner.emit_ui(&UiEvent::result(r)),
        Err(e) => runner.emit_ui(&UiEvent::Failed { reason: e.to_string() }),
    }
    let report = audit(&runner.config, &runner.log);
    runner.emit_ui(&UiEvent::Audit {
        ok: report.ok,
        checks: report.checks,
    });
    Ok(NodeReport {
        party: runner.party.as_ref().map(Party::id),
        phase: runner.party.as_ref().map(Party::phase),
        counters: runner.party.as_ref().map(|p| p.counters().clone()),
        log: runner.log,
        result,
        events: runner.events,
        vote_digest: runner.vote_digest,
    })
}

fn forward_commands(commands: mpsc::Receiver<UiCommand>, tx: Sender<NodeInput>) {
    thread::spawn(move || {
        for c in commands {
            if tx.send(NodeInput::Command(c)).is_err() {
                return;
            }
        }
    });
}

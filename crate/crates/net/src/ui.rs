//! WebSocket lane between a local node and its browser panel.
//!
//! The node pushes JSON events, one per text message; late clients first
//! receive the full history. The panel sends `cast` and `allege` commands.
//! No key material ever crosses this lane.

use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use boardroom::audit::AuditCheck;
use boardroom::protocol::{ElectionResult, Phase, ResultStatus};
use boardroom::PartyId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum UiEvent {
    Hello {
        election_id: String,
        party: Option<PartyId>,
        role: &'static str,
        candidates: Vec<String>,
        phase: Option<Phase>,
    },
    Envelope {
        round: u8,
        sender: PartyId,
        kind: &'static str,
        digest: String,
    },
    Result {
        status: ResultStatus,
        candidates: Vec<String>,
        totals: Option<Vec<u64>>,
        formatted: Option<String>,
        transcript_digest: String,
    },
    Failed {
        reason: String,
    },
    Audit {
        ok: bool,
        checks: Vec<AuditCheck>,
    },
    Error {
        reason: String,
    },
}

impl UiEvent {
    pub fn result(r: &ElectionResult) -> Self {
        UiEvent::Result {
            status: r.status,
            candidates: r.candidates.clone(),
            totals: r.totals.clone(),
            formatted: r.formatted_totals(),
            transcript_digest: r.transcript_digest.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum CandidateRef {
    Index(usize),
    Label(String),
}

impl CandidateRef {
    pub fn resolve(&self, candidates: &[String]) -> Option<usize> {
        match self {
            CandidateRef::Index(i) => (*i < candidates.len()).then_some(*i),
            CandidateRef::Label(l) => candidates.iter().position(|c| c == l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum UiCommand {
    Cast { candidate: CandidateRef },
    Allege { claim: String },
}

#[derive(Default)]
struct Hub {
    history: Vec<String>,
    clients: Vec<Sender<String>>,
}

#[derive(Clone)]
pub struct UiLane {
    hub: Arc<Mutex<Hub>>,
    addr: SocketAddr,
}

impl UiLane {
    /// Starts serving on `addr`. Commands from any panel arrive on the
    /// returned receiver.
    pub fn bind(addr: &str) -> io::Result<(UiLane, Receiver<UiCommand>)> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let hub = Arc::new(Mutex::new(Hub::default()));
        let (tx, rx) = mpsc::channel();
        let accept_hub = hub.clone();
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let hub = accept_hub.clone();
                let tx = tx.clone();
                thread::spawn(move || serve(stream, hub, tx));
            }
        });
        Ok((UiLane { hub, addr }, rx))
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn emit<T: Serialize>(&self, event: &T) {
        let text = serde_json::to_string(event).expect("events serialize");
        let mut hub = self.hub.lock().expect("hub lock");
        hub.history.push(text.clone());
        hub.clients.retain(|c| c.send(text.clone()).is_ok());
    }

    pub fn history(&self) -> Vec<String> {
        self.hub.lock().expect("hub lock").history.clone()
    }
}

fn serve(stream: TcpStream, hub: Arc<Mutex<Hub>>, commands: Sender<UiCommand>) {
    let Ok(mut ws) = tungstenite::accept(stream) else { return };
    let _ = ws
        .get_ref()
        .set_read_timeout(Some(Duration::from_millis(25)));
    let (tx, rx) = mpsc::channel();
    let backlog = {
        let mut h = hub.lock().expect("hub lock");
        h.clients.push(tx);
        h.history.clone()
    };
    for text in backlog {
        if ws.send(Message::text(text)).is_err() {
            return;
        }
    }
    loop {
        loop {
            match rx.try_recv() {
                Ok(text) => {
                    if ws.send(Message::text(text)).is_err() {
                        return;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return,
            }
        }
        match ws.read() {
            Ok(Message::Text(text)) => match serde_json::from_str::<UiCommand>(&text) {
                Ok(cmd) => {
                    if commands.send(cmd).is_err() {
                        return;
                    }
                }
                Err(e) => reply_error(&mut ws, format!("unreadable command: {e}")),
            },
            Ok(Message::Close(_)) => return,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(_) => return,
        }
    }
}

fn reply_error(ws: &mut WebSocket<TcpStream>, reason: String) {
    let text = serde_json::to_string(&UiEvent::Error { reason }).expect("events serialize");
    let _ = ws.send(Message::text(text));
}

//! Signed envelopes and the append-only bus log.
//!
//! Every broadcast travels as an [`AuthenticatedEnvelope`] signed with the
//! sender's Ed25519 key. The log keeps accepted envelopes and digests of OT
//! lane messages, chained so that `d_0 = H(tag || election_id)` and
//! `d_i = H(d_{i-1} || entry_i)`.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ed25519_dalek::{Signature, Signer as _, SigningKey, Verifier as _, VerifyingKey};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::protocol::{
    finalize, ElectionConfig, ElectionResult, FinalizeError, LaneRecord, Posted, ProtocolMessage,
    Transcript,
};
use crate::PartyId;

const LOG_MAGIC: &[u8; 8] = b"BRDLOG01";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("envelope for election `{0}`")]
    WrongElection(String),
    #[error("no verification key for {0}")]
    UnknownSender(PartyId),
    #[error("bad signature from {0}")]
    BadSignature(PartyId),
    #[error("replayed sequence number {seq} from {sender}")]
    Replay { sender: PartyId, seq: u64 },
    #[error("round tag {tagged} does not match {kind}")]
    RoundMismatch { tagged: u8, kind: &'static str },
    #[error("undecodable payload: {0}")]
    Decode(String),
    #[error("digest chain broken at entry {0}")]
    ChainBroken(usize),
    #[error("log format: {0}")]
    Format(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<CodecError> for TransportError {
    fn from(e: CodecError) -> Self {
        TransportError::Format(e.to_string())
    }
}

impl From<std::io::Error> for TransportError {
    fn from(e: std::io::Error) -> Self {
        TransportError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthenticatedEnvelope {
    pub election_id: String,
    pub sender: PartyId,
    pub seq: u64,
    pub round: u8,
    pub payload: Vec<u8>,
    pub signature: [u8; 64],
}

fn signed_bytes(election_id: &str, sender: PartyId, seq: u64, round: u8, payload: &[u8]) -> Vec<u8> {
    let mut w = Writer::new();
    w.str("boardroom/envelope/v1")
        .str(election_id)
        .u32(sender.0)
        .u64(seq)
        .u8(round)
        .bytes(payload);
    w.finish()
}

impl AuthenticatedEnvelope {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.election_id)
            .u32(self.sender.0)
            .u64(self.seq)
            .u8(self.round)
            .bytes(&self.payload)
            .fixed(&self.signature);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let env = Self::read(&mut r)?;
        r.finish()?;
        Ok(env)
    }

    fn read(r: &mut Reader) -> Result<Self, CodecError> {
        Ok(AuthenticatedEnvelope {
            election_id: r.string()?,
            sender: PartyId(r.u32()?),
            seq: r.u64()?,
            round: r.u8()?,
            payload: r.bytes()?.to_vec(),
            signature: r.fixed()?,
        })
    }

    pub fn payload_digest(&self) -> [u8; 32] {
        Sha256::digest(&self.payload).into()
    }
}

/// Derives a party's signing key from a simulation seed.
pub fn simulation_signing_key(master: u64, party: PartyId) -> SigningKey {
    let mut h = Sha256::new();
    h.update(b"boardroom/sim/signing");
    h.update(master.to_be_bytes());
    h.update(party.0.to_be_bytes());
    SigningKey::from_bytes(&h.finalize().into())
}

/// Signs a party's outgoing broadcasts with increasing sequence numbers.
pub struct EnvelopeSigner {
    election_id: String,
    sender: PartyId,
    key: SigningKey,
    next_seq: u64,
}

impl EnvelopeSigner {
    pub fn new(election_id: &str, sender: PartyId, key: SigningKey) -> Self {
        EnvelopeSigner {
            election_id: election_id.to_string(),
            sender,
            key,
            next_seq: 1,
        }
    }

    pub fn verifying_key(&self) -> [u8; 32] {
        self.key.verifying_key().to_bytes()
    }

    pub fn seal(&mut self, message: &ProtocolMessage) -> AuthenticatedEnvelope {
        let seq = self.next_seq;
        self.next_seq += 1;
        let payload = message.encode();
        let round = message.round();
        let signature = self
            .key
            .sign(&signed_bytes(&self.election_id, self.sender, seq, round, &payload))
            .to_bytes();
        AuthenticatedEnvelope {
            election_id: self.election_id.clone(),
            sender: self.sender,
            seq,
            round,
            payload,
            signature,
        }
    }

    pub fn seal_lane(&self, to: PartyId, session: u64, phase: &str, bytes: Vec<u8>) -> LaneEnvelope {
        let mut env = LaneEnvelope {
            election_id: self.election_id.clone(),
            from: self.sender,
            to,
            session,
            phase: phase.to_string(),
            bytes,
            signature: [0; 64],
        };
        env.signature = self.key.sign(&lane_signed_bytes(&env)).to_bytes();
        env
    }

    /// Signature over a relay registration.
    pub fn hello_signature(&self) -> [u8; 64] {
        self.key.sign(&hello_bytes(&self.election_id, self.sender)).to_bytes()
    }
}

fn hello_bytes(election_id: &str, party: PartyId) -> Vec<u8> {
    let mut w = Writer::new();
    w.str("boardroom/hello/v1").str(election_id).u32(party.0);
    w.finish()
}

/// A point-to-point OT message, signed by its sender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaneEnvelope {
    pub election_id: String,
    pub from: PartyId,
    pub to: PartyId,
    pub session: u64,
    pub phase: String,
    pub bytes: Vec<u8>,
    pub signature: [u8; 64],
}

fn lane_signed_bytes(l: &LaneEnvelope) -> Vec<u8> {
    let mut w = Writer::new();
    w.str("boardroom/lane/v1")
        .str(&l.election_id)
        .u32(l.from.0)
        .u32(l.to.0)
        .u64(l.session)
        .str(&l.phase)
        .bytes(&l.bytes);
    w.finish()
}

impl LaneEnvelope {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str(&self.election_id)
            .u32(self.from.0)
            .u32(self.to.0)
            .u64(self.session)
            .str(&self.phase)
            .bytes(&self.bytes)
            .fixed(&self.signature);
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let env = LaneEnvelope {
            election_id: r.string()?,
            from: PartyId(r.u32()?),
            to: PartyId(r.u32()?),
            session: r.u64()?,
            phase: r.string()?,
            bytes: r.bytes()?.to_vec(),
            signature: r.fixed()?,
        };
        r.finish()?;
        Ok(env)
    }

    pub fn record(&self) -> LaneRecord {
        lane_record(self.from, self.to, self.session, &self.phase, &self.bytes)
    }
}

/// Checks envelopes against the roster and per-sender sequence numbers.
pub struct EnvelopeVerifier {
    config: ElectionConfig,
    keys: BTreeMap<PartyId, VerifyingKey>,
    last_seq: BTreeMap<PartyId, u64>,
}

impl EnvelopeVerifier {
    pub fn new(config: &ElectionConfig) -> Result<Self, TransportError> {
        let keys = config
            .verification_keys
            .iter()
            .map(|(id, bytes)| {
                VerifyingKey::from_bytes(bytes)
                    .map(|k| (*id, k))
                    .map_err(|_| TransportError::Format(format!("verification key of {id}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(EnvelopeVerifier {
            config: config.clone(),
            keys,
            last_seq: BTreeMap::new(),
        })
    }

    /// Verifies without recording the sequence number.
    pub fn check(&self, env: &AuthenticatedEnvelope) -> Result<ProtocolMessage, TransportError> {
        if env.election_id != self.config.election_id {
            return Err(TransportError::WrongElection(env.election_id.clone()));
        }
        let key = self
            .keys
            .get(&env.sender)
            .ok_or(TransportError::UnknownSender(env.sender))?;
        let bytes = signed_bytes(&env.election_id, env.sender, env.seq, env.round, &env.payload);
        key.verify(&bytes, &Signature::from_bytes(&env.signature))
            .map_err(|_| TransportError::BadSignature(env.sender))?;
        if let Some(&last) = self.last_seq.get(&env.sender) {
            if env.seq <= last {
                return Err(TransportError::Replay {
                    sender: env.sender,
                    seq: env.seq,
                });
            }
        }
        let message = ProtocolMessage::decode(&env.payload, &self.config.params)
            .map_err(|e| TransportError::Decode(e.to_string()))?;
        if message.round() != env.round {
            return Err(TransportError::RoundMismatch {
                tagged: env.round,
                kind: message.kind(),
            });
        }
        Ok(message)
    }

    fn key(&self, party: PartyId) -> Result<&VerifyingKey, TransportError> {
        self.keys.get(&party).ok_or(TransportError::UnknownSender(party))
    }

    pub fn check_lane(&self, env: &LaneEnvelope) -> Result<(), TransportError> {
        if env.election_id != self.config.election_id {
            return Err(TransportError::WrongElection(env.election_id.clone()));
        }
        if !self.config.is_participant(env.to) {
            return Err(TransportError::UnknownSender(env.to));
        }
        self.key(env.from)?
            .verify(&lane_signed_bytes(env), &Signature::from_bytes(&env.signature))
            .map_err(|_| TransportError::BadSignature(env.from))
    }

    pub fn check_hello(&self, party: PartyId, signature: &[u8; 64]) -> Result<(), TransportError> {
        self.key(party)?
            .verify(
                &hello_bytes(&self.config.election_id, party),
                &Signature::from_bytes(signature),
            )
            .map_err(|_| TransportError::BadSignature(party))
    }

    /// Verifies and advances the sender's sequence number.
    pub fn accept(&mut self, env: &AuthenticatedEnvelope) -> Result<ProtocolMessage, TransportError> {
        let message = self.check(env)?;
        self.last_seq.insert(env.sender, env.seq);
        Ok(message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogEntry {
    Envelope(AuthenticatedEnvelope),
    Lane(LaneRecord),
}

const ENTRY_ENVELOPE: u8 = 1;
const ENTRY_LANE: u8 = 2;

impl LogEntry {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            LogEntry::Envelope(env) => {
                w.u8(ENTRY_ENVELOPE).bytes(&env.encode());
            }
            LogEntry::Lane(l) => {
                w.u8(ENTRY_LANE)
                    .u32(l.from.0)
                    .u32(l.to.0)
                    .u64(l.session)
                    .str(&l.phase)
                    .fixed(&l.digest);
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let entry = match r.u8()? {
            ENTRY_ENVELOPE => LogEntry::Envelope(AuthenticatedEnvelope::decode(r.bytes()?)?),
            ENTRY_LANE => LogEntry::Lane(LaneRecord {
                from: PartyId(r.u32()?),
                to: PartyId(r.u32()?),
                session: r.u64()?,
                phase: r.string()?,
                digest: r.fixed()?,
            }),
            t => return Err(CodecError::UnknownTag(t)),
        };
        r.finish()?;
        Ok(entry)
    }
}

pub fn lane_record(from: PartyId, to: PartyId, session: u64, phase: &str, bytes: &[u8]) -> LaneRecord {
    LaneRecord {
        from,
        to,
        session,
        phase: phase.to_string(),
        digest: Sha256::digest(bytes).into(),
    }
}

pub fn genesis_digest(election_id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"boardroom/buslog/v1");
    h.update(election_id.as_bytes());
    h.finalize().into()
}

fn chain(prev: &[u8; 32], entry: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(prev);
    h.update(entry);
    h.finalize().into()
}

/// File name a log is persisted under.
pub fn log_file_name(election_id: &str) -> String {
    let safe: String = election_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}.buslog")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusLog {
    election_id: String,
    entries: Vec<LogEntry>,
    digests: Vec<[u8; 32]>,
}

impl BusLog {
    pub fn new(election_id: &str) -> Self {
        BusLog {
            election_id: election_id.to_string(),
            entries: Vec::new(),
            digests: Vec::new(),
        }
    }

    pub fn election_id(&self) -> &str {
        &self.election_id
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn digests(&self) -> &[[u8; 32]] {
        &self.digests
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn head(&self) -> [u8; 32] {
        self.digests
            .last()
            .copied()
            .unwrap_or_else(|| genesis_digest(&self.election_id))
    }

    pub fn append(&mut self, entry: LogEntry) -> [u8; 32] {
        let digest = chain(&self.head(), &entry.encode());
        self.entries.push(entry);
        self.digests.push(digest);
        digest
    }

    /// Recomputes every link of the digest chain.
    pub fn verify_chain(&self) -> Result<(), TransportError> {
        let mut prev = genesis_digest(&self.election_id);
        for (i, (entry, digest)) in self.entries.iter().zip(&self.digests).enumerate() {
            prev = chain(&prev, &entry.encode());
            if &prev != digest {
                return Err(TransportError::ChainBroken(i));
            }
        }
        if self.entries.len() != self.digests.len() {
            return Err(TransportError::ChainBroken(self.digests.len().min(self.entries.len())));
        }
        Ok(())
    }

    /// Drops everything after the first `len` entries.
    pub fn truncate(&mut self, len: usize) {
        self.entries.truncate(len);
        self.digests.truncate(len);
    }

    /// Overwrites a stored digest; only useful for tamper tests.
    pub fn corrupt_digest(&mut self, index: usize) {
        self.digests[index][0] ^= 1;
    }

    pub fn header_bytes(election_id: &str) -> Vec<u8> {
        let mut w = Writer::new();
        w.fixed(LOG_MAGIC).str(election_id);
        w.finish()
    }

    pub fn record_bytes(entry: &LogEntry, digest: &[u8; 32]) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(&entry.encode()).fixed(digest);
        w.finish()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Self::header_bytes(&self.election_id);
        for (entry, digest) in self.entries.iter().zip(&self.digests) {
            out.extend(Self::record_bytes(entry, digest));
        }
        out
    }

    /// Parses a persisted log and verifies its chain.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TransportError> {
        let mut r = Reader::new(bytes);
        if &r.fixed::<8>()? != LOG_MAGIC {
            return Err(TransportError::Format("not a bus log".into()));
        }
        let mut log = BusLog::new(&r.string()?);
        while r.remaining() > 0 {
            let entry = LogEntry::decode(r.bytes()?)?;
            let digest = r.fixed::<32>()?;
            log.entries.push(entry);
            log.digests.push(digest);
        }
        log.verify_chain()?;
        Ok(log)
    }

    pub fn save(&self, path: &Path) -> Result<(), TransportError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TransportError> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// Re-verifies every envelope and extracts the public transcript.
    pub fn transcript(&self, config: &ElectionConfig) -> Result<Transcript, TransportError> {
        if self.election_id != config.election_id {
            return Err(TransportError::WrongElection(self.election_id.clone()));
        }
        self.verify_chain()?;
        let mut verifier = EnvelopeVerifier::new(config)?;
        let mut transcript = Transcript::default();
        for entry in &self.entries {
            match entry {
                LogEntry::Envelope(env) => {
                    let message = verifier.accept(env)?;
                    transcript.posted.push(Posted {
                        sender: env.sender,
                        round: env.round,
                        seq: env.seq,
                        message,
                    });
                }
                LogEntry::Lane(l) => transcript.lane.push(l.clone()),
            }
        }
        Ok(transcript)
    }
}

/// Append-only persistence of a log as it grows.
pub struct LogWriter {
    file: File,
    path: PathBuf,
}

impl LogWriter {
    pub fn create(path: &Path, election_id: &str) -> Result<Self, TransportError> {
        let mut file = OpenOptions::new().write(true).create(true).truncate(true).open(path)?;
        file.write_all(&BusLog::header_bytes(election_id))?;
        file.flush()?;
        Ok(LogWriter {
            file,
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, entry: &LogEntry, digest: &[u8; 32]) -> Result<(), TransportError> {
        self.file.write_all(&BusLog::record_bytes(entry, digest))?;
        self.file.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Finalize(#[from] FinalizeError),
}

/// Tallies an election from its log alone.
pub fn replay(config: &ElectionConfig, log: &BusLog) -> Result<ElectionResult, ReplayError> {
    let transcript = log.transcript(config)?;
    Ok(finalize(config, &transcript)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ElectionConfig, EnvelopeSigner) {
        let mut config = ElectionConfig::new("log-test", 2, &["a", "b"], 2);
        let signer = EnvelopeSigner::new("log-test", PartyId(0), simulation_signing_key(1, PartyId(0)));
        config.verification_keys.insert(PartyId(0), signer.verifying_key());
        let other = simulation_signing_key(1, PartyId(1));
        config
            .verification_keys
            .insert(PartyId(1), other.verifying_key().to_bytes());
        (config, signer)
    }

    fn message(config: &ElectionConfig) -> ProtocolMessage {
        ProtocolMessage::PublicKeyShare {
            value: config.params.element_from_u64(16).unwrap(),
        }
    }

    #[test]
    fn sign_verify_and_replay_protection() {
        let (config, mut signer) = setup();
        let mut verifier = EnvelopeVerifier::new(&config).unwrap();
        let env = signer.seal(&message(&config));
        assert_eq!(verifier.accept(&env).unwrap(), message(&config));
        assert_eq!(
            verifier.accept(&env),
            Err(TransportError::Replay {
                sender: PartyId(0),
                seq: 1
            })
        );
        let mut tampered = signer.seal(&message(&config));
        tampered.payload[3] ^= 1;
        assert_eq!(verifier.accept(&tampered), Err(TransportError::BadSignature(PartyId(0))));
        let mut spoofed = signer.seal(&message(&config));
        spoofed.sender = PartyId(1);
        assert_eq!(verifier.accept(&spoofed), Err(TransportError::BadSignature(PartyId(1))));
        let mut wrong_round = signer.seal(&message(&config));
        wrong_round.round = 2;
        assert!(verifier.check(&wrong_round).is_err());
    }

    #[test]
    fn lane_envelopes() {
        let (config, signer) = setup();
        let verifier = EnvelopeVerifier::new(&config).unwrap();
        let env = signer.seal_lane(PartyId(1), 1, "offer", b"abc".to_vec());
        assert_eq!(LaneEnvelope::decode(&env.encode()).unwrap(), env);
        verifier.check_lane(&env).unwrap();
        assert_eq!(env.record().digest, <[u8; 32]>::from(Sha256::digest(b"abc")));
        let mut bad = env.clone();
        bad.bytes[0] ^= 1;
        assert_eq!(verifier.check_lane(&bad), Err(TransportError::BadSignature(PartyId(0))));
        verifier.check_hello(PartyId(0), &signer.hello_signature()).unwrap();
        assert!(verifier.check_hello(PartyId(1), &signer.hello_signature()).is_err());
    }

    #[test]
    fn envelope_codec() {
        let (config, mut signer) = setup();
        let env = signer.seal(&message(&config));
        assert_eq!(AuthenticatedEnvelope::decode(&env.encode()).unwrap(), env);
    }

    #[test]
    fn chain_persist_and_corruption() {
        let (config, mut signer) = setup();
        let mut log = BusLog::new("log-test");
        log.append(LogEntry::Envelope(signer.seal(&message(&config))));
        log.append(LogEntry::Lane(lane_record(PartyId(0), PartyId(1), 1, "offer", b"xyz")));
        log.append(LogEntry::Envelope(signer.seal(&message(&config))));
        log.verify_chain().unwrap();
        let restored = BusLog::from_bytes(&log.to_bytes()).unwrap();
        assert_eq!(restored, log);

        let mut bad = log.clone();
        bad.corrupt_digest(1);
        assert_eq!(bad.verify_chain(), Err(TransportError::ChainBroken(1)));
        assert!(BusLog::from_bytes(&bad.to_bytes()).is_err());
    }

    #[test]
    fn writer_matches_in_memory_log() {
        let (config, mut signer) = setup();
        let dir = std::env::temp_dir().join(format!("boardroom-log-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(log_file_name("log-test"));
        let mut writer = LogWriter::create(&path, "log-test").unwrap();
        let mut log = BusLog::new("log-test");
        for _ in 0..3 {
            let entry = LogEntry::Envelope(signer.seal(&message(&config)));
            let digest = log.append(entry.clone());
            writer.append(&entry, &digest).unwrap();
        }
        assert_eq!(BusLog::load(&path).unwrap(), log);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn file_name_embeds_election_id() {
        assert_eq!(log_file_name("board 7/x"), "board_7_x.buslog");
    }
}

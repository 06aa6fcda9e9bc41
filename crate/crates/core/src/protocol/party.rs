//! The per-party state machine. It performs no I/O: callers feed it
//! [`Input`]s (deliveries from the bus, lane messages, user commands, timer
//! expiry) and carry out the [`Output`]s it returns.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{ConfigError, ElectionConfig};
use super::message::{round, ProtocolMessage, MAX_CLAIM_LEN};
use crate::ballot::{mask_all, unmask_factor, BallotError, Mask, MaskedPrimeList, PrimeAssignment, PrimeTable};
use crate::commitment::{commit, Commitment, Opening};
use crate::elgamal::{
    self, aggregate, encrypt, keygen, share_for_product, AggregatePublicKey, Ciphertext,
    DecryptionShare, EncryptionRecord, PrivateShare, ShareTarget,
};
use crate::group::{exponentiation_count, GroupElement, Scalar};
use crate::ot::{OtChoice, OtMessage, OtOffer, OtnReceiver, OtnSender};
use crate::PartyId;

/// Private randomness of one party. Every use draws from its own stream
/// keyed by a label, so results do not depend on the order events arrive in.
#[derive(Clone)]
pub struct PartySeed([u8; 32]);

impl PartySeed {
    pub fn new(bytes: [u8; 32]) -> Self {
        PartySeed(bytes)
    }

    /// Per-party seed for simulations driven by one master seed.
    pub fn from_master(master: u64, party: PartyId) -> Self {
        let mut h = Sha256::new();
        h.update(b"boardroom/party-seed");
        h.update(master.to_be_bytes());
        h.update(party.0.to_be_bytes());
        PartySeed(h.finalize().into())
    }

    pub fn rng(&self, label: &str) -> ChaCha20Rng {
        let mut h = Sha256::new();
        h.update(self.0);
        h.update(label.as_bytes());
        ChaCha20Rng::from_seed(h.finalize().into())
    }
}

impl fmt::Debug for PartySeed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("PartySeed(..)")
    }
}

/// Index a voter will pick inside its candidate's block.
pub fn planned_index(
    config: &ElectionConfig,
    seed: &PartySeed,
    candidate: usize,
) -> Result<usize, BallotError> {
    let table = config.table()?;
    table.blocks().random_index(candidate, &mut seed.rng("index"))
}

/// The distributor's secret setup and its two commitments.
#[derive(Debug, Clone)]
pub struct DistributorSetup {
    pub table: PrimeTable,
    pub assignment: PrimeAssignment,
    pub mask: Mask,
    pub masked: MaskedPrimeList,
    pub assignment_commitment: Commitment,
    pub assignment_opening: Opening,
    pub mask_commitment: Commitment,
    pub mask_opening: Opening,
}

impl DistributorSetup {
    pub fn derive(config: &ElectionConfig, seed: &PartySeed) -> Result<Self, BallotError> {
        let mut rng = seed.rng("setup");
        let table = config.table()?;
        let assignment = PrimeAssignment::shuffle(&table, &mut rng);
        let mask = Mask::random(&config.params, &mut rng);
        let masked = mask_all(&config.params, &assignment, &mask)?;
        let payload = assignment.payload(table.lambda(), table.candidates(), &config.election_id);
        let (assignment_commitment, assignment_opening) = commit(&payload, &mut rng);
        let (mask_commitment, mask_opening) =
            commit(&mask.scalar().to_bytes(&config.params), &mut rng);
        Ok(DistributorSetup {
            table,
            assignment,
            mask,
            masked,
            assignment_commitment,
            assignment_opening,
            mask_commitment,
            mask_opening,
        })
    }
}

/// Deliberate deviations, for fault-injection runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Misbehavior {
    /// Distributor: serve `victim` a list rotated by one candidate block.
    SwapFor(PartyId),
    /// Distributor: never answer `victim`'s selection.
    DropOt(PartyId),
    /// Voter: never release a decryption share.
    WithholdShare,
    /// Voter: cast `received^2 / extra`, where `extra` is another masked prime.
    NegativeVote { extra: GroupElement },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    AwaitKeys,
    AwaitSetup,
    Selecting,
    Voted,
    AwaitShares,
    AwaitMapping,
    AwaitUnmask,
    Done,
    Aborted,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::AwaitKeys => "await-keys",
            Phase::AwaitSetup => "await-setup",
            Phase::Selecting => "selecting",
            Phase::Voted => "voted",
            Phase::AwaitShares => "await-shares",
            Phase::AwaitMapping => "await-mapping",
            Phase::AwaitUnmask => "await-unmask",
            Phase::Done => "done",
            Phase::Aborted => "aborted",
        };
        f.write_str(s)
    }
}

/// Exponentiations by phase, plus session and broadcast counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    pub keygen_exps: u64,
    pub encryption_exps: u64,
    pub encryptions: u64,
    pub share_exps: u64,
    pub distributor_exps: u64,
    pub ot_exps: u64,
    pub ot_sessions: u64,
    pub broadcasts: u64,
}

impl Counters {
    /// Raw exponentiations outside oblivious transfer.
    pub fn core_exps(&self) -> u64 {
        self.keygen_exps + self.encryption_exps + self.share_exps + self.distributor_exps
    }

    /// The cost-table convention: one per key, one per homomorphic
    /// encryption, one per decryption share, plus the distributor's mask and
    /// unmask.
    pub fn table_exps(&self) -> u64 {
        self.keygen_exps + self.encryptions + self.share_exps + self.distributor_exps
    }

    pub fn add(&mut self, other: &Counters) {
        self.keygen_exps += other.keygen_exps;
        self.encryption_exps += other.encryption_exps;
        self.encryptions += other.encryptions;
        self.share_exps += other.share_exps;
        self.distributor_exps += other.distributor_exps;
        self.ot_exps += other.ot_exps;
        self.ot_sessions += other.ot_sessions;
        self.broadcasts += other.broadcasts;
    }
}

fn measured<T>(slot: &mut u64, f: impl FnOnce() -> T) -> T {
    let before = exponentiation_count();
    let out = f();
    *slot += exponentiation_count() - before;
    out
}

#[derive(Debug, Clone)]
pub enum Input {
    Start,
    /// A verified broadcast, in bus order. Includes the party's own.
    Deliver {
        sender: PartyId,
        round: u8,
        message: ProtocolMessage,
    },
    /// A point-to-point OT message.
    Lane { from: PartyId, bytes: Vec<u8> },
    /// The candidate this voter wants (0-based).
    Choose(usize),
    Allege(String),
    /// The current round's deadline passed.
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum PartyEvent {
    Phase { phase: Phase },
    VoteCast { digest: String },
    Verdict { ok: bool, detail: String },
    Rejected { reason: String },
    Aborted { round: u8, missing: Vec<PartyId> },
}

#[derive(Debug, Clone)]
pub enum Output {
    Broadcast(ProtocolMessage),
    Lane {
        to: PartyId,
        session: u64,
        phase: &'static str,
        bytes: Vec<u8>,
    },
    Event(PartyEvent),
}

/// SHA-256 of a message's canonical bytes, as shown to voters as a receipt.
pub fn message_digest(message: &ProtocolMessage) -> [u8; 32] {
    Sha256::digest(message.encode()).into()
}

/// Digest of a revealed masked list, echoed in receipt confirmations.
pub fn masked_list_digest(masked: &[GroupElement]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"boardroom/masked-list");
    for v in masked {
        h.update(v.to_bytes());
    }
    h.finalize().into()
}

#[derive(Debug, Default)]
struct Board {
    key_shares: BTreeMap<PartyId, GroupElement>,
    commitments: Option<(Commitment, Commitment)>,
    votes: BTreeMap<PartyId, Ciphertext>,
    shares: BTreeMap<PartyId, DecryptionShare>,
    distributor_share_seen: bool,
    mapping: Option<Vec<GroupElement>>,
    receipts: BTreeMap<PartyId, bool>,
    unmask_seen: bool,
}

#[derive(Debug, Default)]
struct Sent {
    key: bool,
    commitments: bool,
    vote: bool,
    share: bool,
    mapping: bool,
    receipt: bool,
    unmask: bool,
}

pub struct Party {
    config: ElectionConfig,
    id: PartyId,
    seed: PartySeed,
    board: Board,
    sent: Sent,
    started: bool,
    key: Option<PrivateShare>,
    aggregate: Option<AggregatePublicKey>,
    expected_target: Option<ShareTarget>,
    choice: Option<usize>,
    ot_index: Option<usize>,
    offer: Option<OtOffer>,
    receiver: Option<OtnReceiver>,
    received: Option<GroupElement>,
    record: Option<EncryptionRecord>,
    setup: Option<DistributorSetup>,
    senders: BTreeMap<PartyId, OtnSender>,
    answered: BTreeSet<PartyId>,
    offered: bool,
    aborted: Option<(u8, Vec<PartyId>)>,
    phase: Phase,
    verdict: Option<(bool, String)>,
    counters: Counters,
    violations: Vec<String>,
    misbehavior: Vec<Misbehavior>,
}

impl Party {
    pub fn new(config: ElectionConfig, id: PartyId, seed: PartySeed) -> Result<Self, ConfigError> {
        config.validate()?;
        if !config.is_participant(id) {
            return Err(ConfigError::Invalid(format!("{id} is not a participant")));
        }
        Ok(Party {
            config,
            id,
            seed,
            board: Board::default(),
            sent: Sent::default(),
            started: false,
            key: None,
            aggregate: None,
            expected_target: None,
            choice: None,
            ot_index: None,
            offer: None,
            receiver: None,
            received: None,
            record: None,
            setup: None,
            senders: BTreeMap::new(),
            answered: BTreeSet::new(),
            offered: false,
            aborted: None,
            phase: Phase::AwaitKeys,
            verdict: None,
            counters: Counters::default(),
            violations: Vec::new(),
            misbehavior: Vec::new(),
        })
    }

    pub fn misbehave(&mut self, m: Misbehavior) {
        self.misbehavior.push(m);
    }

    pub fn id(&self) -> PartyId {
        self.id
    }

    pub fn config(&self) -> &ElectionConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn record(&self) -> Option<&EncryptionRecord> {
        self.record.as_ref()
    }

    pub fn ot_index(&self) -> Option<usize> {
        self.ot_index
    }

    pub fn received(&self) -> Option<&GroupElement> {
        self.received.as_ref()
    }

    pub fn choice(&self) -> Option<usize> {
        self.choice
    }

    pub fn setup(&self) -> Option<&DistributorSetup> {
        self.setup.as_ref()
    }

    pub fn aggregate_key(&self) -> Option<&AggregatePublicKey> {
        self.aggregate.as_ref()
    }

    pub fn verdict(&self) -> Option<(bool, &str)> {
        self.verdict.as_ref().map(|(ok, d)| (*ok, d.as_str()))
    }

    /// Messages this party refused, with reasons.
    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    pub fn is_distributor(&self) -> bool {
        self.id == self.config.distributor
    }

    fn is_voter(&self) -> bool {
        self.config.is_voter(self.id)
    }

    fn is_receiver(&self) -> bool {
        self.is_voter() && !self.is_distributor()
    }

    fn has(&self, m: &Misbehavior) -> bool {
        self.misbehavior.contains(m)
    }

    pub fn handle(&mut self, input: Input) -> Vec<Output> {
        let mut out = Vec::new();
        match input {
            Input::Start => self.start(&mut out),
            Input::Deliver {
                sender,
                round,
                message,
            } => self.deliver(sender, round, message, &mut out),
            Input::Lane { from, bytes } => self.lane(from, &bytes, &mut out),
            Input::Choose(candidate) => self.choose(candidate, &mut out),
            Input::Allege(claim) => self.allege(claim, &mut out),
            Input::Timeout => self.timeout(&mut out),
        }
        self.advance(&mut out);
        out
    }

    fn reject(&mut self, reason: String, out: &mut Vec<Output>) {
        self.violations.push(reason.clone());
        out.push(Output::Event(PartyEvent::Rejected { reason }));
    }

    fn broadcast(&mut self, message: ProtocolMessage, out: &mut Vec<Output>) {
        self.counters.broadcasts += 1;
        out.push(Output::Broadcast(message));
    }

    fn start(&mut self, out: &mut Vec<Output>) {
        if self.started {
            return;
        }
        self.started = true;
        let params = self.config.params.clone();
        if self.is_voter() {
            let mut rng = self.seed.rng("keygen");
            let (private, public) =
                measured(&mut self.counters.keygen_exps, || keygen(&params, self.id, &mut rng));
            self.key = Some(private);
            self.sent.key = true;
            self.broadcast(ProtocolMessage::PublicKeyShare { value: public.value }, out);
        }
        if self.is_distributor() {
            let mut slot = 0;
            let setup = measured(&mut slot, || DistributorSetup::derive(&self.config, &self.seed));
            self.counters.distributor_exps += slot;
            let setup = setup.expect("validated configuration yields a prime table");
            let message = ProtocolMessage::SetupCommitments {
                assignment: setup.assignment_commitment,
                mask: setup.mask_commitment,
            };
            self.setup = Some(setup);
            self.sent.commitments = true;
            self.broadcast(message, out);
        }
    }

    fn authorized(&self, sender: PartyId, message: &ProtocolMessage) -> bool {
        use ProtocolMessage::*;
        let d = self.config.distributor;
        match message {
            PublicKeyShare { .. } | EncryptedVote { .. } => self.config.is_voter(sender),
            SetupCommitments { .. } | MappingReveal { .. } | UnmaskReveal { .. } => sender == d,
            DistributorShare { .. } => sender == d && !self.config.ea_mode,
            VoterShare { .. } => self.config.is_voter(sender) && sender != d,
            ReceiptConfirmation { .. } | Allegation { .. } => {
                self.config.ot_receivers().contains(&sender)
            }
            Abort { .. } => self.config.is_participant(sender),
        }
    }

    fn deliver(&mut self, sender: PartyId, round: u8, message: ProtocolMessage, out: &mut Vec<Output>) {
        use ProtocolMessage::*;
        if round != message.round() {
            return self.reject(format!("{message} from {sender} tagged round {round}"), out);
        }
        if !self.authorized(sender, &message) {
            return self.reject(format!("{message} from unauthorized sender {sender}"), out);
        }
        let duplicate = |kind: &str| format!("duplicate {kind} from {sender}");
        match message {
            PublicKeyShare { value } => {
                if self.board.key_shares.contains_key(&sender) {
                    return self.reject(duplicate("key share"), out);
                }
                self.board.key_shares.insert(sender, value);
            }
            SetupCommitments { assignment, mask } => {
                if self.board.commitments.is_some() {
                    return self.reject(duplicate("setup commitments"), out);
                }
                self.board.commitments = Some((assignment, mask));
            }
            EncryptedVote { ciphertext } => {
                if self.expected_target.is_some() {
                    return self.reject(format!("vote from {sender} after the vote round closed"), out);
                }
                if self.board.votes.contains_key(&sender) {
                    return self.reject(duplicate("vote"), out);
                }
                self.board.votes.insert(sender, ciphertext);
            }
            DistributorShare { .. } | VoterShare { .. } => {
                let share = message.decryption_share(sender).unwrap();
                if let Some(target) = self.expected_target {
                    if share.target != target {
                        return self.reject(format!("share from {sender} binds the wrong product"), out);
                    }
                }
                if self.board.shares.contains_key(&sender) {
                    return self.reject(duplicate("decryption share"), out);
                }
                if sender == self.config.distributor {
                    self.board.distributor_share_seen = true;
                }
                self.board.shares.insert(sender, share);
            }
            MappingReveal { masked } => {
                if self.board.mapping.is_some() {
                    return self.reject(duplicate("mapping"), out);
                }
                self.board.mapping = Some(masked);
            }
            ReceiptConfirmation { .. } | Allegation { .. } => {
                let ok = matches!(message, ReceiptConfirmation { .. });
                if self.board.receipts.contains_key(&sender) {
                    return self.reject(duplicate("receipt"), out);
                }
                self.board.receipts.insert(sender, ok);
            }
            UnmaskReveal { .. } => {
                if self.board.unmask_seen {
                    return self.reject(duplicate("unmask reveal"), out);
                }
                self.board.unmask_seen = true;
            }
            Abort { round, missing } => {
                if self.aborted.is_none() {
                    self.aborted = Some((round, missing.clone()));
                    out.push(Output::Event(PartyEvent::Aborted { round, missing }));
                }
            }
        }
    }

    fn lane(&mut self, from: PartyId, bytes: &[u8], out: &mut Vec<Output>) {
        let message = match OtMessage::decode(bytes, &self.config.params) {
            Ok(m) => m,
            Err(e) => return self.reject(format!("lane message from {from}: {e}"), out),
        };
        match message {
            OtMessage::Offer(offer) => {
                if !self.is_receiver() || from != self.config.distributor {
                    return self.reject(format!("unexpected OT offer from {from}"), out);
                }
                if offer.session != self.id.0 as u64 || self.offer.is_some() {
                    return self.reject(format!("OT offer for session {} refused", offer.session), out);
                }
                self.offer = Some(offer);
            }
            OtMessage::Select(select) => {
                if self.answered.contains(&from) || select.session != from.0 as u64 {
                    return self.reject(format!("unexpected OT selection from {from}"), out);
                }
                let Some(sender) = self.senders.get(&from) else {
                    return self.reject(format!("no OT session with {from}"), out);
                };
                if self.has(&Misbehavior::DropOt(from)) {
                    self.answered.insert(from);
                    return;
                }
                let mut rng = self.seed.rng(&format!("ot-transfer/{}", from.0));
                let mut slot = 0;
                let transfer = measured(&mut slot, || sender.respond(&select, &mut rng));
                self.counters.ot_exps += slot;
                match transfer {
                    Ok(t) => {
                        self.answered.insert(from);
                        self.counters.ot_sessions += 1;
                        out.push(Output::Lane {
                            to: from,
                            session: t.session,
                            phase: "transfer",
                            bytes: OtMessage::Transfer(t).encode(),
                        });
                    }
                    Err(e) => self.reject(format!("OT selection from {from}: {e}"), out),
                }
            }
            OtMessage::Transfer(transfer) => {
                if from != self.config.distributor || self.received.is_some() {
                    return self.reject(format!("unexpected OT transfer from {from}"), out);
                }
                let Some(receiver) = &self.receiver else {
                    return self.reject("OT transfer before selection".into(), out);
                };
                let mut slot = 0;
                let value = measured(&mut slot, || receiver.on_transfer(&transfer));
                self.counters.ot_exps += slot;
                match value.map_err(|e| e.to_string()).and_then(|bytes| {
                    self.config
                        .params
                        .element_from_bytes(&bytes)
                        .map_err(|e| e.to_string())
                }) {
                    Ok(v) => self.received = Some(v),
                    Err(e) => self.reject(format!("OT transfer: {e}"), out),
                }
            }
        }
    }

    fn choose(&mut self, candidate: usize, out: &mut Vec<Output>) {
        if !self.is_voter() {
            return self.reject("this party does not vote".into(), out);
        }
        if candidate >= self.config.candidates.len() {
            return self.reject(format!("candidate {candidate} out of range"), out);
        }
        if self.choice.is_some() || self.sent.vote {
            return self.reject("choice already made".into(), out);
        }
        self.choice = Some(candidate);
    }

    fn allege(&mut self, claim: String, out: &mut Vec<Output>) {
        if !self.is_receiver() {
            return self.reject("only OT receivers file allegations".into(), out);
        }
        if self.board.mapping.is_none() || self.sent.receipt {
            return self.reject("allegations are accepted after the mapping and before a receipt".into(), out);
        }
        let Some(received) = self.received.clone() else {
            return self.reject("nothing received to allege about".into(), out);
        };
        let claim: String = claim.chars().take(MAX_CLAIM_LEN / 4).collect();
        self.sent.receipt = true;
        self.broadcast(ProtocolMessage::Allegation { claim, received }, out);
    }

    /// Parties the current round is still waiting on.
    pub fn missing(&self) -> Option<(u8, Vec<PartyId>)> {
        let voters = self.config.voter_ids();
        let d = self.config.distributor;
        let absent = |have: &dyn Fn(&PartyId) -> bool| -> Vec<PartyId> {
            voters.iter().copied().filter(|v| !have(v)).collect()
        };
        if !self.keys_complete() {
            let mut m = absent(&|v| self.board.key_shares.contains_key(v));
            if self.board.commitments.is_none() && !m.contains(&d) {
                m.push(d);
            }
            return Some((round::KEYS, m));
        }
        if !self.votes_complete() {
            return Some((round::VOTES, absent(&|v| self.board.votes.contains_key(v))));
        }
        if !self.shares_complete() {
            return Some((round::SHARES, absent(&|v| self.board.shares.contains_key(v))));
        }
        if self.board.mapping.is_none() {
            return Some((round::MAPPING, vec![d]));
        }
        if !self.receipts_complete() {
            let m = self
                .config
                .ot_receivers()
                .into_iter()
                .filter(|v| !self.board.receipts.contains_key(v))
                .collect();
            return Some((round::MAPPING, m));
        }
        if !self.board.unmask_seen {
            return Some((round::UNMASK, vec![d]));
        }
        None
    }

    fn timeout(&mut self, out: &mut Vec<Output>) {
        if self.aborted.is_some() || !self.started {
            return;
        }
        if let Some((round, missing)) = self.missing() {
            self.aborted = Some((round, missing.clone()));
            self.broadcast(
                ProtocolMessage::Abort {
                    round,
                    missing: missing.clone(),
                },
                out,
            );
            out.push(Output::Event(PartyEvent::Aborted { round, missing }));
        }
    }

    fn keys_complete(&self) -> bool {
        self.board.key_shares.len() == self.config.voters as usize && self.board.commitments.is_some()
    }

    fn votes_complete(&self) -> bool {
        self.board.votes.len() == self.config.voters as usize
    }

    fn shares_complete(&self) -> bool {
        self.expected_target.is_some() && self.board.shares.len() == self.config.voters as usize
    }

    fn receipts_complete(&self) -> bool {
        self.board.receipts.len() == self.config.ot_receivers().len()
    }

    fn advance(&mut self, out: &mut Vec<Output>) {
        if self.started && self.aborted.is_none() {
            self.step(out);
        }
        let phase = self.current_phase();
        if phase != self.phase {
            debug_assert!(phase > self.phase, "phase moved backwards");
            self.phase = phase;
            out.push(Output::Event(PartyEvent::Phase { phase }));
        }
    }

    fn step(&mut self, out: &mut Vec<Output>) {
        let params = self.config.params.clone();

        if self.aggregate.is_none() && self.keys_complete() {
            let shares: Vec<elgamal::PublicShare> = self
                .board
                .key_shares
                .iter()
                .map(|(owner, value)| elgamal::PublicShare {
                    value: value.clone(),
                    owner: *owner,
                })
                .collect();
            match aggregate(&shares) {
                Ok(key) => self.aggregate = Some(key),
                Err(e) => return self.reject(format!("aggregate key: {e}"), out),
            }
        }

        if self.is_distributor() && !self.offered && self.aggregate.is_some() {
            self.offered = true;
            self.send_offers(out);
        }

        if self.is_receiver() && !self.sent.vote && self.receiver.is_none() {
            if let (Some(offer), Some(candidate)) = (self.offer.clone(), self.choice) {
                self.select(&offer, candidate, out);
            }
        }

        if self.is_voter() && !self.sent.vote && self.aggregate.is_some() {
            if let Some(plaintext) = self.plaintext() {
                self.cast(plaintext, out);
            }
        }

        if self.expected_target.is_none() && self.votes_complete() {
            let a: Vec<GroupElement> = self.board.votes.values().map(|c| c.a.clone()).collect();
            let product = elgamal::product_of(&a).expect("votes are nonempty");
            let target = ShareTarget::new(&self.config.context(), &product);
            self.expected_target = Some(target);
            let bad: Vec<PartyId> = self
                .board
                .shares
                .iter()
                .filter(|(_, s)| s.target != target)
                .map(|(p, _)| *p)
                .collect();
            for p in bad {
                self.board.shares.remove(&p);
                self.reject(format!("share from {p} binds the wrong product"), out);
            }
            self.board.distributor_share_seen = self.board.shares.contains_key(&self.config.distributor);
        }

        if self.is_voter() && !self.sent.share && self.expected_target.is_some() {
            let my_turn = self.is_distributor() || self.config.ea_mode || self.board.distributor_share_seen;
            if my_turn && !self.has(&Misbehavior::WithholdShare) {
                self.release_share(out);
            }
        }

        if self.is_distributor() && !self.sent.mapping && self.shares_complete() {
            let masked = self.setup.as_ref().unwrap().masked.values.clone();
            self.sent.mapping = true;
            self.broadcast(ProtocolMessage::MappingReveal { masked }, out);
        }

        if self.is_receiver() && !self.sent.receipt {
            if let (Some(mapping), Some(received), Some(index)) =
                (self.board.mapping.clone(), self.received.clone(), self.ot_index)
            {
                self.audit_receipt(&mapping, received, index, out);
            }
        }

        if self.is_distributor() && !self.sent.unmask && self.board.mapping.is_some() && self.receipts_complete() {
            let setup = self.setup.as_ref().unwrap();
            let masked_votes = self.config.masked_votes();
            let mut slot = 0;
            let unmask = measured(&mut slot, || unmask_factor(&params, masked_votes, &setup.mask));
            let message = ProtocolMessage::UnmaskReveal {
                unmask,
                s: setup.mask.scalar().clone(),
                mask_nonce: setup.mask_opening.nonce,
                assignment_payload: setup.assignment_opening.payload.clone(),
                assignment_nonce: setup.assignment_opening.nonce,
            };
            self.counters.distributor_exps += slot;
            self.sent.unmask = true;
            self.broadcast(message, out);
        }
    }

    fn send_offers(&mut self, out: &mut Vec<Output>) {
        let setup = self.setup.as_ref().unwrap();
        let lambda = setup.table.lambda() as usize;
        let strings: Vec<Vec<u8>> = setup.masked.values.iter().map(GroupElement::to_bytes).collect();
        for receiver in self.config.ot_receivers() {
            let mut served = strings.clone();
            if self.misbehavior.contains(&Misbehavior::SwapFor(receiver)) {
                let len = served.len();
                served.rotate_left(lambda % len);
            }
            let mut rng = self.seed.rng(&format!("ot-sender/{}", receiver.0));
            let session = receiver.0 as u64;
            let mut slot = 0;
            let created = measured(&mut slot, || {
                OtnSender::new(&self.config.params, session, served, &mut rng)
            });
            self.counters.ot_exps += slot;
            let (sender, offer) = created.expect("masked list fits the OT limits");
            self.senders.insert(receiver, sender);
            out.push(Output::Lane {
                to: receiver,
                session,
                phase: "offer",
                bytes: OtMessage::Offer(offer).encode(),
            });
        }
    }

    fn select(&mut self, offer: &OtOffer, candidate: usize, out: &mut Vec<Output>) {
        let index = match planned_index(&self.config, &self.seed, candidate) {
            Ok(i) => i,
            Err(e) => return self.reject(format!("vote selection: {e}"), out),
        };
        let pool = self.config.lambda as usize * self.config.candidates.len();
        let choice = OtChoice::new(index, pool).expect("index lies inside the pool");
        let mut receiver = OtnReceiver::new(&self.config.params, choice);
        let mut rng = self.seed.rng("ot-receiver");
        let mut slot = 0;
        let select = measured(&mut slot, || receiver.on_offer(offer, &mut rng));
        self.counters.ot_exps += slot;
        match select {
            Ok(select) => {
                self.ot_index = Some(index);
                self.receiver = Some(receiver);
                out.push(Output::Lane {
                    to: self.config.distributor,
                    session: select.session,
                    phase: "select",
                    bytes: OtMessage::Select(select).encode(),
                });
            }
            Err(e) => self.reject(format!("OT offer: {e}"), out),
        }
    }

    /// What this voter encrypts, once it is known.
    fn plaintext(&mut self) -> Option<GroupElement> {
        if self.is_distributor() {
            let candidate = self.choice?;
            let index = planned_index(&self.config, &self.seed, candidate).ok()?;
            self.ot_index = Some(index);
            let prime = self.setup.as_ref()?.assignment.prime(index);
            return self.config.params.element_from_u64(prime).ok();
        }
        let received = self.received.clone()?;
        for m in &self.misbehavior {
            if let Misbehavior::NegativeVote { extra } = m {
                return received.mul(&received).ok()?.div(extra).ok();
            }
        }
        Some(received)
    }

    fn cast(&mut self, plaintext: GroupElement, out: &mut Vec<Output>) {
        let key = self.aggregate.clone().unwrap();
        let mut rng = self.seed.rng("encrypt");
        let mut slot = 0;
        let record = measured(&mut slot, || encrypt(&plaintext, &key, &mut rng));
        self.counters.encryption_exps += slot;
        let record = match record {
            Ok(r) => r,
            Err(e) => return self.reject(format!("encryption: {e}"), out),
        };
        self.counters.encryptions += 1;
        let message = ProtocolMessage::EncryptedVote {
            ciphertext: record.ciphertext.clone(),
        };
        let digest = hex::encode(message_digest(&message));
        self.record = Some(record);
        self.sent.vote = true;
        self.broadcast(message, out);
        out.push(Output::Event(PartyEvent::VoteCast { digest }));
    }

    fn release_share(&mut self, out: &mut Vec<Output>) {
        let a: Vec<GroupElement> = self.board.votes.values().map(|c| c.a.clone()).collect();
        let key = self.key.as_ref().unwrap();
        let context = self.config.context();
        let mut slot = 0;
        let share = measured(&mut slot, || share_for_product(&a, key, &context));
        self.counters.share_exps += slot;
        let share = share.expect("votes are nonempty");
        let message = if self.is_distributor() {
            ProtocolMessage::DistributorShare {
                value: share.value,
                target: share.target,
            }
        } else {
            ProtocolMessage::VoterShare {
                value: share.value,
                target: share.target,
            }
        };
        self.sent.share = true;
        self.broadcast(message, out);
    }

    fn audit_receipt(
        &mut self,
        mapping: &[GroupElement],
        received: GroupElement,
        index: usize,
        out: &mut Vec<Output>,
    ) {
        let expected = mapping.get(index);
        let in_block = self.choice.map(|c| index / self.config.lambda as usize == c) == Some(true);
        self.sent.receipt = true;
        if expected == Some(&received) && in_block {
            let detail = format!("masked prime matches revealed index {}", index + 1);
            self.verdict = Some((true, detail.clone()));
            out.push(Output::Event(PartyEvent::Verdict { ok: true, detail }));
            self.broadcast(
                ProtocolMessage::ReceiptConfirmation {
                    list_digest: masked_list_digest(mapping),
                },
                out,
            );
        } else {
            let claim = format!(
                "received masked prime does not match revealed index {}",
                index + 1
            );
            self.verdict = Some((false, claim.clone()));
            out.push(Output::Event(PartyEvent::Verdict {
                ok: false,
                detail: claim.clone(),
            }));
            self.broadcast(ProtocolMessage::Allegation { claim, received }, out);
        }
    }

    fn current_phase(&self) -> Phase {
        if self.aborted.is_some() {
            return Phase::Aborted;
        }
        if self.board.unmask_seen {
            return Phase::Done;
        }
        if self.board.mapping.is_some() {
            return Phase::AwaitUnmask;
        }
        if self.shares_complete() {
            return Phase::AwaitMapping;
        }
        if self.votes_complete() {
            return Phase::AwaitShares;
        }
        if self.board.key_shares.len() < self.config.voters as usize {
            return Phase::AwaitKeys;
        }
        if self.board.commitments.is_none() {
            return Phase::AwaitSetup;
        }
        if self.sent.vote || !self.is_voter() {
            return Phase::Voted;
        }
        Phase::Selecting
    }
}

/// What a voter hands over to prove its vote: the plaintext and the
/// encryption randomness. Anyone can check it by re-encrypting.
pub fn prove_vote(record: &EncryptionRecord) -> (GroupElement, Scalar) {
    (record.plaintext.clone(), record.randomness.clone())
}

pub fn verify_vote_proof(
    ciphertext: &Ciphertext,
    plaintext: &GroupElement,
    randomness: &Scalar,
    key: &AggregatePublicKey,
) -> bool {
    elgamal::reencrypt_matches(ciphertext, plaintext, randomness, key)
}

//! In-process election runs over a deterministic bus.
//!
//! Every broadcast is sealed, verified and appended to a [`BusLog`] before it
//! is delivered to all parties in log order, exactly as the TCP relay does.
//! When nothing is left to deliver and the election has not finished, the
//! lowest-id live party times out and broadcasts an abort.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::ballot::BallotError;
use crate::group::GroupElement;
use crate::protocol::{
    finalize, planned_index, ConfigError, Counters, DistributorSetup, ElectionConfig,
    ElectionResult, FinalizeError, Input, Misbehavior, Output, Party, PartyEvent, PartySeed, Phase,
};
use crate::transport::{
    lane_record, simulation_signing_key, AuthenticatedEnvelope, EnvelopeSigner, EnvelopeVerifier, BusLog, LogEntry,
    TransportError,
};
use crate::PartyId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    None,
    /// A voter folds the inverse of an unused masked prime into its vote.
    NegativeVote { cheater: PartyId },
    /// The distributor serves one voter a rotated list.
    DistributorSwap { victim: PartyId },
    /// A voter never posts its decryption share.
    WithholdShare { party: PartyId },
    /// The distributor never answers one voter's selection.
    DropOt { victim: PartyId },
}

impl Fault {
    pub fn name(&self) -> &'static str {
        match self {
            Fault::None => "none",
            Fault::NegativeVote { .. } => "negative-vote",
            Fault::DistributorSwap { .. } => "distributor-swap",
            Fault::WithholdShare { .. } => "withhold-share",
            Fault::DropOt { .. } => "drop-ot",
        }
    }
}

impl fmt::Display for Fault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fault::None => write!(f, "none"),
            Fault::NegativeVote { cheater: p }
            | Fault::DistributorSwap { victim: p }
            | Fault::WithholdShare { party: p }
            | Fault::DropOt { victim: p } => write!(f, "{}:{}", self.name(), p.0),
        }
    }
}

impl FromStr for Fault {
    type Err = String;

    /// `none`, or `kind[:party]` with the party defaulting to voter 1.
    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, party) = match s.split_once(':') {
            Some((k, p)) => (
                k,
                PartyId(p.parse().map_err(|_| format!("bad party in fault `{s}`"))?),
            ),
            None => (s, PartyId(1)),
        };
        Ok(match kind {
            "none" => Fault::None,
            "negative-vote" => Fault::NegativeVote { cheater: party },
            "distributor-swap" => Fault::DistributorSwap { victim: party },
            "withhold-share" => Fault::WithholdShare { party },
            "drop-ot" => Fault::DropOt { victim: party },
            _ => return Err(format!("unknown fault `{kind}`")),
        })
    }
}

/// Delivery order of broadcasts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Schedule {
    /// Emission order.
    Fifo,
    /// Broadcasts are held until the bus is quiet, sorted by (round, sender),
    /// then released in the given per-round permutation. Rounds without an
    /// entry keep sorted order.
    Batched(BTreeMap<u8, Vec<usize>>),
    /// Any pending item, broadcast or lane, may go next.
    Shuffled(u64),
}

#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub config: ElectionConfig,
    pub seed: u64,
    /// One candidate index per voter.
    pub choices: Vec<usize>,
    pub fault: Fault,
    pub schedule: Schedule,
}

impl SimulationSpec {
    pub fn new(config: ElectionConfig, seed: u64, choices: Vec<usize>) -> Self {
        SimulationSpec {
            config,
            seed,
            choices,
            fault: Fault::None,
            schedule: Schedule::Fifo,
        }
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = fault;
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }
}

/// Uniform choices drawn from the seed.
pub fn random_choices(seed: u64, voters: usize, candidates: usize) -> Vec<usize> {
    let mut rng = PartySeed::from_master(seed, PartyId(u32::MAX)).rng("choices");
    (0..voters).map(|_| rng.gen_range(0..candidates)).collect()
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ballot(#[from] BallotError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("{0}")]
    Invalid(String),
}

/// Ground truth for the negative-vote fault.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeVotePlan {
    pub cheater: PartyId,
    pub minus_index: usize,
    pub minus_prime: u64,
    pub extra: GroupElement,
}

pub struct SimulationOutcome {
    pub result: Result<ElectionResult, FinalizeError>,
    pub log: BusLog,
    pub parties: Vec<Party>,
    pub events: Vec<(PartyId, PartyEvent)>,
    pub timeouts: u32,
    pub negative_plan: Option<NegativeVotePlan>,
    pub config: ElectionConfig,
}

impl SimulationOutcome {
    pub fn counters(&self) -> Counters {
        let mut total = Counters::default();
        for p in &self.parties {
            total.add(p.counters());
        }
        total
    }

    pub fn party(&self, id: PartyId) -> &Party {
        self.parties.iter().find(|p| p.id() == id).expect("party exists")
    }
}

enum Pending {
    Broadcast(AuthenticatedEnvelope),
    Lane {
        from: PartyId,
        to: PartyId,
        session: u64,
        phase: &'static str,
        bytes: Vec<u8>,
    },
}

struct Bus {
    parties: Vec<Party>,
    index: BTreeMap<PartyId, usize>,
    signers: BTreeMap<PartyId, EnvelopeSigner>,
    verifier: EnvelopeVerifier,
    log: BusLog,
    queue: VecDeque<Pending>,
    held: Vec<AuthenticatedEnvelope>,
    events: Vec<(PartyId, PartyEvent)>,
    schedule: Schedule,
    rng: ChaCha20Rng,
}

impl Bus {
    fn feed(&mut self, id: PartyId, input: Input) {
        let slot = self.index[&id];
        let outputs = self.parties[slot].handle(input);
        for o in outputs {
            match o {
                Output::Broadcast(message) => {
                    let envelope = self.signers.get_mut(&id).expect("signer").seal(&message);
                    self.queue.push_back(Pending::Broadcast(envelope));
                }
                Output::Lane {
                    to,
                    session,
                    phase,
                    bytes,
                } => self.queue.push_back(Pending::Lane {
                    from: id,
                    to,
                    session,
                    phase,
                    bytes,
                }),
                Output::Event(e) => self.events.push((id, e)),
            }
        }
    }

    fn next(&mut self) -> Option<Pending> {
        match self.schedule {
            Schedule::Shuffled(_) if !self.queue.is_empty() => {
                let mut i = self.rng.gen_range(0..self.queue.len());
                // A sender's own broadcasts share one stream and stay in order.
                if let Pending::Broadcast(env) = &self.queue[i] {
                    let sender = env.sender;
                    i = self
                        .queue
                        .iter()
                        .position(|p| matches!(p, Pending::Broadcast(e) if e.sender == sender))
                        .expect("present");
                }
                self.queue.remove(i)
            }
            _ => self.queue.pop_front(),
        }
    }

    fn sequence(&mut self, envelope: AuthenticatedEnvelope) -> Result<(), TransportError> {
        let from = envelope.sender;
        let verified = self.verifier.accept(&envelope)?;
        self.log.append(LogEntry::Envelope(envelope.clone()));
        let ids: Vec<PartyId> = self.index.keys().copied().collect();
        for id in ids {
            self.feed(
                id,
                Input::Deliver {
                    sender: from,
                    round: envelope.round,
                    message: verified.clone(),
                },
            );
        }
        Ok(())
    }

    fn drain(&mut self) -> Result<(), TransportError> {
        loop {
            while let Some(item) = self.next() {
                match item {
                    Pending::Broadcast(envelope) => {
                        if matches!(self.schedule, Schedule::Batched(_)) {
                            self.held.push(envelope);
                        } else {
                            self.sequence(envelope)?;
                        }
                    }
                    Pending::Lane {
                        from,
                        to,
                        session,
                        phase,
                        bytes,
                    } => {
                        self.log
                            .append(LogEntry::Lane(lane_record(from, to, session, phase, &bytes)));
                        if self.index.contains_key(&to) {
                            self.feed(to, Input::Lane { from, bytes });
                        }
                    }
                }
            }
            if self.held.is_empty() {
                return Ok(());
            }
            let mut batch = std::mem::take(&mut self.held);
            batch.sort_by_key(|e| (e.round, e.sender, e.seq));
            let order: Vec<usize> = match &self.schedule {
                Schedule::Batched(perms) => perms
                    .get(&batch[0].round)
                    .filter(|p| is_permutation(p, batch.len()))
                    .cloned()
                    .unwrap_or_else(|| (0..batch.len()).collect()),
                _ => (0..batch.len()).collect(),
            };
            for envelope in keep_sender_order(order.into_iter().map(|i| batch[i].clone()).collect()) {
                self.sequence(envelope)?;
            }
        }
    }

    fn finished(&self) -> bool {
        self.parties
            .iter()
            .all(|p| matches!(p.phase(), Phase::Done | Phase::Aborted))
    }
}

/// Reassigns each sender's messages to that sender's slots in seq order.
fn keep_sender_order(mut order: Vec<AuthenticatedEnvelope>) -> Vec<AuthenticatedEnvelope> {
    let mut by_sender: BTreeMap<PartyId, Vec<AuthenticatedEnvelope>> = BTreeMap::new();
    for e in &order {
        by_sender.entry(e.sender).or_default().push(e.clone());
    }
    for list in by_sender.values_mut() {
        list.sort_by_key(|e| std::cmp::Reverse(e.seq));
    }
    for slot in order.iter_mut() {
        *slot = by_sender.get_mut(&slot.sender).and_then(Vec::pop).expect("slot");
    }
    order
}

fn is_permutation(p: &[usize], len: usize) -> bool {
    let mut sorted = p.to_vec();
    sorted.sort_unstable();
    sorted == (0..len).collect::<Vec<_>>()
}

/// Picks an index nobody selects and hands its masked prime to the cheater.
fn plan_negative_vote(
    config: &ElectionConfig,
    seeds: &BTreeMap<PartyId, PartySeed>,
    choices: &[usize],
    cheater: PartyId,
) -> Result<NegativeVotePlan, SimulationError> {
    let setup = DistributorSetup::derive(config, &seeds[&config.distributor])?;
    let mut used = Vec::new();
    for (v, &c) in config.voter_ids().iter().zip(choices) {
        used.push(planned_index(config, &seeds[v], c)?);
    }
    let minus_index = (0..setup.masked.values.len())
        .find(|i| !used.contains(i))
        .ok_or_else(|| SimulationError::Invalid("every index is in use".into()))?;
    Ok(NegativeVotePlan {
        cheater,
        minus_index,
        minus_prime: setup.assignment.prime(minus_index),
        extra: setup.masked.values[minus_index].clone(),
    })
}

pub fn simulate(spec: &SimulationSpec) -> Result<SimulationOutcome, SimulationError> {
    let mut config = spec.config.clone();
    config.validate()?;
    let voters = config.voter_ids();
    if spec.choices.len() != voters.len() {
        return Err(SimulationError::Invalid(format!(
            "{} choices for {} voters",
            spec.choices.len(),
            voters.len()
        )));
    }
    if let Some(c) = spec.choices.iter().find(|&&c| c >= config.candidate_count() as usize) {
        return Err(SimulationError::Invalid(format!("choice {c} out of range")));
    }

    let ids = config.participants();
    let mut signers = BTreeMap::new();
    for &id in &ids {
        let signer = EnvelopeSigner::new(
            &config.election_id,
            id,
            simulation_signing_key(spec.seed, id),
        );
        config.verification_keys.insert(id, signer.verifying_key());
        signers.insert(id, signer);
    }
    let seeds: BTreeMap<PartyId, PartySeed> = ids
        .iter()
        .map(|&id| (id, PartySeed::from_master(spec.seed, id)))
        .collect();

    let mut parties = Vec::new();
    for &id in &ids {
        parties.push(Party::new(config.clone(), id, seeds[&id].clone())?);
    }
    let index: BTreeMap<PartyId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let receivers = config.ot_receivers();
    let need_receiver = |p: PartyId| -> Result<(), SimulationError> {
        if receivers.contains(&p) {
            Ok(())
        } else {
            Err(SimulationError::Invalid(format!("{p} is not an OT receiver")))
        }
    };
    let mut negative_plan = None;
    match &spec.fault {
        Fault::None => {}
        Fault::NegativeVote { cheater } => {
            need_receiver(*cheater)?;
            let plan = plan_negative_vote(&config, &seeds, &spec.choices, *cheater)?;
            parties[index[cheater]].misbehave(Misbehavior::NegativeVote {
                extra: plan.extra.clone(),
            });
            negative_plan = Some(plan);
        }
        Fault::DistributorSwap { victim } => {
            need_receiver(*victim)?;
            parties[index[&config.distributor]].misbehave(Misbehavior::SwapFor(*victim));
        }
        Fault::DropOt { victim } => {
            need_receiver(*victim)?;
            parties[index[&config.distributor]].misbehave(Misbehavior::DropOt(*victim));
        }
        Fault::WithholdShare { party } => {
            if !config.is_voter(*party) {
                return Err(SimulationError::Invalid(format!("{party} is not a voter")));
            }
            parties[index[party]].misbehave(Misbehavior::WithholdShare);
        }
    }

    let rng_seed = match spec.schedule {
        Schedule::Shuffled(s) => s,
        _ => 0,
    };
    let mut bus = Bus {
        parties,
        index,
        signers,
        verifier: EnvelopeVerifier::new(&config)?,
        log: BusLog::new(&config.election_id),
        queue: VecDeque::new(),
        held: Vec::new(),
        events: Vec::new(),
        schedule: spec.schedule.clone(),
        rng: ChaCha20Rng::seed_from_u64(rng_seed),
    };

    for &id in &ids {
        bus.feed(id, Input::Start);
    }
    for (&v, &c) in voters.iter().zip(&spec.choices) {
        bus.feed(v, Input::Choose(c));
    }
    bus.drain()?;

    let mut timeouts = 0;
    while !bus.finished() {
        let live = bus
            .parties
            .iter()
            .find(|p| !matches!(p.phase(), Phase::Done | Phase::Aborted))
            .map(Party::id)
            .expect("unfinished party");
        timeouts += 1;
        bus.feed(live, Input::Timeout);
        bus.drain()?;
        if timeouts as usize > ids.len() + 1 {
            return Err(SimulationError::Invalid("election neither finished nor aborted".into()));
        }
    }

    let transcript = bus.log.transcript(&config)?;
    let result = finalize(&config, &transcript);
    Ok(SimulationOutcome {
        result,
        log: bus.log,
        parties: bus.parties,
        events: bus.events,
        timeouts,
        negative_plan,
        config,
    })
}

/// Convenience for examples and tests: a toy-group honest run.
pub fn honest_run(
    election_id: &str,
    candidates: &[&str],
    lambda: u32,
    choices: &[usize],
    seed: u64,
) -> Result<SimulationOutcome, SimulationError> {
    let config = ElectionConfig::new(election_id, choices.len() as u32, candidates, lambda);
    simulate(&SimulationSpec::new(config, seed, choices.to_vec()))
}

/// All permutations of `0..len` in lexicographic order.
pub fn permutations(len: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..rest.len() {
            let x = rest.remove(i);
            prefix.push(x);
            go(prefix, rest, out);
            prefix.pop();
            rest.insert(i, x);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..len).collect(), &mut out);
    out
}

/// Seeded shuffle of a permutation; used to sample schedules.
pub fn shuffled_permutation(len: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..len).collect();
    p.shuffle(rng);
    p
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ResultStatus;

    #[test]
    fn honest_four_voter_election() {
        let out = honest_run("sim-honest", &["a", "b", "c"], 3, &[1, 2, 1, 0], 11).unwrap();
        let result = out.result.unwrap();
        assert_eq!(result.status, ResultStatus::Complete);
        assert_eq!(result.totals, Some(vec![1, 2, 1]));
        assert_eq!(result.counters.broadcast_rounds, 5);
        assert_eq!(result.counters.ot_sessions, 3);
        assert_eq!(out.timeouts, 0);
    }

    #[test]
    fn fault_names_parse() {
        assert_eq!("none".parse::<Fault>().unwrap(), Fault::None);
        assert_eq!(
            "negative-vote:2".parse::<Fault>().unwrap(),
            Fault::NegativeVote { cheater: PartyId(2) }
        );
        assert_eq!(
            "drop-ot".parse::<Fault>().unwrap(),
            Fault::DropOt { victim: PartyId(1) }
        );
        assert!("sideways".parse::<Fault>().is_err());
        let f = Fault::WithholdShare { party: PartyId(3) };
        assert_eq!(f.to_string().parse::<Fault>().unwrap(), f);
    }

    #[test]
    fn permutation_helpers() {
        assert_eq!(permutations(3).len(), 6);
        assert!(is_permutation(&[2, 0, 1], 3));
        assert!(!is_permutation(&[0, 0, 1], 3));
    }
}

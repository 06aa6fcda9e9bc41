//! The observer: recomputes the election outcome from public messages only.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::ElectionConfig;
use super::message::{round, ProtocolMessage};
use crate::ballot::{
    candidate_totals, compute_product, factor_tally, mask_all, unmask_factor, AnomalyReport, Mask,
    PrimeAssignment,
};
use crate::codec::Writer;
use crate::commitment::{verify_commitment, Commitment, Opening};
use crate::elgamal::{self, Ciphertext, DecryptionShare, PublicShare, ShareTarget};
use crate::group::GroupElement;
use crate::PartyId;

/// One accepted broadcast, in bus order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posted {
    pub sender: PartyId,
    pub round: u8,
    pub seq: u64,
    pub message: ProtocolMessage,
}

/// Digest record of one OT lane message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaneRecord {
    pub from: PartyId,
    pub to: PartyId,
    pub session: u64,
    pub phase: String,
    pub digest: [u8; 32],
}

/// The public record of an election.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub posted: Vec<Posted>,
    pub lane: Vec<LaneRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FinalizeError {
    #[error("election incomplete: {0}")]
    Incomplete(String),
    #[error("election aborted in round {round} by {by}; missing {missing:?}")]
    Aborted {
        round: u8,
        by: PartyId,
        missing: Vec<PartyId>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultStatus {
    /// Every check passed and the tally factored.
    Complete,
    /// A check failed or the tally is anomalous.
    Flagged,
    /// Allegations were filed; totals are withheld for review.
    Halted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flag {
    pub code: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub party: Option<PartyId>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllegationRecord {
    pub voter: PartyId,
    pub claim: String,
    pub received: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultCounters {
    pub broadcast_rounds: u32,
    pub ot_sessions: u32,
    pub votes: u32,
    pub shares: u32,
}

/// The outcome every observer computes identically from the same transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectionResult {
    pub election_id: String,
    pub status: ResultStatus,
    pub candidates: Vec<String>,
    pub totals: Option<Vec<u64>>,
    /// Table primes, ascending, and each one's exponent in the tally.
    pub primes: Vec<u64>,
    pub exponents: Option<Vec<u32>>,
    pub anomaly: Option<AnomalyReport>,
    pub allegations: Vec<AllegationRecord>,
    pub flags: Vec<Flag>,
    pub counters: ResultCounters,
    /// SHA-256 over the broadcasts sorted by (round, sender, seq) and the
    /// lane records sorted by (session, phase, sender).
    pub transcript_digest: String,
}

impl ElectionResult {
    pub fn is_clean(&self) -> bool {
        self.status == ResultStatus::Complete
    }

    /// `label: count` pairs in candidate order, as every front end prints them.
    pub fn formatted_totals(&self) -> Option<String> {
        let totals = self.totals.as_ref()?;
        Some(
            self.candidates
                .iter()
                .zip(totals)
                .map(|(c, n)| format!("{c}: {n}"))
                .collect::<Vec<_>>()
                .join(", "),
        )
    }
}

/// Order-independent digest of a transcript.
pub fn transcript_digest(transcript: &Transcript) -> [u8; 32] {
    let mut posted: Vec<&Posted> = transcript.posted.iter().collect();
    posted.sort_by_key(|p| (p.round, p.sender, p.seq));
    let mut lane: Vec<&LaneRecord> = transcript.lane.iter().collect();
    lane.sort_by(|a, b| (a.session, &a.phase, a.from, a.digest).cmp(&(b.session, &b.phase, b.from, b.digest)));
    let mut w = Writer::new();
    w.str("boardroom/transcript/v1").u32(posted.len() as u32);
    for p in posted {
        w.u8(p.round).u32(p.sender.0).u64(p.seq).bytes(&p.message.encode());
    }
    w.u32(lane.len() as u32);
    for l in lane {
        w.u64(l.session)
            .str(&l.phase)
            .u32(l.from.0)
            .u32(l.to.0)
            .fixed(&l.digest);
    }
    Sha256::digest(w.finish()).into()
}

struct Collected {
    key_shares: BTreeMap<PartyId, GroupElement>,
    commitments: Option<(Commitment, Commitment)>,
    votes: BTreeMap<PartyId, Ciphertext>,
    shares: BTreeMap<PartyId, DecryptionShare>,
    mapping: Option<Vec<GroupElement>>,
    receipts: BTreeMap<PartyId, bool>,
    allegations: Vec<AllegationRecord>,
    unmask: Option<ProtocolMessage>,
    flags: Vec<Flag>,
}

fn flag(code: &str, party: Option<PartyId>, detail: impl Into<String>) -> Flag {
    Flag {
        code: code.to_string(),
        party,
        detail: detail.into(),
    }
}

fn collect(config: &ElectionConfig, transcript: &Transcript) -> Result<Collected, FinalizeError> {
    use ProtocolMessage::*;
    let d = config.distributor;
    let receivers: BTreeSet<PartyId> = config.ot_receivers().into_iter().collect();
    let mut c = Collected {
        key_shares: BTreeMap::new(),
        commitments: None,
        votes: BTreeMap::new(),
        shares: BTreeMap::new(),
        mapping: None,
        receipts: BTreeMap::new(),
        allegations: Vec::new(),
        unmask: None,
        flags: Vec::new(),
    };
    let mut first_share_at: Option<usize> = None;
    let mut last_vote_at: Option<usize> = None;
    let mut share_order: Vec<PartyId> = Vec::new();

    for (pos, p) in transcript.posted.iter().enumerate() {
        let s = p.sender;
        let authorized = match &p.message {
            PublicKeyShare { .. } | EncryptedVote { .. } => config.is_voter(s),
            SetupCommitments { .. } | MappingReveal { .. } | UnmaskReveal { .. } => s == d,
            DistributorShare { .. } => s == d && !config.ea_mode,
            VoterShare { .. } => config.is_voter(s) && s != d,
            ReceiptConfirmation { .. } | Allegation { .. } => receivers.contains(&s),
            Abort { .. } => config.is_participant(s),
        };
        if !authorized || p.round != p.message.round() {
            c.flags.push(flag("unauthorized", Some(s), format!("{} not accepted from this sender", p.message)));
            continue;
        }
        let dup = |c: &mut Collected| {
            c.flags.push(flag("duplicate", Some(s), format!("repeated {}", p.message.kind())));
        };
        match &p.message {
            PublicKeyShare { value } => {
                if c.key_shares.contains_key(&s) {
                    dup(&mut c);
                } else {
                    c.key_shares.insert(s, value.clone());
                }
            }
            SetupCommitments { assignment, mask } => {
                if c.commitments.is_some() {
                    dup(&mut c);
                } else {
                    c.commitments = Some((*assignment, *mask));
                }
            }
            EncryptedVote { ciphertext } => {
                if c.votes.contains_key(&s) {
                    dup(&mut c);
                } else {
                    c.votes.insert(s, ciphertext.clone());
                    last_vote_at = Some(pos);
                }
            }
            DistributorShare { .. } | VoterShare { .. } => {
                if c.shares.contains_key(&s) {
                    dup(&mut c);
                } else {
                    c.shares.insert(s, p.message.decryption_share(s).unwrap());
                    first_share_at.get_or_insert(pos);
                    share_order.push(s);
                }
            }
            MappingReveal { masked } => {
                if c.mapping.is_some() {
                    dup(&mut c);
                } else {
                    c.mapping = Some(masked.clone());
                }
            }
            ReceiptConfirmation { .. } | Allegation { .. } => {
                if c.receipts.contains_key(&s) {
                    dup(&mut c);
                    continue;
                }
                let ok = matches!(p.message, ReceiptConfirmation { .. });
                c.receipts.insert(s, ok);
                if let Allegation { claim, received } = &p.message {
                    c.allegations.push(AllegationRecord {
                        voter: s,
                        claim: claim.clone(),
                        received: received.to_hex(),
                    });
                }
            }
            UnmaskReveal { .. } => {
                if c.unmask.is_some() {
                    dup(&mut c);
                } else {
                    c.unmask = Some(p.message.clone());
                }
            }
            Abort { round, missing } => {
                return Err(FinalizeError::Aborted {
                    round: *round,
                    by: s,
                    missing: missing.clone(),
                });
            }
        }
    }

    if let (Some(v), Some(sh)) = (last_vote_at, first_share_at) {
        if v > sh {
            c.flags.push(flag("fairness", None, "a vote was posted after decryption shares began"));
        }
    }
    if !config.ea_mode {
        if let Some(first) = share_order.first() {
            if *first != d {
                c.flags.push(flag(
                    "share-order",
                    Some(*first),
                    "a voter released its share before the distributor",
                ));
            }
        }
    }
    Ok(c)
}

/// Computes the election outcome from the transcript alone.
///
/// Errors when the election was aborted or is missing any required message;
/// no partial tally is ever produced.
pub fn finalize(config: &ElectionConfig, transcript: &Transcript) -> Result<ElectionResult, FinalizeError> {
    let params = &config.params;
    let mut c = collect(config, transcript)?;

    let voters = config.voter_ids();
    fn missing_from<T>(voters: &[PartyId], have: &BTreeMap<PartyId, T>) -> Vec<PartyId> {
        voters.iter().copied().filter(|v| !have.contains_key(v)).collect()
    }
    fn need<T>(what: &str, value: Option<T>) -> Result<T, FinalizeError> {
        value.ok_or_else(|| FinalizeError::Incomplete(format!("no {what}")))
    }
    let absent = missing_from(&voters, &c.key_shares);
    if !absent.is_empty() {
        return Err(FinalizeError::Incomplete(format!("key shares missing from {absent:?}")));
    }
    let (assignment_commitment, mask_commitment) = need("setup commitments", c.commitments)?;
    let absent = missing_from(&voters, &c.votes);
    if !absent.is_empty() {
        return Err(FinalizeError::Incomplete(format!("votes missing from {absent:?}")));
    }

    let public: Vec<PublicShare> = c
        .key_shares
        .iter()
        .map(|(owner, value)| PublicShare {
            value: value.clone(),
            owner: *owner,
        })
        .collect();
    let key = elgamal::aggregate(&public).map_err(|e| FinalizeError::Incomplete(e.to_string()))?;
    let votes: Vec<Ciphertext> = c.votes.values().cloned().collect();
    let a: Vec<GroupElement> = votes.iter().map(|v| v.a.clone()).collect();
    let a_product = elgamal::product_of(&a).map_err(|e| FinalizeError::Incomplete(e.to_string()))?;
    let target = ShareTarget::new(&config.context(), &a_product);
    let bad: Vec<PartyId> = c
        .shares
        .iter()
        .filter(|(_, s)| s.target != target)
        .map(|(p, _)| *p)
        .collect();
    for p in bad {
        c.shares.remove(&p);
        c.flags.push(flag("share-target", Some(p), "decryption share binds a different product"));
    }
    let absent = missing_from(&voters, &c.shares);
    if !absent.is_empty() {
        return Err(FinalizeError::Incomplete(format!("decryption shares missing from {absent:?}")));
    }
    let mapping = need("mapping reveal", c.mapping.clone())?;
    let unconfirmed: Vec<PartyId> = config
        .ot_receivers()
        .into_iter()
        .filter(|v| !c.receipts.contains_key(v))
        .collect();
    if !unconfirmed.is_empty() {
        return Err(FinalizeError::Incomplete(format!("receipts missing from {unconfirmed:?}")));
    }
    let Some(ProtocolMessage::UnmaskReveal {
        unmask,
        s,
        mask_nonce,
        assignment_payload,
        assignment_nonce,
    }) = c.unmask.clone()
    else {
        return Err(FinalizeError::Incomplete("no unmask reveal".into()));
    };

    let table = config
        .table()
        .map_err(|e| FinalizeError::Incomplete(e.to_string()))?;
    let mut flags = std::mem::take(&mut c.flags);

    let mask_opening = Opening {
        payload: s.to_bytes(params),
        nonce: mask_nonce,
    };
    if !verify_commitment(&mask_commitment, &mask_opening) {
        flags.push(flag("mask-opening", Some(config.distributor), "mask does not open its commitment"));
    }
    let assignment_opening = Opening {
        payload: assignment_payload.clone(),
        nonce: assignment_nonce,
    };
    let mut assignment = None;
    if !verify_commitment(&assignment_commitment, &assignment_opening) {
        flags.push(flag(
            "assignment-opening",
            Some(config.distributor),
            "assignment does not open its commitment",
        ));
    } else {
        match PrimeAssignment::from_payload(&assignment_payload, &table, &config.election_id) {
            Ok(a) => assignment = Some(a),
            Err(e) => flags.push(flag("assignment-opening", Some(config.distributor), e.to_string())),
        }
    }

    let mask = Mask::from_scalar(params, s);
    if let Some(assignment) = &assignment {
        let recomputed = mask_all(params, assignment, &mask).map(|m| m.values);
        if recomputed.as_ref() != Ok(&mapping) {
            flags.push(flag(
                "masked-list-mismatch",
                Some(config.distributor),
                "revealed masked list differs from primes times g^s",
            ));
        }
    }
    if unmask != unmask_factor(params, config.masked_votes(), &mask) {
        flags.push(flag("unmask-inconsistent", Some(config.distributor), "unmask factor does not match s"));
    }

    let rounds: BTreeSet<u8> = transcript.posted.iter().map(|p| p.round).collect();
    let sessions: BTreeSet<u64> = transcript
        .lane
        .iter()
        .filter(|l| l.phase == "transfer")
        .map(|l| l.session)
        .collect();
    let counters = ResultCounters {
        broadcast_rounds: rounds.len() as u32,
        ot_sessions: sessions.len() as u32,
        votes: c.votes.len() as u32,
        shares: c.shares.len() as u32,
    };

    let mut totals = None;
    let mut exponents = None;
    let mut anomaly = None;
    if c.allegations.is_empty() {
        if let Some(assignment) = &assignment {
            let shares: Vec<DecryptionShare> = c.shares.values().cloned().collect();
            let product = compute_product(&votes, &shares, &unmask, &key, &config.context())
                .map_err(|e| FinalizeError::Incomplete(e.to_string()))?;
            match factor_tally(&product, &table, config.voters) {
                Ok(e) => {
                    totals = Some(candidate_totals(&e, &table, assignment));
                    exponents = Some(e.exponents);
                }
                Err(report) => anomaly = Some(report),
            }
        }
    }

    let status = if !c.allegations.is_empty() {
        ResultStatus::Halted
    } else if !flags.is_empty() || anomaly.is_some() || totals.is_none() {
        ResultStatus::Flagged
    } else {
        ResultStatus::Complete
    };
    debug_assert!(rounds.iter().all(|r| (round::KEYS..=round::UNMASK).contains(r)));

    Ok(ElectionResult {
        election_id: config.election_id.clone(),
        status,
        candidates: config.candidates.clone(),
        totals,
        primes: table.primes().to_vec(),
        exponents,
        anomaly,
        allegations: c.allegations,
        flags,
        counters,
        transcript_digest: hex::encode(transcript_digest(transcript)),
    })
}

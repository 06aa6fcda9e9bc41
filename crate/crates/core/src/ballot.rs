//! Prime-encoded ballots: prime tables, the secret index assignment, masking,
//! and the factoring tally.
//!
//! Candidate `c` owns the index block `[c*lambda, (c+1)*lambda)`. The
//! distributor shuffles the table primes over the indices, so index `i` carries
//! prime `assignment[i]`, masked as `assignment[i] * g^s`. Because every prime
//! is at most `b` and `b^n < q`, the unmasked product of `n` votes is an
//! ordinary integer that factors by trial division.

use std::fmt;
use std::ops::Range;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{CryptoRng, Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elgamal::{self, AggregatePublicKey, Ciphertext, DecryptionShare, ElGamalError};
use crate::group::{GroupElement, GroupError, GroupParams, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BallotError {
    #[error("lambda, candidates and voters must all be at least 1")]
    EmptyDimension,
    #[error("largest prime {max_prime}^{voters} does not fit below the modulus; needs a modulus of at least {required_bits} bits")]
    ModulusTooSmall {
        max_prime: u64,
        voters: u32,
        required_bits: u64,
    },
    #[error("expected {expected} primes, got {got}")]
    WrongPrimeCount { expected: usize, got: usize },
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("prime {0} listed twice")]
    DuplicatePrime(u64),
    #[error("assignment is not a permutation of the prime table")]
    NotAPermutation,
    #[error("candidate {candidate} out of range for {candidates} candidates")]
    CandidateOutOfRange { candidate: usize, candidates: usize },
    #[error("malformed assignment payload: {0}")]
    Payload(String),
    #[error("{votes} votes but {shares} decryption shares")]
    CountMismatch { votes: usize, shares: usize },
    #[error("no votes to tally")]
    NoVotes,
    #[error(transparent)]
    ElGamal(#[from] ElGamalError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// All primes strictly below `limit` (sieve of Eratosthenes).
pub fn primes_below(limit: u64) -> Vec<u64> {
    if limit < 3 {
        return Vec::new();
    }
    let limit = limit as usize;
    let mut composite = vec![false; limit];
    let mut out = Vec::new();
    for i in 2..limit {
        if composite[i] {
            continue;
        }
        out.push(i as u64);
        let mut j = i * i;
        while j < limit {
            composite[j] = true;
            j += i;
        }
    }
    out
}

pub fn count_primes_below(limit: u64) -> usize {
    primes_below(limit).len()
}

/// The `k` smallest primes.
pub fn first_primes(k: usize) -> Vec<u64> {
    let mut limit = 32u64;
    loop {
        let primes = primes_below(limit);
        if primes.len() >= k {
            return primes[..k].to_vec();
        }
        limit *= 2;
    }
}

fn is_small_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

/// The `lambda * m` candidate primes, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeTable {
    lambda: u32,
    candidates: u32,
    primes: Vec<u64>,
}

impl PrimeTable {
    /// The smallest `lambda * m` primes; fails unless `b^n < q`.
    pub fn select(
        lambda: u32,
        candidates: u32,
        voters: u32,
        params: &GroupParams,
    ) -> Result<Self, BallotError> {
        if lambda == 0 || candidates == 0 {
            return Err(BallotError::EmptyDimension);
        }
        let primes = first_primes(lambda as usize * candidates as usize);
        Self::from_primes(lambda, candidates, voters, primes, params)
    }

    /// Accepts any admissible prime set.
    pub fn from_primes(
        lambda: u32,
        candidates: u32,
        voters: u32,
        mut primes: Vec<u64>,
        params: &GroupParams,
    ) -> Result<Self, BallotError> {
        if lambda == 0 || candidates == 0 || voters == 0 {
            return Err(BallotError::EmptyDimension);
        }
        let expected = lambda as usize * candidates as usize;
        if primes.len() != expected {
            return Err(BallotError::WrongPrimeCount {
                expected,
                got: primes.len(),
            });
        }
        primes.sort_unstable();
        for w in primes.windows(2) {
            if w[0] == w[1] {
                return Err(BallotError::DuplicatePrime(w[0]));
            }
        }
        if let Some(&p) = primes.iter().find(|&&p| !is_small_prime(p)) {
            return Err(BallotError::NotPrime(p));
        }
        let max_prime = *primes.last().unwrap();
        let bound = BigUint::from(max_prime).pow(voters);
        if &bound >= params.modulus() {
            return Err(BallotError::ModulusTooSmall {
                max_prime,
                voters,
                required_bits: bound.bits() + 1,
            });
        }
        Ok(PrimeTable {
            lambda,
            candidates,
            primes,
        })
    }

    pub fn lambda(&self) -> u32 {
        self.lambda
    }

    pub fn candidates(&self) -> u32 {
        self.candidates
    }

    pub fn primes(&self) -> &[u64] {
        &self.primes
    }

    pub fn len(&self) -> usize {
        self.primes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primes.is_empty()
    }

    pub fn max_prime(&self) -> u64 {
        *self.primes.last().unwrap()
    }

    pub fn position(&self, prime: u64) -> Option<usize> {
        self.primes.binary_search(&prime).ok()
    }

    pub fn blocks(&self) -> CandidateBlockMap {
        CandidateBlockMap {
            lambda: self.lambda,
            candidates: self.candidates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaPolicy {
    Ok,
    Warning(String),
}

/// Ballot secrecy against the distributor needs `lambda * m > n`: otherwise
/// a candidate's block may run out of unused indices and repeats become
/// visible. The warning is waived when an external authority distributes.
pub fn check_lambda_policy(lambda: u32, candidates: u32, voters: u32, ea_mode: bool) -> LambdaPolicy {
    let pool = lambda as u64 * candidates as u64;
    if ea_mode || pool > voters as u64 {
        LambdaPolicy::Ok
    } else {
        LambdaPolicy::Warning(format!(
            "lambda*m = {pool} does not exceed n = {voters}; the distributor can learn votes"
        ))
    }
}

/// Index -> candidate rule: contiguous blocks of `lambda` indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateBlockMap {
    pub lambda: u32,
    pub candidates: u32,
}

impl CandidateBlockMap {
    pub fn candidate(&self, index: usize) -> usize {
        index / self.lambda as usize
    }

    pub fn block(&self, candidate: usize) -> Result<Range<usize>, BallotError> {
        if candidate >= self.candidates as usize {
            return Err(BallotError::CandidateOutOfRange {
                candidate,
                candidates: self.candidates as usize,
            });
        }
        let l = self.lambda as usize;
        Ok(candidate * l..(candidate + 1) * l)
    }

    /// Uniform index inside the candidate's block.
    pub fn random_index<R: RngCore>(&self, candidate: usize, rng: &mut R) -> Result<usize, BallotError> {
        let block = self.block(candidate)?;
        Ok(rng.gen_range(block))
    }
}

/// Secret bijection from index to table prime.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeAssignment {
    by_index: Vec<u64>,
}

impl PrimeAssignment {
    pub fn shuffle<R: RngCore + CryptoRng>(table: &PrimeTable, rng: &mut R) -> Self {
        let mut by_index = table.primes.clone();
        by_index.shuffle(rng);
        PrimeAssignment { by_index }
    }

    pub fn from_order(table: &PrimeTable, by_index: Vec<u64>) -> Result<Self, BallotError> {
        let mut sorted = by_index.clone();
        sorted.sort_unstable();
        if sorted != table.primes {
            return Err(BallotError::NotAPermutation);
        }
        Ok(PrimeAssignment { by_index })
    }

    pub fn prime(&self, index: usize) -> u64 {
        self.by_index[index]
    }

    pub fn primes(&self) -> &[u64] {
        &self.by_index
    }

    pub fn len(&self) -> usize {
        self.by_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_index.is_empty()
    }

    /// Commitment payload: `p_0,p_1,...;lambda;m;election_id` in decimal.
    pub fn payload(&self, lambda: u32, candidates: u32, election_id: &str) -> Vec<u8> {
        let list: Vec<String> = self.by_index.iter().map(u64::to_string).collect();
        format!("{};{lambda};{candidates};{election_id}", list.join(",")).into_bytes()
    }

    /// Parses a payload and checks it against the expected table and election.
    pub fn from_payload(
        payload: &[u8],
        table: &PrimeTable,
        election_id: &str,
    ) -> Result<Self, BallotError> {
        let text = std::str::from_utf8(payload).map_err(|_| BallotError::Payload("not UTF-8".into()))?;
        let mut parts = text.splitn(4, ';');
        let mut next = |what: &str| {
            parts
                .next()
                .ok_or_else(|| BallotError::Payload(format!("missing {what}")))
        };
        let list = next("prime list")?;
        let lambda = next("lambda")?;
        let candidates = next("candidate count")?;
        let id = next("election id")?;
        if lambda != table.lambda.to_string() || candidates != table.candidates.to_string() {
            return Err(BallotError::Payload("dimensions differ from the election".into()));
        }
        if id != election_id {
            return Err(BallotError::Payload("election id differs".into()));
        }
        let by_index = list
            .split(',')
            .map(|p| p.parse::<u64>().map_err(|_| BallotError::Payload(format!("bad prime `{p}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_order(table, by_index)
    }
}

/// The distributor's mask `s` and `g^s`.
#[derive(Clone, PartialEq, Eq)]
pub struct Mask {
    s: Scalar,
    g_s: GroupElement,
}

impl Mask {
    pub fn random<R: RngCore + CryptoRng>(params: &GroupParams, rng: &mut R) -> Self {
        Self::from_scalar(params, params.random_scalar(rng))
    }

    pub fn from_scalar(params: &GroupParams, s: Scalar) -> Self {
        let g_s = params.generator().pow(&s);
        Mask { s, g_s }
    }

    pub fn scalar(&self) -> &Scalar {
        &self.s
    }

    pub fn element(&self) -> &GroupElement {
        &self.g_s
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mask").finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedPrimeList {
    pub values: Vec<GroupElement>,
}

impl MaskedPrimeList {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&GroupElement> {
        self.values.get(index)
    }
}

pub fn mask_all(
    params: &GroupParams,
    assignment: &PrimeAssignment,
    mask: &Mask,
) -> Result<MaskedPrimeList, BallotError> {
    let values = assignment
        .by_index
        .iter()
        .map(|&p| params.element_from_u64(p)?.mul(&mask.g_s))
        .collect::<Result<_, GroupError>>()?;
    Ok(MaskedPrimeList { values })
}

/// `g^{-k s}`, cancelling the mask carried by `k` masked votes.
pub fn unmask_factor(params: &GroupParams, masked_votes: u32, mask: &Mask) -> GroupElement {
    let ks = params.scalar_mul(&mask.s, &params.scalar_from_u64(masked_votes as u64));
    params.generator().pow(&params.scalar_neg(&ks))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TallyProduct(pub GroupElement);

/// `P = (prod b_k) * unmask * (prod shares)`.
///
/// `shares` must all bind the product of the votes' `a` components under
/// `context`.
pub fn compute_product(
    votes: &[Ciphertext],
    shares: &[DecryptionShare],
    unmask: &GroupElement,
    key: &AggregatePublicKey,
    context: &[u8],
) -> Result<TallyProduct, BallotError> {
    if votes.is_empty() {
        return Err(BallotError::NoVotes);
    }
    if votes.len() != shares.len() {
        return Err(BallotError::CountMismatch {
            votes: votes.len(),
            shares: shares.len(),
        });
    }
    let a: Vec<GroupElement> = votes.iter().map(|v| v.a.clone()).collect();
    let b: Vec<GroupElement> = votes.iter().map(|v| v.b.clone()).collect();
    let a_product = elgamal::product_of(&a)?;
    let target = elgamal::ShareTarget::new(context, &a_product);
    if shares.iter().any(|s| s.target != target) {
        return Err(ElGamalError::TargetMismatch.into());
    }
    let b_product = elgamal::product_of(&b)?.mul(unmask)?;
    Ok(TallyProduct(elgamal::combine(&b_product, shares, key)?))
}

/// Exponent of each table prime (table order) in an honest tally product.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExponentVector {
    pub exponents: Vec<u32>,
}

impl ExponentVector {
    pub fn total(&self) -> u64 {
        self.exponents.iter().map(|&a| a as u64).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyKind {
    NonunitResidue,
    NegativeExponentFound,
    SumMismatch,
}

impl fmt::Display for AnomalyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnomalyKind::NonunitResidue => "nonunit-residue",
            AnomalyKind::NegativeExponentFound => "negative-exponent-found",
            AnomalyKind::SumMismatch => "sum-mismatch",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub kind: AnomalyKind,
    pub details: String,
    /// Signed exponents per table prime: the reconstruction when the
    /// negative-exponent search succeeded, otherwise what trial division found.
    pub exponents: Vec<i64>,
    /// Decimal residue left after trial division of `P`.
    pub residue: String,
}

/// How far the negative-exponent search looks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBudget {
    pub max_subset: usize,
    /// Largest exponent tried per prime; `None` means `n`.
    pub max_exponent: Option<u32>,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            max_subset: 2,
            max_exponent: None,
        }
    }
}

fn trial_divide(value: &BigUint, primes: &[u64]) -> (Vec<u32>, BigUint) {
    let mut rest = value.clone();
    let exponents = primes
        .iter()
        .map(|&p| {
            let p = BigUint::from(p);
            let mut a = 0;
            loop {
                let (q, r) = rest.div_rem(&p);
                if !r.is_zero() || rest.is_zero() {
                    break;
                }
                rest = q;
                a += 1;
            }
            a
        })
        .collect();
    (exponents, rest)
}

pub fn factor_tally(
    product: &TallyProduct,
    table: &PrimeTable,
    voters: u32,
) -> Result<ExponentVector, AnomalyReport> {
    factor_tally_with(product, table, voters, SearchBudget::default())
}

pub fn factor_tally_with(
    product: &TallyProduct,
    table: &PrimeTable,
    voters: u32,
    budget: SearchBudget,
) -> Result<ExponentVector, AnomalyReport> {
    let (exponents, residue) = trial_divide(product.0.value(), &table.primes);
    let total: u64 = exponents.iter().map(|&a| a as u64).sum();
    if residue.is_one() {
        if total == voters as u64 {
            return Ok(ExponentVector { exponents });
        }
        return Err(AnomalyReport {
            kind: AnomalyKind::SumMismatch,
            details: format!("exponents sum to {total}, expected {voters}"),
            exponents: exponents.iter().map(|&a| a as i64).collect(),
            residue: residue.to_string(),
        });
    }
    if let Some(signed) = negative_exponent_search(product, table, voters, budget) {
        let negatives: Vec<String> = signed
            .iter()
            .zip(&table.primes)
            .filter(|(a, _)| **a < 0)
            .map(|(a, p)| format!("{a} for prime {p}"))
            .collect();
        return Err(AnomalyReport {
            kind: AnomalyKind::NegativeExponentFound,
            details: format!("product factors with exponent {}", negatives.join(", ")),
            exponents: signed,
            residue: residue.to_string(),
        });
    }
    Err(AnomalyReport {
        kind: AnomalyKind::NonunitResidue,
        details: "product does not factor over the prime table".into(),
        exponents: exponents.iter().map(|&a| a as i64).collect(),
        residue: residue.to_string(),
    })
}

/// Looks for `P * prod p_j^{e_j}` (mod q) that factors honestly, which
/// exposes votes carrying negative exponents.
fn negative_exponent_search(
    product: &TallyProduct,
    table: &PrimeTable,
    voters: u32,
    budget: SearchBudget,
) -> Option<Vec<i64>> {
    let params = product.0.params();
    let max_e = budget.max_exponent.unwrap_or(voters).max(1);
    let len = table.primes.len();
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    for size in 1..=budget.max_subset.min(len) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            subsets.push(idx.clone());
            let mut k = size;
            while k > 0 && idx[k - 1] == len - size + k - 1 {
                k -= 1;
            }
            if k == 0 {
                break;
            }
            idx[k - 1] += 1;
            for t in k..size {
                idx[t] = idx[t - 1] + 1;
            }
        }
    }
    for subset in subsets {
        let mut exps = vec![1u32; subset.len()];
        loop {
            let mut lifted = product.0.value().clone();
            for (&j, &e) in subset.iter().zip(&exps) {
                lifted = (lifted * BigUint::from(table.primes[j]).pow(e)) % params.modulus();
            }
            let (found, residue) = trial_divide(&lifted, &table.primes);
            if residue.is_one() {
                let mut signed: Vec<i64> = found.iter().map(|&a| a as i64).collect();
                for (&j, &e) in subset.iter().zip(&exps) {
                    signed[j] -= e as i64;
                }
                let sum: i64 = signed.iter().sum();
                if signed.iter().any(|&a| a < 0) && sum >= 0 {
                    return Some(signed);
                }
            }
            let mut k = 0;
            while k < exps.len() && exps[k] == max_e {
                exps[k] = 1;
                k += 1;
            }
            if k == exps.len() {
                break;
            }
            exps[k] += 1;
        }
    }
    None
}

/// Votes per candidate: the sum of exponents over the primes assigned to
/// that candidate's block.
pub fn candidate_totals(
    exponents: &ExponentVector,
    table: &PrimeTable,
    assignment: &PrimeAssignment,
) -> Vec<u64> {
    let blocks = table.blocks();
    let mut totals = vec![0u64; table.candidates as usize];
    for (index, &prime) in assignment.by_index.iter().enumerate() {
        if let Some(pos) = table.position(prime) {
            totals[blocks.candidate(index)] += exponents.exponents[pos] as u64;
        }
    }
    totals
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollusionFinding {
    pub g_s: GroupElement,
    pub prime_i: u64,
    pub prime_j: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CollusionFailure {
    #[error("the two masked values are identical")]
    Identical,
    #[error("no prime pair matches the ratio")]
    NoMatch,
    #[error("{0} prime pairs match the ratio")]
    Ambiguous(usize),
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// Two voters who pool their masked primes can strip the mask: the ratio
/// `masked_i / masked_j = p_i / p_j` does not depend on `s`, and for small
/// table primes only one ordered pair produces it.
pub fn collusion_unmask_demo(
    masked_i: &GroupElement,
    masked_j: &GroupElement,
    table: &PrimeTable,
) -> Result<CollusionFinding, CollusionFailure> {
    if masked_i == masked_j {
        return Err(CollusionFailure::Identical);
    }
    let params = masked_i.params();
    let ratio = masked_i.div(masked_j)?;
    let mut hits = Vec::new();
    for &pi in &table.primes {
        for &pj in &table.primes {
            if pi == pj {
                continue;
            }
            if ratio.mul_u64(pj)? == params.element_from_u64(pi)? {
                hits.push((pi, pj));
            }
        }
    }
    match hits.as_slice() {
        [] => Err(CollusionFailure::NoMatch),
        [(pi, pj)] => Ok(CollusionFinding {
            g_s: masked_i.div(&params.element_from_u64(*pi)?)?,
            prime_i: *pi,
            prime_j: *pj,
        }),
        many => Err(CollusionFailure::Ambiguous(many.len())),
    }
}

/// Number of ordered pairs the collusion search examines.
pub fn collusion_search_space(table: &PrimeTable) -> usize {
    let k = table.len();
    k * k.saturating_sub(1)
}

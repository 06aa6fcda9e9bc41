//! Arithmetic in the multiplicative group `Z_q^*` of a safe prime `q = 2r + 1`.
//!
//! The generator `g` is a quadratic residue, so it spans the subgroup of prime
//! order `r`. Exponents live in `[0, q-2]` and are reduced modulo `q - 1`.
//! Nothing here is constant time.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

thread_local! {
    static EXPONENTIATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of group exponentiations performed on the current thread so far.
///
/// Callers measure a phase by taking the difference of two readings.
pub fn exponentiation_count() -> u64 {
    EXPONENTIATIONS.with(Cell::get)
}

fn count_exponentiation() {
    EXPONENTIATIONS.with(|c| c.set(c.get() + 1));
}

/// Smallest modulus size accepted by [`generate_params`].
pub const MIN_BITS: u64 = 32;

/// Miller-Rabin rounds; each round errs with probability at most 1/4.
const MR_ROUNDS: usize = 40;

const TOY64_MODULUS: &str = "fffffffffffffa43";
const TOY64_GENERATOR: &str = "4";

// RFC 3526, 2048-bit MODP group (id 14).
const MODP2048_MODULUS: &str = concat!(
    "ffffffffffffffffc90fdaa22168c234c4c6628b80dc1cd129024e088a67cc74",
    "020bbea63b139b22514a08798e3404ddef9519b3cd3a431b302b0a6df25f1437",
    "4fe1356d6d51c245e485b576625e7ec6f44c42e9a637ed6b0bff5cb6f406b7ed",
    "ee386bfb5a899fa5ae9f24117c4b1fe649286651ece45b3dc2007cb8a163bf05",
    "98da48361c55d39a69163fa8fd24cf5f83655d23dca3ad961c62f356208552bb",
    "9ed529077096966d670c354e4abc9804f1746c08ca18217c32905e462e36ce3b",
    "e39e772c180e86039b2783a2ec07a28fb5c55df06f4c52c9de2bcbf695581718",
    "3995497cea956ae515d2261898fa051015728e5a8aacaa68ffffffffffffffff",
);
const MODP2048_GENERATOR: &str = "2";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("elements belong to different groups")]
    ParamsMismatch,
    #[error("value {0} is outside [1, q-1]")]
    OutOfRange(String),
    #[error("bit length {0} is below the {MIN_BITS}-bit floor")]
    BitLengthTooSmall(u64),
    #[error("no {bits}-bit safe prime found after {attempts} candidates")]
    SearchExhausted { bits: u64, attempts: u64 },
    #[error("malformed encoding: {0}")]
    Encoding(String),
    #[error("unknown parameter preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid group parameters: {}", join_issues(.0))]
    Invalid(Vec<ParamIssue>),
}

fn join_issues(issues: &[ParamIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// A failed structural check on a [`GroupParams`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamIssue {
    #[error("modulus not prime")]
    ModulusNotPrime,
    #[error("modulus is not a safe prime")]
    NotSafePrime,
    #[error("trivial generator")]
    TrivialGenerator,
    #[error("generator outside [2, q-1]")]
    GeneratorOutOfRange,
    #[error("generator does not have order (q-1)/2")]
    WrongGeneratorOrder,
}

/// Named parameter sets shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// 64-bit safe prime for fast tests and demos. Offers no security.
    Toy64,
    /// RFC 3526 2048-bit MODP group.
    Modp2048,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Toy64 => "toy64",
            Preset::Modp2048 => "modp2048",
        }
    }

    pub fn params(self) -> GroupParams {
        let (q, g) = match self {
            Preset::Toy64 => (TOY64_MODULUS, TOY64_GENERATOR),
            Preset::Modp2048 => (MODP2048_MODULUS, MODP2048_GENERATOR),
        };
        GroupParams::from_hex(q, g).expect("preset constants are well formed")
    }
}

impl FromStr for Preset {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toy64" => Ok(Preset::Toy64),
            "modp2048" => Ok(Preset::Modp2048),
            other => Err(GroupError::UnknownPreset(other.to_string())),
        }
    }
}

/// On-disk form of a parameter set: lowercase hex strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub modulus: String,
    pub generator: String,
}

struct Inner {
    modulus: BigUint,
    generator: BigUint,
    /// q - 1, the modulus for exponent arithmetic.
    order: BigUint,
    /// (q - 1) / 2.
    subgroup_order: BigUint,
    bits: u64,
    width: usize,
}

/// Modulus and generator of the group all election values live in.
///
/// Cheap to clone; values are shared behind an `Arc`.
#[derive(Clone)]
pub struct GroupParams(Arc<Inner>);

impl GroupParams {
    /// Builds parameters with range checks only. Use [`validate_params`] for
    /// the full structural checks.
    pub fn new(modulus: BigUint, generator: BigUint) -> Result<Self, GroupError> {
        if modulus < BigUint::from(5u32) || modulus.is_even() {
            return Err(GroupError::OutOfRange(format!("modulus {modulus}")));
        }
        if generator.is_zero() || generator >= modulus {
            return Err(GroupError::OutOfRange(format!("generator {generator}")));
        }
        let order = &modulus - 1u32;
        let subgroup_order = &order >> 1;
        let bits = modulus.bits();
        Ok(GroupParams(Arc::new(Inner {
            width: bits.div_ceil(8) as usize,
            modulus,
            generator,
            order,
            subgroup_order,
            bits,
        })))
    }

    pub fn from_u64(modulus: u64, generator: u64) -> Result<Self, GroupError> {
        Self::new(BigUint::from(modulus), BigUint::from(generator))
    }

    pub fn from_hex(modulus: &str, generator: &str) -> Result<Self, GroupError> {
        let parse = |s: &str| {
            BigUint::parse_bytes(s.trim().as_bytes(), 16)
                .ok_or_else(|| GroupError::Encoding(format!("not a hex integer: {s:?}")))
        };
        Self::new(parse(modulus)?, parse(generator)?)
    }

    pub fn from_file(file: &ParamsFile) -> Result<Self, GroupError> {
        Self::from_hex(&file.modulus, &file.generator)
    }

    pub fn to_file(&self) -> ParamsFile {
        ParamsFile {
            modulus: self.0.modulus.to_str_radix(16),
            generator: self.0.generator.to_str_radix(16),
        }
    }

    pub fn toy64() -> Self {
        Preset::Toy64.params()
    }

    pub fn modp2048() -> Self {
        Preset::Modp2048.params()
    }

    pub fn modulus(&self) -> &BigUint {
        &self.0.modulus
    }

    /// `q - 1`; scalars are reduced modulo this value.
    pub fn order(&self) -> &BigUint {
        &self.0.order
    }

    pub fn subgroup_order(&self) -> &BigUint {
        &self.0.subgroup_order
    }

    pub fn bit_length(&self) -> u64 {
        self.0.bits
    }

    /// Width in bytes of the canonical element encoding.
    pub fn element_len(&self) -> usize {
        self.0.width
    }

    pub fn generator(&self) -> GroupElement {
        GroupElement {
            params: self.clone(),
            value: self.0.generator.clone(),
        }
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement {
            params: self.clone(),
            value: BigUint::one(),
        }
    }

    pub fn element(&self, value: BigUint) -> Result<GroupElement, GroupError> {
        if value.is_zero() || value >= self.0.modulus {
            return Err(GroupError::OutOfRange(value.to_string()));
        }
        Ok(GroupElement {
            params: self.clone(),
            value,
        })
    }

    pub fn element_from_u64(&self, value: u64) -> Result<GroupElement, GroupError> {
        self.element(BigUint::from(value))
    }

    /// Decodes the fixed-width big-endian encoding produced by
    /// [`GroupElement::to_bytes`].
    pub fn element_from_bytes(&self, bytes: &[u8]) -> Result<GroupElement, GroupError> {
        if bytes.len() != self.0.width {
            return Err(GroupError::Encoding(format!(
                "element is {} bytes, expected {}",
                bytes.len(),
                self.0.width
            )));
        }
        self.element(BigUint::from_bytes_be(bytes))
    }

    pub fn scalar(&self, value: BigUint) -> Scalar {
        Scalar(value % &self.0.order)
    }

    pub fn scalar_from_u64(&self, value: u64) -> Scalar {
        self.scalar(BigUint::from(value))
    }

    pub fn scalar_from_bytes(&self, bytes: &[u8]) -> Result<Scalar, GroupError> {
        let value = BigUint::from_bytes_be(bytes);
        if value >= self.0.order {
            return Err(GroupError::Encoding("scalar out of range".into()));
        }
        Ok(Scalar(value))
    }

    pub fn scalar_add(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 + &b.0) % &self.0.order)
    }

    pub fn scalar_sub(&self, a: &Scalar, b: &Scalar) -> Scalar {
        self.scalar_add(a, &self.scalar_neg(b))
    }

    pub fn scalar_mul(&self, a: &Scalar, b: &Scalar) -> Scalar {
        Scalar((&a.0 * &b.0) % &self.0.order)
    }

    pub fn scalar_neg(&self, a: &Scalar) -> Scalar {
        if a.0.is_zero() {
            Scalar::zero()
        } else {
            Scalar(&self.0.order - &a.0)
        }
    }

    /// Uniform scalar in `[0, q-2]`.
    pub fn random_scalar<R: RngCore + CryptoRng>(&self, rng: &mut R) -> Scalar {
        Scalar(rng.gen_biguint_below(&self.0.order))
    }

    /// Uniform element of the subgroup generated by `g`, drawn as `g^t`.
    pub fn random_element<R: RngCore + CryptoRng>(&self, rng: &mut R) -> GroupElement {
        self.generator().pow(&self.random_scalar(rng))
    }

    /// Whether `x` lies in the order-r subgroup (`x^r = 1`).
    pub fn in_subgroup(&self, x: &GroupElement) -> bool {
        x.params == *self && x.pow_big(&self.0.subgroup_order).is_identity()
    }
}

impl PartialEq for GroupParams {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.modulus == other.0.modulus && self.0.generator == other.0.generator)
    }
}

impl Eq for GroupParams {}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("bits", &self.0.bits)
            .field("generator", &self.0.generator)
            .finish_non_exhaustive()
    }
}

/// An exponent in `[0, q-2]`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn zero() -> Self {
        Scalar(BigUint::zero())
    }

    pub fn value(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Big-endian bytes, zero-padded to the group's element width.
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        pad_be(&self.0, params.element_len())
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({})", self.0)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// A value in `[1, q-1]` tied to its group.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupElement {
    params: GroupParams,
    value: BigUint,
}

impl GroupElement {
    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn value(&self) -> &BigUint {
        &self.value
    }

    pub fn to_u64(&self) -> Option<u64> {
        self.value.to_u64()
    }

    pub fn is_identity(&self) -> bool {
        self.value.is_one()
    }

    /// `self^exp mod q`. Counts toward [`exponentiation_count`].
    pub fn pow(&self, exp: &Scalar) -> GroupElement {
        self.pow_big(&exp.0)
    }

    /// `self^k` for a small non-negative integer exponent.
    pub fn pow_u64(&self, k: u64) -> GroupElement {
        self.pow_big(&BigUint::from(k))
    }

    fn pow_big(&self, exp: &BigUint) -> GroupElement {
        count_exponentiation();
        GroupElement {
            params: self.params.clone(),
            value: self.value.modpow(exp, &self.params.0.modulus),
        }
    }

    pub fn mul(&self, other: &GroupElement) -> Result<GroupElement, GroupError> {
        if self.params != other.params {
            return Err(GroupError::ParamsMismatch);
        }
        Ok(GroupElement {
            params: self.params.clone(),
            value: (&self.value * &other.value) % &self.params.0.modulus,
        })
    }

    pub fn mul_u64(&self, k: u64) -> Result<GroupElement, GroupError> {
        let other = self.params.element(BigUint::from(k) % &self.params.0.modulus)?;
        self.mul(&other)
    }

    pub fn inverse(&self) -> GroupElement {
        let value = self
            .value
            .modinv(&self.params.0.modulus)
            .expect("nonzero residues are invertible modulo a prime");
        GroupElement {
            params: self.params.clone(),
            value,
        }
    }

    pub fn div(&self, other: &GroupElement) -> Result<GroupElement, GroupError> {
        self.mul(&other.inverse())
    }

    /// Canonical encoding: big-endian, zero-padded to `ceil(bits/8)` bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        pad_be(&self.value, self.params.element_len())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({})", self.value)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.value, f)
    }
}

fn pad_be(value: &BigUint, width: usize) -> Vec<u8> {
    let raw = value.to_bytes_be();
    if raw.len() >= width {
        return raw;
    }
    let mut out = vec![0u8; width - raw.len()];
    out.extend_from_slice(&raw);
    out
}

const SMALL_PRIMES: [u32; 53] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

/// Miller-Rabin with `rounds` random bases, after trial division by small primes.
pub fn is_probable_prime<R: RngCore>(n: &BigUint, rounds: usize, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    if *n == two {
        return true;
    }
    if n.is_even() {
        return false;
    }
    for &p in &SMALL_PRIMES {
        let p = BigUint::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let twos = n_minus_1.trailing_zeros().unwrap_or(0);
    let d = &n_minus_1 >> twos;
    let three = BigUint::from(3u32);
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &(n - 1u32).max(three.clone()));
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..twos {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Searches for a safe prime of exactly `bit_length` bits and pairs it with `g = 4`.
pub fn generate_params<R: RngCore + CryptoRng>(
    bit_length: u64,
    rng: &mut R,
) -> Result<GroupParams, GroupError> {
    let budget = bit_length.saturating_mul(bit_length).saturating_mul(4);
    generate_params_with_budget(bit_length, budget, rng)
}

pub fn generate_params_with_budget<R: RngCore + CryptoRng>(
    bit_length: u64,
    max_candidates: u64,
    rng: &mut R,
) -> Result<GroupParams, GroupError> {
    if bit_length < MIN_BITS {
        return Err(GroupError::BitLengthTooSmall(bit_length));
    }
    let top = BigUint::one() << (bit_length - 2);
    for _ in 0..max_candidates {
        // r has bit_length - 1 bits, so q = 2r + 1 has exactly bit_length bits.
        let r = rng.gen_biguint(bit_length - 1) | &top | BigUint::one();
        if !sieve_safe_candidate(&r) {
            continue;
        }
        if !is_probable_prime(&r, 2, rng) {
            continue;
        }
        let q = (&r << 1) + 1u32;
        if is_probable_prime(&q, MR_ROUNDS, rng) && is_probable_prime(&r, MR_ROUNDS, rng) {
            return GroupParams::new(q, BigUint::from(4u32));
        }
    }
    Err(GroupError::SearchExhausted {
        bits: bit_length,
        attempts: max_candidates,
    })
}

// Rejects r when r or 2r+1 has a small factor.
fn sieve_safe_candidate(r: &BigUint) -> bool {
    SMALL_PRIMES.iter().all(|&p| {
        let rem = (r % p).to_u32().unwrap_or(0);
        rem != 0 && rem != (p - 1) / 2
    })
}

/// Checks every structural invariant of `params`, naming each failure.
///
/// Primality witnesses are derived from the modulus, so the verdict is
/// deterministic.
pub fn validate_params(params: &GroupParams) -> Result<(), Vec<ParamIssue>> {
    let q = params.modulus();
    let seed: [u8; 32] = Sha256::digest(q.to_bytes_be()).into();
    let mut rng = ChaCha20Rng::from_seed(seed);
    let mut issues = Vec::new();

    if !is_probable_prime(q, MR_ROUNDS, &mut rng) {
        issues.push(ParamIssue::ModulusNotPrime);
    } else if !is_probable_prime(params.subgroup_order(), MR_ROUNDS, &mut rng) {
        issues.push(ParamIssue::NotSafePrime);
    }

    let g = &params.0.generator;
    if g.is_one() {
        issues.push(ParamIssue::TrivialGenerator);
    } else if *g < BigUint::from(2u32) || g >= q {
        issues.push(ParamIssue::GeneratorOutOfRange);
    } else if *g == params.0.order
        || !g.modpow(params.subgroup_order(), q).is_one()
    {
        // q - 1 has order 2, never r.
        issues.push(ParamIssue::WrongGeneratorOrder);
    }

    if issues.is_empty() {
        Ok(())
    } else {
        Err(issues)
    }
}

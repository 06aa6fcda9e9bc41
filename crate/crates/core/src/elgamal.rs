//! n-of-n threshold ElGamal over [`crate::group`].
//!
//! Each party `i` holds a private exponent `d_i` and publishes `g^{d_i}`; the
//! election key is `e = prod g^{d_i}`. A ciphertext `(g^x, M e^x)` only opens
//! once every party has released its decryption share `(g^x)^{-d_i}`.

use std::collections::BTreeSet;
use std::fmt;

use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::group::{GroupElement, GroupError, GroupParams, Scalar};
use crate::PartyId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElGamalError {
    #[error("no shares supplied")]
    Empty,
    #[error("party {0} contributed more than once")]
    DuplicateOwner(PartyId),
    #[error("missing decryption share from party {0}")]
    MissingContributor(PartyId),
    #[error("party {0} is not a contributor to this key")]
    UnknownContributor(PartyId),
    #[error("decryption shares bind different products")]
    TargetMismatch,
    #[error(transparent)]
    Group(#[from] GroupError),
}

/// A party's secret key share. Never leaves the owning party.
#[derive(Clone)]
pub struct PrivateShare {
    d: Scalar,
    owner: PartyId,
    params: GroupParams,
}

impl PrivateShare {
    pub fn owner(&self) -> PartyId {
        self.owner
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn secret(&self) -> &Scalar {
        &self.d
    }
}

impl fmt::Debug for PrivateShare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrivateShare")
            .field("owner", &self.owner)
            .finish_non_exhaustive()
    }
}

/// `g^{d_i}` as broadcast by its owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicShare {
    pub value: GroupElement,
    pub owner: PartyId,
}

pub fn keygen<R: RngCore + CryptoRng>(
    params: &GroupParams,
    owner: PartyId,
    rng: &mut R,
) -> (PrivateShare, PublicShare) {
    keygen_from_secret(params, owner, params.random_scalar(rng))
}

/// Derives the key pair for a known secret. Used for reloading persisted keys
/// and by tests that need to force `d`.
pub fn keygen_from_secret(
    params: &GroupParams,
    owner: PartyId,
    d: Scalar,
) -> (PrivateShare, PublicShare) {
    let value = params.generator().pow(&d);
    (
        PrivateShare {
            d,
            owner,
            params: params.clone(),
        },
        PublicShare { value, owner },
    )
}

/// The joint public key `e` and the parties whose shares it contains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregatePublicKey {
    element: GroupElement,
    contributors: Vec<PartyId>,
}

impl AggregatePublicKey {
    pub fn element(&self) -> &GroupElement {
        &self.element
    }

    pub fn contributors(&self) -> &[PartyId] {
        &self.contributors
    }

    pub fn params(&self) -> &GroupParams {
        self.element.params()
    }
}

pub fn aggregate(shares: &[PublicShare]) -> Result<AggregatePublicKey, ElGamalError> {
    let first = shares.first().ok_or(ElGamalError::Empty)?;
    let mut seen = BTreeSet::new();
    let mut element = first.value.params().identity();
    for share in shares {
        if !seen.insert(share.owner) {
            return Err(ElGamalError::DuplicateOwner(share.owner));
        }
        element = element.mul(&share.value)?;
    }
    Ok(AggregatePublicKey {
        element,
        contributors: shares.iter().map(|s| s.owner).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    /// `g^x`
    pub a: GroupElement,
    /// `M e^x`
    pub b: GroupElement,
}

impl Ciphertext {
    /// Componentwise product; decrypts to the product of the plaintexts.
    pub fn mul(&self, other: &Ciphertext) -> Result<Ciphertext, GroupError> {
        Ok(Ciphertext {
            a: self.a.mul(&other.a)?,
            b: self.b.mul(&other.b)?,
        })
    }
}

/// What a voter keeps after casting: enough to prove the vote to anyone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptionRecord {
    pub ciphertext: Ciphertext,
    pub randomness: Scalar,
    pub plaintext: GroupElement,
}

impl EncryptionRecord {
    /// Re-encrypts the plaintext with the recorded randomness and compares.
    pub fn reproduces(&self, key: &AggregatePublicKey) -> bool {
        reencrypt_matches(&self.ciphertext, &self.plaintext, &self.randomness, key)
    }
}

/// Whether `(g^x, m e^x)` equals `ciphertext`. Anyone holding the claimed
/// plaintext and randomness can run this.
pub fn reencrypt_matches(
    ciphertext: &Ciphertext,
    plaintext: &GroupElement,
    randomness: &Scalar,
    key: &AggregatePublicKey,
) -> bool {
    encrypt_with_randomness(plaintext, key, randomness.clone())
        .is_ok_and(|r| r.ciphertext == *ciphertext)
}

pub fn encrypt<R: RngCore + CryptoRng>(
    m: &GroupElement,
    key: &AggregatePublicKey,
    rng: &mut R,
) -> Result<EncryptionRecord, ElGamalError> {
    let x = key.params().random_scalar(rng);
    encrypt_with_randomness(m, key, x)
}

pub fn encrypt_with_randomness(
    m: &GroupElement,
    key: &AggregatePublicKey,
    x: Scalar,
) -> Result<EncryptionRecord, ElGamalError> {
    let a = key.params().generator().pow(&x);
    let b = m.mul(&key.element.pow(&x))?;
    Ok(EncryptionRecord {
        ciphertext: Ciphertext { a, b },
        randomness: x,
        plaintext: m.clone(),
    })
}

/// Digest binding a decryption share to the exact product it decrypts.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShareTarget(pub [u8; 32]);

impl ShareTarget {
    pub fn new(context: &[u8], product: &GroupElement) -> Self {
        let mut h = Sha256::new();
        h.update(b"boardroom/share-target/v1");
        h.update((context.len() as u32).to_be_bytes());
        h.update(context);
        h.update(product.to_bytes());
        ShareTarget(h.finalize().into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for ShareTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ShareTarget({})", &self.to_hex()[..16])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecryptionShare {
    pub value: GroupElement,
    pub owner: PartyId,
    pub target: ShareTarget,
}

/// Multiplies the `a` components together.
pub fn product_of(values: &[GroupElement]) -> Result<GroupElement, ElGamalError> {
    let first = values.first().ok_or(ElGamalError::Empty)?;
    values[1..]
        .iter()
        .try_fold(first.clone(), |acc, v| acc.mul(v))
        .map_err(Into::into)
}

/// `(prod a_k)^{-d}` with a target binding `context` and the product.
pub fn share_for_product(
    a_values: &[GroupElement],
    key: &PrivateShare,
    context: &[u8],
) -> Result<DecryptionShare, ElGamalError> {
    let product = product_of(a_values)?;
    let neg_d = key.params.scalar_neg(&key.d);
    Ok(DecryptionShare {
        value: product.pow(&neg_d),
        owner: key.owner,
        target: ShareTarget::new(context, &product),
    })
}

/// Multiplies `b_product` by every share, with no completeness checks.
pub fn apply_shares(
    b_product: &GroupElement,
    shares: &[DecryptionShare],
) -> Result<GroupElement, ElGamalError> {
    shares
        .iter()
        .try_fold(b_product.clone(), |acc, s| acc.mul(&s.value))
        .map_err(Into::into)
}

/// Full decryption: requires exactly one share from each contributor to
/// `key`, all bound to the same target.
pub fn combine(
    b_product: &GroupElement,
    shares: &[DecryptionShare],
    key: &AggregatePublicKey,
) -> Result<GroupElement, ElGamalError> {
    let first = shares.first().ok_or(ElGamalError::Empty)?;
    if shares.iter().any(|s| s.target != first.target) {
        return Err(ElGamalError::TargetMismatch);
    }
    let mut seen = BTreeSet::new();
    for s in shares {
        if !key.contributors.contains(&s.owner) {
            return Err(ElGamalError::UnknownContributor(s.owner));
        }
        if !seen.insert(s.owner) {
            return Err(ElGamalError::DuplicateOwner(s.owner));
        }
    }
    if let Some(missing) = key.contributors.iter().find(|c| !seen.contains(c)) {
        return Err(ElGamalError::MissingContributor(*missing));
    }
    apply_shares(b_product, shares)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn toy() -> GroupParams {
        GroupParams::toy64()
    }

    fn keys(n: u32, rng: &mut ChaCha20Rng) -> (Vec<PrivateShare>, AggregatePublicKey) {
        let p = toy();
        let (privs, pubs): (Vec<_>, Vec<_>) =
            (0..n).map(|i| keygen(&p, PartyId(i), rng)).unzip();
        (privs, aggregate(&pubs).unwrap())
    }

    #[test]
    fn forced_zero_secret_gives_identity() {
        let (_, public) = keygen_from_secret(&toy(), PartyId(0), Scalar::zero());
        assert!(public.value.is_identity());
    }

    #[test]
    fn seeded_keygen_is_stable() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let (_, public) = keygen(&toy(), PartyId(0), &mut rng);
        assert_eq!(public.value.to_hex(), "d0184b4fb803c146");
        let mut other = ChaCha20Rng::seed_from_u64(43);
        assert_ne!(keygen(&toy(), PartyId(0), &mut other).1, public);
    }

    #[test]
    fn aggregate_rules() {
        let p = toy();
        let (_, a) = keygen_from_secret(&p, PartyId(0), p.scalar_from_u64(5));
        let single = aggregate(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single.element(), &a.value);

        let (_, b) = keygen_from_secret(&p, PartyId(1), p.scalar_from_u64(11));
        let joint = aggregate(&[a.clone(), b]).unwrap();
        assert_eq!(joint.element(), &p.generator().pow_u64(16));

        assert_eq!(
            aggregate(&[a.clone(), a]),
            Err(ElGamalError::DuplicateOwner(PartyId(0)))
        );
        assert_eq!(aggregate(&[]), Err(ElGamalError::Empty));
    }

    #[test]
    fn four_party_key_matches_independent_product() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let p = toy();
        let pubs: Vec<_> = (0..4).map(|i| keygen(&p, PartyId(i), &mut rng).1).collect();
        let q = p.modulus();
        let expected = pubs
            .iter()
            .fold(num_bigint::BigUint::from(1u32), |acc, s| acc * s.value.value() % q);
        assert_eq!(aggregate(&pubs).unwrap().element().value(), &expected);
    }

    #[test]
    fn zero_randomness_leaves_plaintext_in_clear() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let (_, key) = keys(2, &mut rng);
        let m = toy().element_from_u64(77).unwrap();
        let rec = encrypt_with_randomness(&m, &key, Scalar::zero()).unwrap();
        assert!(rec.ciphertext.a.is_identity());
        assert_eq!(rec.ciphertext.b, m);
    }

    #[test]
    fn q23_hand_checked_encryption() {
        let p = GroupParams::from_u64(23, 5).unwrap();
        // d = 3: e = 5^3 = 125 mod 23 = 10.
        let (private, public) = keygen_from_secret(&p, PartyId(0), p.scalar_from_u64(3));
        assert_eq!(public.value.to_u64(), Some(10));
        let key = aggregate(&[public]).unwrap();
        // x = 2: a = 25 mod 23 = 2, b = 7 * 100 mod 23 = 700 mod 23 = 10.
        let m = p.element_from_u64(7).unwrap();
        let rec = encrypt_with_randomness(&m, &key, p.scalar_from_u64(2)).unwrap();
        assert_eq!(rec.ciphertext.a.to_u64(), Some(2));
        assert_eq!(rec.ciphertext.b.to_u64(), Some(10));
        // Share: 2^{-3} = 2^{19} mod 23 = 3 (since 2^3 = 8 and 8 * 3 = 24).
        let share = share_for_product(&[rec.ciphertext.a.clone()], &private, b"ctx").unwrap();
        assert_eq!(share.value.to_u64(), Some(3));
        assert_eq!(combine(&rec.ciphertext.b, &[share], &key).unwrap(), m);
    }

    #[test]
    fn trivial_shares() {
        let p = toy();
        let (zero_key, _) = keygen_from_secret(&p, PartyId(0), Scalar::zero());
        let x = p.element_from_u64(1234).unwrap();
        assert!(share_for_product(&[x], &zero_key, b"").unwrap().value.is_identity());

        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let (k, _) = keygen(&p, PartyId(0), &mut rng);
        let ones = vec![p.identity(); 3];
        assert!(share_for_product(&ones, &k, b"").unwrap().value.is_identity());
        assert_eq!(share_for_product(&[], &k, b"").unwrap_err(), ElGamalError::Empty);
    }

    #[test]
    fn three_party_round_trip() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (privs, key) = keys(3, &mut rng);
        let m = toy().element_from_u64(7).unwrap();
        let rec = encrypt(&m, &key, &mut rng).unwrap();
        assert!(rec.reproduces(&key));
        let a = [rec.ciphertext.a.clone()];
        let shares: Vec<_> = privs
            .iter()
            .map(|k| share_for_product(&a, k, b"e1").unwrap())
            .collect();
        assert_eq!(combine(&rec.ciphertext.b, &shares, &key).unwrap(), m);

        // Dropping a share is refused by combine and wrong when forced.
        assert_eq!(
            combine(&rec.ciphertext.b, &shares[..2], &key),
            Err(ElGamalError::MissingContributor(PartyId(2)))
        );
        assert_ne!(apply_shares(&rec.ciphertext.b, &shares[..2]).unwrap(), m);

        let mut dup = shares.clone();
        dup[2] = dup[1].clone();
        assert_eq!(
            combine(&rec.ciphertext.b, &dup, &key),
            Err(ElGamalError::DuplicateOwner(PartyId(1)))
        );

        let stray = share_for_product(&a, &privs[0], b"other").unwrap();
        let mut mixed = shares.clone();
        mixed[0] = stray;
        assert_eq!(
            combine(&rec.ciphertext.b, &mixed, &key),
            Err(ElGamalError::TargetMismatch)
        );
    }

    #[test]
    fn product_pipeline_matches_plaintext_product() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let (privs, key) = keys(4, &mut rng);
        let p = toy();
        let plain = [2u64, 3, 5, 7];
        let cts: Vec<_> = plain
            .iter()
            .map(|&v| encrypt(&p.element_from_u64(v).unwrap(), &key, &mut rng).unwrap())
            .collect();
        let a: Vec<_> = cts.iter().map(|r| r.ciphertext.a.clone()).collect();
        let b = product_of(&cts.iter().map(|r| r.ciphertext.b.clone()).collect::<Vec<_>>())
            .unwrap();
        let shares: Vec<_> = privs
            .iter()
            .map(|k| share_for_product(&a, k, b"x").unwrap())
            .collect();
        assert_eq!(combine(&b, &shares, &key).unwrap().to_u64(), Some(210));
    }

    #[test]
    fn record_rejects_wrong_claims() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (_, key) = keys(2, &mut rng);
        let p = toy();
        let rec = encrypt(&p.element_from_u64(11).unwrap(), &key, &mut rng).unwrap();
        let other_x = p.scalar_add(&rec.randomness, &p.scalar_from_u64(1));
        assert!(!reencrypt_matches(&rec.ciphertext, &rec.plaintext, &other_x, &key));
        let other_m = p.element_from_u64(13).unwrap();
        assert!(!reencrypt_matches(&rec.ciphertext, &other_m, &rec.randomness, &key));
    }
}

//! 1-out-of-2 oblivious transfer.
//!
//! The sender publishes a random subgroup element `c`. The receiver knows the
//! discrete log `k` of `pk_b = g^k` and sends `pk0`; the sender sets
//! `pk1 = c / pk0`. Knowing the logs of both keys would reveal the log of `c`,
//! so even a malicious receiver can open at most one branch. Each branch is
//! encrypted under a fresh Diffie-Hellman key `pk_i^{y_i}`.

use rand::{CryptoRng, RngCore};

use super::cipher;
use super::OtError;
use crate::group::{GroupElement, GroupParams, Scalar};

/// Longest string accepted by a single transfer.
pub const MAX_STRING_LEN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtSenderSetup {
    pub c: GroupElement,
    pub instance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtReceiverKeys {
    pub pk0: GroupElement,
    pub instance: u64,
}

/// The receiver's private exponent for one instance.
#[derive(Debug, Clone)]
pub struct OtReceiverSecret {
    pub k: Scalar,
    pub choice: u8,
    pub instance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtPayload {
    pub instance: u64,
    /// `g^{y_0}`, `g^{y_1}`
    pub ephemeral: [GroupElement; 2],
    pub blobs: [Vec<u8>; 2],
}

pub fn ot2_sender_setup<R: RngCore + CryptoRng>(
    params: &GroupParams,
    instance: u64,
    rng: &mut R,
) -> OtSenderSetup {
    OtSenderSetup {
        c: params.random_element(rng),
        instance,
    }
}

/// Setup with `c = g^t` for a caller-supplied `t`.
pub fn ot2_sender_setup_from_exponent(
    params: &GroupParams,
    instance: u64,
    t: &Scalar,
) -> OtSenderSetup {
    OtSenderSetup {
        c: params.generator().pow(t),
        instance,
    }
}

pub fn ot2_receiver_choose<R: RngCore + CryptoRng>(
    setup: &OtSenderSetup,
    b: u8,
    rng: &mut R,
) -> Result<(OtReceiverKeys, OtReceiverSecret), OtError> {
    let k = setup.c.params().random_scalar(rng);
    ot2_receiver_choose_with(setup, b, k)
}

/// Deterministic variant of [`ot2_receiver_choose`] for a given `k`.
pub fn ot2_receiver_choose_with(
    setup: &OtSenderSetup,
    b: u8,
    k: Scalar,
) -> Result<(OtReceiverKeys, OtReceiverSecret), OtError> {
    if b > 1 {
        return Err(OtError::InvalidChoice { index: b as usize, n: 2 });
    }
    let params = setup.c.params();
    if !params.in_subgroup(&setup.c) {
        return Err(OtError::InvalidElement("sender element outside subgroup"));
    }
    let gk = params.generator().pow(&k);
    let pk0 = if b == 0 { gk } else { setup.c.div(&gk)? };
    Ok((
        OtReceiverKeys {
            pk0,
            instance: setup.instance,
        },
        OtReceiverSecret {
            k,
            choice: b,
            instance: setup.instance,
        },
    ))
}

fn branch_key(instance: u64, branch: u8, shared: &GroupElement) -> [u8; 32] {
    cipher::kdf(
        b"boardroom/ot2/key",
        &[&instance.to_be_bytes(), &[branch], &shared.to_bytes()],
    )
}

/// Encrypts `s0` under `pk0` and `s1` under `c / pk0`. The shorter string is
/// zero-padded to the longer one's length.
pub fn ot2_sender_transfer<R: RngCore + CryptoRng>(
    setup: &OtSenderSetup,
    keys: &OtReceiverKeys,
    s0: &[u8],
    s1: &[u8],
    rng: &mut R,
) -> Result<OtPayload, OtError> {
    if keys.instance != setup.instance {
        return Err(OtError::SessionMismatch);
    }
    let width = s0.len().max(s1.len());
    if width > MAX_STRING_LEN {
        return Err(OtError::StringTooLong(width));
    }
    let params = setup.c.params();
    if keys.pk0.params() != params || !params.in_subgroup(&keys.pk0) {
        return Err(OtError::InvalidElement("receiver key outside subgroup"));
    }
    let pk1 = setup.c.div(&keys.pk0)?;
    if keys.pk0.is_identity() || pk1.is_identity() {
        return Err(OtError::InvalidElement("degenerate receiver key"));
    }

    let mut seal_branch = |branch: u8, pk: &GroupElement, s: &[u8]| {
        let y = params.random_scalar(rng);
        let ephemeral = params.generator().pow(&y);
        let key = branch_key(setup.instance, branch, &pk.pow(&y));
        let mut padded = s.to_vec();
        padded.resize(width, 0);
        (ephemeral, cipher::seal(&key, &padded))
    };
    let (e0, blob0) = seal_branch(0, &keys.pk0, s0);
    let (e1, blob1) = seal_branch(1, &pk1, s1);
    Ok(OtPayload {
        instance: setup.instance,
        ephemeral: [e0, e1],
        blobs: [blob0, blob1],
    })
}

/// Opens branch `b` with exponent `k`. Any other branch fails authentication.
pub fn ot2_receiver_recover(payload: &OtPayload, b: u8, k: &Scalar) -> Result<Vec<u8>, OtError> {
    if b > 1 {
        return Err(OtError::InvalidChoice { index: b as usize, n: 2 });
    }
    let shared = payload.ephemeral[b as usize].pow(k);
    let key = branch_key(payload.instance, b, &shared);
    cipher::open(&key, &payload.blobs[b as usize]).ok_or(OtError::DecryptionFailed)
}

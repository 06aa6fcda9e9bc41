//! Hash commitments: `digest = SHA-256(nonce || payload)` with a 32-byte random nonce.

use std::fmt;

use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Commitment(pub [u8; 32]);

impl Commitment {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Commitment(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for Commitment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Commitment({})", self.to_hex())
    }
}

/// Everything needed to check a commitment. Private until revealed.
#[derive(Clone, PartialEq, Eq)]
pub struct Opening {
    pub payload: Vec<u8>,
    pub nonce: [u8; 32],
}

impl fmt::Debug for Opening {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Opening")
            .field("payload_len", &self.payload.len())
            .finish_non_exhaustive()
    }
}

fn digest(nonce: &[u8; 32], payload: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(nonce);
    h.update(payload);
    h.finalize().into()
}

pub fn commit<R: RngCore + CryptoRng>(payload: &[u8], rng: &mut R) -> (Commitment, Opening) {
    let mut nonce = [0u8; 32];
    rng.fill_bytes(&mut nonce);
    commit_with_nonce(payload, nonce)
}

pub fn commit_with_nonce(payload: &[u8], nonce: [u8; 32]) -> (Commitment, Opening) {
    (
        Commitment(digest(&nonce, payload)),
        Opening {
            payload: payload.to_vec(),
            nonce,
        },
    )
}

pub fn verify_commitment(commitment: &Commitment, opening: &Opening) -> bool {
    digest(&opening.nonce, &opening.payload) == commitment.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn commit_then_verify() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let (c, o) = commit(b"2,3,5;3;3;board", &mut rng);
        assert!(verify_commitment(&c, &o));
        assert_eq!(Commitment::from_hex(&c.to_hex()), Some(c));
    }

    #[test]
    fn empty_payload_golden_digest() {
        // SHA-256 of 32 zero bytes.
        let (c, _) = commit_with_nonce(b"", [0u8; 32]);
        assert_eq!(
            c.to_hex(),
            "66687aadf862bd776c8fc18b8e9f8e20089714856ee233b3902a591d0d5f2925"
        );
    }

    #[test]
    fn single_bit_flip_fails() {
        let (c, mut o) = commit_with_nonce(b"payload", [7u8; 32]);
        o.payload[0] ^= 1;
        assert!(!verify_commitment(&c, &o));
        let (c, mut o) = commit_with_nonce(b"payload", [7u8; 32]);
        o.nonce[31] ^= 0x80;
        assert!(!verify_commitment(&c, &o));
    }

    proptest! {
        #[test]
        fn no_other_payload_opens(
            payload in proptest::collection::vec(any::<u8>(), 0..64),
            other in proptest::collection::vec(any::<u8>(), 0..64),
            nonce in any::<[u8; 32]>(),
        ) {
            prop_assume!(payload != other);
            let (c, _) = commit_with_nonce(&payload, nonce);
            let forged = Opening { payload: other, nonce };
            prop_assert!(!verify_commitment(&c, &forged));
        }
    }
}

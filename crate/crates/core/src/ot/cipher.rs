//! Key derivation and authenticated encryption for OT payloads.
//!
//! Keystream blocks are `SHA-256(key || counter)`; the tag is HMAC-SHA-256
//! under a separately derived key. A blob opened with the wrong key fails the
//! tag check instead of yielding garbage.

use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};

pub const TAG_LEN: usize = 32;

type HmacSha256 = Hmac<Sha256>;

/// Hashes a label and length-prefixed parts into a 32-byte key.
pub fn kdf(label: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((label.len() as u32).to_be_bytes());
    h.update(label);
    for part in parts {
        h.update((part.len() as u32).to_be_bytes());
        h.update(part);
    }
    h.finalize().into()
}

fn keystream_xor(key: &[u8; 32], data: &mut [u8]) {
    let enc_key = kdf(b"boardroom/ot/enc", &[key]);
    for (counter, chunk) in data.chunks_mut(32).enumerate() {
        let block = kdf(b"boardroom/ot/stream", &[&enc_key, &(counter as u64).to_be_bytes()]);
        for (byte, k) in chunk.iter_mut().zip(block) {
            *byte ^= k;
        }
    }
}

fn mac(key: &[u8; 32]) -> HmacSha256 {
    let mac_key = kdf(b"boardroom/ot/mac", &[key]);
    HmacSha256::new_from_slice(&mac_key).expect("HMAC accepts any key length")
}

/// Encrypts `plaintext`, returning `ciphertext || tag`.
pub fn seal(key: &[u8; 32], plaintext: &[u8]) -> Vec<u8> {
    let mut out = plaintext.to_vec();
    keystream_xor(key, &mut out);
    let mut m = mac(key);
    m.update(&out);
    out.extend_from_slice(&m.finalize().into_bytes());
    out
}

/// Returns the plaintext, or `None` if the tag does not verify under `key`.
pub fn open(key: &[u8; 32], blob: &[u8]) -> Option<Vec<u8>> {
    let split = blob.len().checked_sub(TAG_LEN)?;
    let (body, tag) = blob.split_at(split);
    let mut m = mac(key);
    m.update(body);
    m.verify_slice(tag).ok()?;
    let mut out = body.to_vec();
    keystream_xor(key, &mut out);
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seal_open() {
        let key = [9u8; 32];
        let msg: Vec<u8> = (0..100).collect();
        let blob = seal(&key, &msg);
        assert_eq!(blob.len(), msg.len() + TAG_LEN);
        assert_ne!(&blob[..100], &msg[..]);
        assert_eq!(open(&key, &blob).unwrap(), msg);
        assert!(open(&[8u8; 32], &blob).is_none());
        assert_eq!(open(&key, &seal(&key, b"")).unwrap(), b"");
        assert!(open(&key, &blob[..10]).is_none());
    }

    #[test]
    fn tampering_detected() {
        let key = [1u8; 32];
        let mut blob = seal(&key, b"masked prime");
        blob[0] ^= 1;
        assert!(open(&key, &blob).is_none());
    }

    #[test]
    fn kdf_is_prefix_free() {
        assert_ne!(kdf(b"a", &[b"bc"]), kdf(b"ab", &[b"c"]));
        assert_ne!(kdf(b"x", &[b"a", b"b"]), kdf(b"x", &[b"ab"]));
    }
}

//! Oblivious transfer: a 1-out-of-2 base protocol and its 1-out-of-N extension.
//!
//! The N-way transfer follows the Naor-Pinkas key tree. The sender draws
//! `l = ceil(log2 N)` pairs of random keys and encrypts string `i` under a key
//! derived from `K_1^{i_1} .. K_l^{i_l}`, where `i_j` are the bits of `i`. The
//! receiver fetches one key of each pair through `l` base transfers, picking
//! the bits of its choice, and can open exactly one blob.
//!
//! A session is three messages: [`OtOffer`] (sender), [`OtSelect`] (receiver),
//! [`OtTransfer`] (sender).

pub mod base;
pub mod cipher;

use rand::{CryptoRng, RngCore};
use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::group::{GroupError, GroupParams, Scalar};
pub use base::{
    ot2_receiver_choose, ot2_receiver_choose_with, ot2_receiver_recover, ot2_sender_setup,
    ot2_sender_setup_from_exponent, ot2_sender_transfer, OtPayload, OtReceiverKeys,
    OtReceiverSecret, OtSenderSetup, MAX_STRING_LEN,
};

/// Upper bound on the number of strings in one session.
pub const MAX_STRINGS: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OtError {
    #[error("choice {index} out of range for {n} strings")]
    InvalidChoice { index: usize, n: usize },
    #[error("no strings to transfer")]
    NoStrings,
    #[error("too many strings: {0}")]
    TooManyStrings(usize),
    #[error("string of {0} bytes exceeds the transfer limit")]
    StringTooLong(usize),
    #[error("strings differ in length")]
    LengthMismatch,
    #[error("invalid group element: {0}")]
    InvalidElement(&'static str),
    #[error("message does not belong to this session")]
    SessionMismatch,
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("authenticated decryption failed")]
    DecryptionFailed,
    #[error(transparent)]
    Group(#[from] GroupError),
}

impl From<CodecError> for OtError {
    fn from(e: CodecError) -> Self {
        OtError::Malformed(e.to_string())
    }
}

/// The receiver's selection `gamma` among `n` strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OtChoice {
    index: usize,
    n: usize,
}

impl OtChoice {
    pub fn new(index: usize, n: usize) -> Result<Self, OtError> {
        if n == 0 {
            return Err(OtError::NoStrings);
        }
        if index >= n {
            return Err(OtError::InvalidChoice { index, n });
        }
        Ok(OtChoice { index, n })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Number of base transfers needed for `n` strings.
pub fn key_bits(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

fn base_instance(session: u64, j: usize) -> u64 {
    (session << 8) | j as u64
}

/// Key for blob `index`, from one key per tree level.
pub fn blob_key(session: u64, index: usize, keys: &[[u8; 32]]) -> [u8; 32] {
    let session = session.to_be_bytes();
    let index = (index as u64).to_be_bytes();
    let mut parts: Vec<&[u8]> = vec![&session, &index];
    parts.extend(keys.iter().map(|k| k.as_slice()));
    cipher::kdf(b"boardroom/otn/blob", &parts)
}

/// Attempts to open blob `index` with the given per-level keys.
pub fn open_blob(session: u64, index: usize, keys: &[[u8; 32]], blob: &[u8]) -> Option<Vec<u8>> {
    cipher::open(&blob_key(session, index, keys), blob)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtOffer {
    pub session: u64,
    pub n: u32,
    pub setups: Vec<OtSenderSetup>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtSelect {
    pub session: u64,
    pub keys: Vec<OtReceiverKeys>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtTransfer {
    pub session: u64,
    pub base: Vec<OtPayload>,
    pub blobs: Vec<Vec<u8>>,
}

/// One OT message on the point-to-point lane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OtMessage {
    Offer(OtOffer),
    Select(OtSelect),
    Transfer(OtTransfer),
}

const TAG_OFFER: u8 = 1;
const TAG_SELECT: u8 = 2;
const TAG_TRANSFER: u8 = 3;

impl OtMessage {
    pub fn session(&self) -> u64 {
        match self {
            OtMessage::Offer(m) => m.session,
            OtMessage::Select(m) => m.session,
            OtMessage::Transfer(m) => m.session,
        }
    }

    pub fn phase(&self) -> u8 {
        match self {
            OtMessage::Offer(_) => TAG_OFFER,
            OtMessage::Select(_) => TAG_SELECT,
            OtMessage::Transfer(_) => TAG_TRANSFER,
        }
    }

    pub fn phase_name(&self) -> &'static str {
        match self {
            OtMessage::Offer(_) => "offer",
            OtMessage::Select(_) => "select",
            OtMessage::Transfer(_) => "transfer",
        }
    }

    /// Framing: session id, phase tag, then length-prefixed elements and blobs.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.session()).u8(self.phase());
        match self {
            OtMessage::Offer(m) => {
                w.u32(m.n).u32(m.setups.len() as u32);
                for s in &m.setups {
                    w.u64(s.instance).element(&s.c);
                }
            }
            OtMessage::Select(m) => {
                w.u32(m.keys.len() as u32);
                for k in &m.keys {
                    w.u64(k.instance).element(&k.pk0);
                }
            }
            OtMessage::Transfer(m) => {
                w.u32(m.base.len() as u32);
                for p in &m.base {
                    w.u64(p.instance)
                        .element(&p.ephemeral[0])
                        .element(&p.ephemeral[1])
                        .bytes(&p.blobs[0])
                        .bytes(&p.blobs[1]);
                }
                w.u32(m.blobs.len() as u32);
                for b in &m.blobs {
                    w.bytes(b);
                }
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8], params: &GroupParams) -> Result<Self, OtError> {
        let mut r = Reader::new(bytes);
        let session = r.u64()?;
        let tag = r.u8()?;
        let count = |r: &mut Reader| -> Result<usize, OtError> {
            let n = r.u32()? as usize;
            if n > MAX_STRINGS {
                return Err(OtError::TooManyStrings(n));
            }
            Ok(n)
        };
        let msg = match tag {
            TAG_OFFER => {
                let n = r.u32()?;
                let len = count(&mut r)?;
                let setups = (0..len)
                    .map(|_| {
                        Ok(OtSenderSetup {
                            instance: r.u64()?,
                            c: r.element(params)?,
                        })
                    })
                    .collect::<Result<_, CodecError>>()?;
                OtMessage::Offer(OtOffer { session, n, setups })
            }
            TAG_SELECT => {
                let len = count(&mut r)?;
                let keys = (0..len)
                    .map(|_| {
                        Ok(OtReceiverKeys {
                            instance: r.u64()?,
                            pk0: r.element(params)?,
                        })
                    })
                    .collect::<Result<_, CodecError>>()?;
                OtMessage::Select(OtSelect { session, keys })
            }
            TAG_TRANSFER => {
                let len = count(&mut r)?;
                let base = (0..len)
                    .map(|_| {
                        Ok(OtPayload {
                            instance: r.u64()?,
                            ephemeral: [r.element(params)?, r.element(params)?],
                            blobs: [r.bytes()?.to_vec(), r.bytes()?.to_vec()],
                        })
                    })
                    .collect::<Result<_, CodecError>>()?;
                let len = count(&mut r)?;
                let blobs = (0..len)
                    .map(|_| Ok(r.bytes()?.to_vec()))
                    .collect::<Result<_, CodecError>>()?;
                OtMessage::Transfer(OtTransfer {
                    session,
                    base,
                    blobs,
                })
            }
            other => return Err(CodecError::UnknownTag(other).into()),
        };
        r.finish()?;
        Ok(msg)
    }
}

/// Sender side of one N-way session.
pub struct OtnSender {
    session: u64,
    strings: Vec<Vec<u8>>,
    setups: Vec<OtSenderSetup>,
    key_pairs: Vec<[[u8; 32]; 2]>,
}

impl OtnSender {
    /// Pads all strings to the longest one and produces the opening offer.
    pub fn new<R: RngCore + CryptoRng>(
        params: &GroupParams,
        session: u64,
        strings: Vec<Vec<u8>>,
        rng: &mut R,
    ) -> Result<(Self, OtOffer), OtError> {
        let levels = key_bits(strings.len());
        let setups = (0..levels)
            .map(|j| ot2_sender_setup(params, base_instance(session, j), rng))
            .collect();
        let key_pairs = (0..levels)
            .map(|_| {
                let mut pair = [[0u8; 32]; 2];
                rng.fill_bytes(&mut pair[0]);
                rng.fill_bytes(&mut pair[1]);
                pair
            })
            .collect();
        Self::from_parts(session, strings, setups, key_pairs)
    }

    /// Builds a sender from explicit setups and key pairs.
    pub fn from_parts(
        session: u64,
        mut strings: Vec<Vec<u8>>,
        setups: Vec<OtSenderSetup>,
        key_pairs: Vec<[[u8; 32]; 2]>,
    ) -> Result<(Self, OtOffer), OtError> {
        if strings.is_empty() {
            return Err(OtError::NoStrings);
        }
        if strings.len() > MAX_STRINGS {
            return Err(OtError::TooManyStrings(strings.len()));
        }
        let levels = key_bits(strings.len());
        if setups.len() != levels || key_pairs.len() != levels {
            return Err(OtError::Malformed("wrong number of key-tree levels".into()));
        }
        let width = strings.iter().map(Vec::len).max().unwrap_or(0);
        if width > MAX_STRING_LEN {
            return Err(OtError::StringTooLong(width));
        }
        for s in &mut strings {
            s.resize(width, 0);
        }
        let offer = OtOffer {
            session,
            n: strings.len() as u32,
            setups: setups.clone(),
        };
        Ok((
            OtnSender {
                session,
                strings,
                setups,
                key_pairs,
            },
            offer,
        ))
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    /// Answers the receiver's keys with the base payloads and every blob.
    pub fn respond<R: RngCore + CryptoRng>(
        &self,
        select: &OtSelect,
        rng: &mut R,
    ) -> Result<OtTransfer, OtError> {
        if select.session != self.session || select.keys.len() != self.setups.len() {
            return Err(OtError::SessionMismatch);
        }
        let base = self
            .setups
            .iter()
            .zip(&select.keys)
            .zip(&self.key_pairs)
            .map(|((setup, keys), pair)| ot2_sender_transfer(setup, keys, &pair[0], &pair[1], rng))
            .collect::<Result<Vec<_>, _>>()?;
        let blobs = self
            .strings
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let keys: Vec<[u8; 32]> = self
                    .key_pairs
                    .iter()
                    .enumerate()
                    .map(|(j, pair)| pair[(i >> j) & 1])
                    .collect();
                cipher::seal(&blob_key(self.session, i, &keys), s)
            })
            .collect();
        Ok(OtTransfer {
            session: self.session,
            base,
            blobs,
        })
    }
}

/// Receiver side of one N-way session.
pub struct OtnReceiver {
    params: GroupParams,
    choice: OtChoice,
    session: Option<u64>,
    secrets: Vec<OtReceiverSecret>,
}

impl OtnReceiver {
    pub fn new(params: &GroupParams, choice: OtChoice) -> Self {
        OtnReceiver {
            params: params.clone(),
            choice,
            session: None,
            secrets: Vec::new(),
        }
    }

    pub fn choice(&self) -> OtChoice {
        self.choice
    }

    pub fn on_offer<R: RngCore + CryptoRng>(
        &mut self,
        offer: &OtOffer,
        rng: &mut R,
    ) -> Result<OtSelect, OtError> {
        let ks = offer
            .setups
            .iter()
            .map(|_| self.params.random_scalar(rng))
            .collect();
        self.on_offer_with(offer, ks)
    }

    /// [`Self::on_offer`] with caller-supplied base-OT exponents.
    pub fn on_offer_with(&mut self, offer: &OtOffer, ks: Vec<Scalar>) -> Result<OtSelect, OtError> {
        if offer.n as usize != self.choice.n {
            return Err(OtError::Malformed(format!(
                "offer carries {} strings, expected {}",
                offer.n, self.choice.n
            )));
        }
        if offer.setups.len() != key_bits(self.choice.n) || ks.len() != offer.setups.len() {
            return Err(OtError::Malformed("wrong number of key-tree levels".into()));
        }
        let mut keys = Vec::with_capacity(ks.len());
        let mut secrets = Vec::with_capacity(ks.len());
        for (j, (setup, k)) in offer.setups.iter().zip(ks).enumerate() {
            if setup.instance != base_instance(offer.session, j) {
                return Err(OtError::SessionMismatch);
            }
            let bit = ((self.choice.index >> j) & 1) as u8;
            let (pk, secret) = ot2_receiver_choose_with(setup, bit, k)?;
            keys.push(pk);
            secrets.push(secret);
        }
        self.session = Some(offer.session);
        self.secrets = secrets;
        Ok(OtSelect {
            session: offer.session,
            keys,
        })
    }

    /// The one key per level this receiver is entitled to.
    pub fn level_keys(&self, transfer: &OtTransfer) -> Result<Vec<[u8; 32]>, OtError> {
        if Some(transfer.session) != self.session || transfer.base.len() != self.secrets.len() {
            return Err(OtError::SessionMismatch);
        }
        self.secrets
            .iter()
            .zip(&transfer.base)
            .map(|(secret, payload)| {
                let key = ot2_receiver_recover(payload, secret.choice, &secret.k)?;
                key.try_into()
                    .map_err(|_| OtError::Malformed("level key is not 32 bytes".into()))
            })
            .collect()
    }

    /// The base-OT exponents, i.e. everything private the receiver holds.
    pub fn secrets(&self) -> &[OtReceiverSecret] {
        &self.secrets
    }

    pub fn on_transfer(&self, transfer: &OtTransfer) -> Result<Vec<u8>, OtError> {
        if transfer.blobs.len() != self.choice.n {
            return Err(OtError::Malformed("blob count".into()));
        }
        let keys = self.level_keys(transfer)?;
        let session = self.session.ok_or(OtError::SessionMismatch)?;
        open_blob(session, self.choice.index, &keys, &transfer.blobs[self.choice.index])
            .ok_or(OtError::DecryptionFailed)
    }
}

/// Messages of a completed in-memory session, plus what the receiver got.
#[derive(Debug, Clone)]
pub struct OtnRun {
    pub value: Vec<u8>,
    pub offer: OtOffer,
    pub select: OtSelect,
    pub transfer: OtTransfer,
}

/// Runs a whole N-way session in memory.
pub fn otn_run<R1, R2>(
    params: &GroupParams,
    session: u64,
    strings: Vec<Vec<u8>>,
    choice: OtChoice,
    sender_rng: &mut R1,
    receiver_rng: &mut R2,
) -> Result<OtnRun, OtError>
where
    R1: RngCore + CryptoRng,
    R2: RngCore + CryptoRng,
{
    if choice.n != strings.len() {
        return Err(OtError::InvalidChoice {
            index: choice.index,
            n: strings.len(),
        });
    }
    let (sender, offer) = OtnSender::new(params, session, strings, sender_rng)?;
    let mut receiver = OtnReceiver::new(params, choice);
    let select = receiver.on_offer(&offer, receiver_rng)?;
    let transfer = sender.respond(&select, sender_rng)?;
    let value = receiver.on_transfer(&transfer)?;
    Ok(OtnRun {
        value,
        offer,
        select,
        transfer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn strings(n: usize) -> Vec<Vec<u8>> {
        (0..n).map(|i| format!("string-{i:03}").into_bytes()).collect()
    }

    #[test]
    fn key_bit_counts() {
        assert_eq!(key_bits(1), 0);
        assert_eq!(key_bits(2), 1);
        assert_eq!(key_bits(9), 4);
        assert_eq!(key_bits(16), 4);
        assert_eq!(key_bits(17), 5);
    }

    #[test]
    fn single_string_is_direct() {
        let p = GroupParams::toy64();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let run = otn_run(&p, 0, strings(1), OtChoice::new(0, 1).unwrap(), &mut rng.clone(), &mut rng)
            .unwrap();
        assert!(run.offer.setups.is_empty());
        assert_eq!(run.value, b"string-000");
    }

    #[test]
    fn nine_way_sweep() {
        let p = GroupParams::toy64();
        let mut s_rng = ChaCha20Rng::seed_from_u64(2);
        let mut r_rng = ChaCha20Rng::seed_from_u64(3);
        for gamma in 0..9 {
            let choice = OtChoice::new(gamma, 9).unwrap();
            let run = otn_run(&p, gamma as u64, strings(9), choice, &mut s_rng, &mut r_rng).unwrap();
            assert_eq!(run.value, strings(9)[gamma]);
        }
    }

    #[test]
    fn other_blobs_fail_authentication() {
        let p = GroupParams::toy64();
        let mut s_rng = ChaCha20Rng::seed_from_u64(4);
        let mut r_rng = ChaCha20Rng::seed_from_u64(5);
        let choice = OtChoice::new(4, 9).unwrap();
        let (sender, offer) = OtnSender::new(&p, 7, strings(9), &mut s_rng).unwrap();
        let mut receiver = OtnReceiver::new(&p, choice);
        let select = receiver.on_offer(&offer, &mut r_rng).unwrap();
        let transfer = sender.respond(&select, &mut s_rng).unwrap();
        let keys = receiver.level_keys(&transfer).unwrap();
        for (i, blob) in transfer.blobs.iter().enumerate() {
            let opened = open_blob(7, i, &keys, blob);
            if i == 4 {
                assert_eq!(opened.unwrap(), b"string-004");
            } else {
                assert!(opened.is_none(), "blob {i} opened");
            }
        }
    }

    #[test]
    fn choice_validation() {
        assert_eq!(OtChoice::new(0, 0), Err(OtError::NoStrings));
        assert_eq!(
            OtChoice::new(9, 9),
            Err(OtError::InvalidChoice { index: 9, n: 9 })
        );
        let p = GroupParams::toy64();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        assert!(matches!(
            OtnSender::new(&p, 0, vec![], &mut rng),
            Err(OtError::NoStrings)
        ));
    }

    #[test]
    fn messages_round_trip_through_codec() {
        let p = GroupParams::toy64();
        let mut s_rng = ChaCha20Rng::seed_from_u64(6);
        let mut r_rng = ChaCha20Rng::seed_from_u64(7);
        let run = otn_run(&p, 3, strings(5), OtChoice::new(2, 5).unwrap(), &mut s_rng, &mut r_rng)
            .unwrap();
        for msg in [
            OtMessage::Offer(run.offer),
            OtMessage::Select(run.select),
            OtMessage::Transfer(run.transfer),
        ] {
            let bytes = msg.encode();
            assert_eq!(OtMessage::decode(&bytes, &p).unwrap(), msg);
            assert!(OtMessage::decode(&bytes[..bytes.len() - 1], &p).is_err());
        }
    }

    #[test]
    fn mismatched_session_rejected() {
        let p = GroupParams::toy64();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let (sender, offer) = OtnSender::new(&p, 1, strings(4), &mut rng).unwrap();
        let mut receiver = OtnReceiver::new(&p, OtChoice::new(1, 4).unwrap());
        let mut select = receiver.on_offer(&offer, &mut rng).unwrap();
        select.session = 2;
        assert_eq!(sender.respond(&select, &mut rng).unwrap_err(), OtError::SessionMismatch);
    }
}

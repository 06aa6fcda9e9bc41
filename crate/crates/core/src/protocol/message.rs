//! Broadcast messages and their canonical encoding.

use std::fmt;

use crate::codec::{CodecError, Reader, Writer};
use crate::commitment::Commitment;
use crate::elgamal::{Ciphertext, DecryptionShare, ShareTarget};
use crate::group::{GroupElement, GroupParams, Scalar};
use crate::PartyId;

/// Broadcast round numbers.
pub mod round {
    pub const KEYS: u8 = 1;
    pub const VOTES: u8 = 2;
    pub const SHARES: u8 = 3;
    pub const MAPPING: u8 = 4;
    pub const UNMASK: u8 = 5;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    PublicKeyShare {
        value: GroupElement,
    },
    SetupCommitments {
        assignment: Commitment,
        mask: Commitment,
    },
    EncryptedVote {
        ciphertext: Ciphertext,
    },
    DistributorShare {
        value: GroupElement,
        target: ShareTarget,
    },
    VoterShare {
        value: GroupElement,
        target: ShareTarget,
    },
    /// The masked prime list in index order.
    MappingReveal {
        masked: Vec<GroupElement>,
    },
    /// The sender found its masked prime at its index in the revealed list.
    ReceiptConfirmation {
        list_digest: [u8; 32],
    },
    Allegation {
        claim: String,
        received: GroupElement,
    },
    /// `g^{-ks}`, `s`, and the openings of both setup commitments.
    UnmaskReveal {
        unmask: GroupElement,
        s: Scalar,
        mask_nonce: [u8; 32],
        assignment_payload: Vec<u8>,
        assignment_nonce: [u8; 32],
    },
    /// Timeout record naming the parties the sender was still waiting on.
    Abort {
        round: u8,
        missing: Vec<PartyId>,
    },
}

const TAG_KEY: u8 = 1;
const TAG_COMMIT: u8 = 2;
const TAG_VOTE: u8 = 3;
const TAG_DSHARE: u8 = 4;
const TAG_VSHARE: u8 = 5;
const TAG_MAPPING: u8 = 6;
const TAG_RECEIPT: u8 = 7;
const TAG_ALLEGE: u8 = 8;
const TAG_UNMASK: u8 = 9;
const TAG_ABORT: u8 = 10;

/// Longest allegation text accepted on the wire.
pub const MAX_CLAIM_LEN: usize = 1024;

impl ProtocolMessage {
    /// The broadcast round this message belongs to. An abort carries the
    /// round that timed out.
    pub fn round(&self) -> u8 {
        use ProtocolMessage::*;
        match self {
            PublicKeyShare { .. } | SetupCommitments { .. } => round::KEYS,
            EncryptedVote { .. } => round::VOTES,
            DistributorShare { .. } | VoterShare { .. } => round::SHARES,
            MappingReveal { .. } | ReceiptConfirmation { .. } | Allegation { .. } => round::MAPPING,
            UnmaskReveal { .. } => round::UNMASK,
            Abort { round, .. } => *round,
        }
    }

    pub fn kind(&self) -> &'static str {
        use ProtocolMessage::*;
        match self {
            PublicKeyShare { .. } => "public-key-share",
            SetupCommitments { .. } => "setup-commitments",
            EncryptedVote { .. } => "encrypted-vote",
            DistributorShare { .. } => "distributor-share",
            VoterShare { .. } => "voter-share",
            MappingReveal { .. } => "mapping-reveal",
            ReceiptConfirmation { .. } => "receipt-confirmation",
            Allegation { .. } => "allegation",
            UnmaskReveal { .. } => "unmask-reveal",
            Abort { .. } => "abort",
        }
    }

    /// The share carried by a share message, attributed to `sender`.
    pub fn decryption_share(&self, sender: PartyId) -> Option<DecryptionShare> {
        match self {
            ProtocolMessage::DistributorShare { value, target }
            | ProtocolMessage::VoterShare { value, target } => Some(DecryptionShare {
                value: value.clone(),
                owner: sender,
                target: *target,
            }),
            _ => None,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        use ProtocolMessage::*;
        let mut w = Writer::new();
        match self {
            PublicKeyShare { value } => {
                w.u8(TAG_KEY).element(value);
            }
            SetupCommitments { assignment, mask } => {
                w.u8(TAG_COMMIT).fixed(&assignment.0).fixed(&mask.0);
            }
            EncryptedVote { ciphertext } => {
                w.u8(TAG_VOTE).element(&ciphertext.a).element(&ciphertext.b);
            }
            DistributorShare { value, target } => {
                w.u8(TAG_DSHARE).element(value).fixed(&target.0);
            }
            VoterShare { value, target } => {
                w.u8(TAG_VSHARE).element(value).fixed(&target.0);
            }
            MappingReveal { masked } => {
                w.u8(TAG_MAPPING).elements(masked);
            }
            ReceiptConfirmation { list_digest } => {
                w.u8(TAG_RECEIPT).fixed(list_digest);
            }
            Allegation { claim, received } => {
                w.u8(TAG_ALLEGE).str(claim).element(received);
            }
            UnmaskReveal {
                unmask,
                s,
                mask_nonce,
                assignment_payload,
                assignment_nonce,
            } => {
                w.u8(TAG_UNMASK)
                    .element(unmask)
                    .scalar(s, unmask.params())
                    .fixed(mask_nonce)
                    .bytes(assignment_payload)
                    .fixed(assignment_nonce);
            }
            Abort { round, missing } => {
                w.u8(TAG_ABORT).u8(*round).u32(missing.len() as u32);
                for p in missing {
                    w.u32(p.0);
                }
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8], params: &GroupParams) -> Result<Self, CodecError> {
        use ProtocolMessage::*;
        let mut r = Reader::new(bytes);
        let msg = match r.u8()? {
            TAG_KEY => PublicKeyShare {
                value: r.element(params)?,
            },
            TAG_COMMIT => SetupCommitments {
                assignment: Commitment(r.fixed()?),
                mask: Commitment(r.fixed()?),
            },
            TAG_VOTE => EncryptedVote {
                ciphertext: Ciphertext {
                    a: r.element(params)?,
                    b: r.element(params)?,
                },
            },
            TAG_DSHARE => DistributorShare {
                value: r.element(params)?,
                target: ShareTarget(r.fixed()?),
            },
            TAG_VSHARE => VoterShare {
                value: r.element(params)?,
                target: ShareTarget(r.fixed()?),
            },
            TAG_MAPPING => MappingReveal {
                masked: r.elements(params)?,
            },
            TAG_RECEIPT => ReceiptConfirmation {
                list_digest: r.fixed()?,
            },
            TAG_ALLEGE => {
                let claim = r.string()?;
                if claim.len() > MAX_CLAIM_LEN {
                    return Err(CodecError::Invalid("allegation too long".into()));
                }
                Allegation {
                    claim,
                    received: r.element(params)?,
                }
            }
            TAG_UNMASK => UnmaskReveal {
                unmask: r.element(params)?,
                s: r.scalar(params)?,
                mask_nonce: r.fixed()?,
                assignment_payload: r.bytes()?.to_vec(),
                assignment_nonce: r.fixed()?,
            },
            TAG_ABORT => {
                let round = r.u8()?;
                let len = r.u32()? as usize;
                if len > r.remaining() / 4 {
                    return Err(CodecError::Truncated);
                }
                let missing = (0..len).map(|_| r.u32().map(PartyId)).collect::<Result<_, _>>()?;
                Abort { round, missing }
            }
            other => return Err(CodecError::UnknownTag(other)),
        };
        r.finish()?;
        Ok(msg)
    }
}

impl fmt::Display for ProtocolMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (round {})", self.kind(), self.round())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_variant_round_trips() {
        let p = GroupParams::toy64();
        let x = p.element_from_u64(12345).unwrap();
        let y = p.element_from_u64(678).unwrap();
        let msgs = vec![
            ProtocolMessage::PublicKeyShare { value: x.clone() },
            ProtocolMessage::SetupCommitments {
                assignment: Commitment([1; 32]),
                mask: Commitment([2; 32]),
            },
            ProtocolMessage::EncryptedVote {
                ciphertext: Ciphertext {
                    a: x.clone(),
                    b: y.clone(),
                },
            },
            ProtocolMessage::DistributorShare {
                value: x.clone(),
                target: ShareTarget([3; 32]),
            },
            ProtocolMessage::VoterShare {
                value: y.clone(),
                target: ShareTarget([4; 32]),
            },
            ProtocolMessage::MappingReveal {
                masked: vec![x.clone(), y.clone()],
            },
            ProtocolMessage::ReceiptConfirmation { list_digest: [5; 32] },
            ProtocolMessage::Allegation {
                claim: "wrong prime".into(),
                received: y.clone(),
            },
            ProtocolMessage::UnmaskReveal {
                unmask: x.clone(),
                s: p.scalar_from_u64(99),
                mask_nonce: [6; 32],
                assignment_payload: b"2,3;1;2;e".to_vec(),
                assignment_nonce: [7; 32],
            },
            ProtocolMessage::Abort {
                round: 3,
                missing: vec![PartyId(1), PartyId(2)],
            },
        ];
        for m in msgs {
            let bytes = m.encode();
            assert_eq!(ProtocolMessage::decode(&bytes, &p).unwrap(), m);
            assert!(ProtocolMessage::decode(&bytes[..bytes.len() - 1], &p).is_err());
        }
        assert_eq!(
            ProtocolMessage::decode(&[0], &p),
            Err(CodecError::UnknownTag(0))
        );
    }
}

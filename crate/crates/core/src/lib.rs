//! Self-tallying boardroom voting over a safe-prime group.
//!
//! Voters encrypt prime-encoded ballots under a jointly generated ElGamal key.
//! A distributor hands each voter a masked prime list through 1-out-of-N
//! oblivious transfer, so nobody learns which prime stands for which
//! candidate until the tally is unmasked and factored.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod audit;
pub mod ballot;
pub mod codec;
pub mod commitment;
pub mod elgamal;
pub mod group;
pub mod ot;
pub mod protocol;
pub mod simulation;
pub mod transport;

/// Index of a participant. Voters are `0..n`; an external authority, when
/// present, takes id `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartyId(pub u32);

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

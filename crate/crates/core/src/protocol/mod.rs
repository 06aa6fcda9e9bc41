//! The five-round election.
//!
//! | round | sender      | message                                   |
//! |-------|-------------|-------------------------------------------|
//! | 1     | every voter | public key share                          |
//! | 1     | distributor | commitments to the assignment and mask     |
//! | 2     | every voter | encrypted vote (after the OT selection)   |
//! | 3     | distributor | decryption share, then every other voter  |
//! | 4     | distributor | masked prime list                         |
//! | 4     | OT voters   | receipt confirmation or allegation        |
//! | 5     | distributor | unmask factor, `s`, both openings         |
//!
//! The assignment is opened only in round 5. Publishing it with the masked
//! list would let anyone divide out `g^s` and tally before every voter has
//! checked its receipt.

pub mod config;
pub mod finalize;
pub mod message;
pub mod party;

pub use config::{ConfigError, ElectionConfig, PartyEntry};
pub use finalize::{
    finalize, transcript_digest, AllegationRecord, ElectionResult, FinalizeError, Flag, LaneRecord,
    Posted, ResultCounters, ResultStatus, Transcript,
};
pub use message::{round, ProtocolMessage};
pub use party::{
    masked_list_digest, message_digest, planned_index, prove_vote, verify_vote_proof, Counters,
    DistributorSetup, Input, Misbehavior, Output, Party, PartyEvent, PartySeed, Phase,
};

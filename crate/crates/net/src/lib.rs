//! Networked elections: a relay that orders broadcasts, party nodes that
//! connect to it, and a WebSocket lane for a local browser panel.

use thiserror::Error;

use boardroom::protocol::ConfigError;
use boardroom::transport::TransportError;

pub mod frame;
pub mod node;
pub mod relay;
pub mod ui;

pub use frame::{read_frame, write_frame, Frame};
pub use node::{run_node, NodeOptions, NodeReport, NodeRole};
pub use relay::{Relay, RelaySummary};
pub use ui::{CandidateRef, UiCommand, UiEvent, UiLane};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("config: {0}")]
    Config(String),
    #[error("relay unreachable: {0}")]
    Unreachable(String),
    #[error("relay closed the connection")]
    RelayClosed,
    #[error("protocol: {0}")]
    Protocol(String),
}

impl From<ConfigError> for NetError {
    fn from(e: ConfigError) -> Self {
        NetError::Config(e.to_string())
    }
}

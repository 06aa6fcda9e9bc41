//! Length-prefixed frames between parties and the relay.

use std::io::{self, Read, Write};

use boardroom::codec::{CodecError, Reader, Writer};
use boardroom::transport::{AuthenticatedEnvelope, LaneEnvelope, LogEntry};
use boardroom::PartyId;

/// Largest frame either side will read.
pub const MAX_FRAME: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    /// Registration. Observers send no party.
    Hello {
        election_id: String,
        party: Option<(PartyId, [u8; 64])>,
    },
    Broadcast(AuthenticatedEnvelope),
    Lane(LaneEnvelope),
    /// A log entry as sequenced by the relay, with the chain digest after it.
    Logged { entry: LogEntry, digest: [u8; 32] },
    Reject { reason: String },
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        match self {
            Frame::Hello { election_id, party } => {
                w.u8(1).str(election_id);
                match party {
                    Some((id, sig)) => {
                        w.u8(1).u32(id.0).fixed(sig);
                    }
                    None => {
                        w.u8(0);
                    }
                }
            }
            Frame::Broadcast(env) => {
                w.u8(2).bytes(&env.encode());
            }
            Frame::Lane(env) => {
                w.u8(3).bytes(&env.encode());
            }
            Frame::Logged { entry, digest } => {
                w.u8(4).bytes(&entry.encode()).fixed(digest);
            }
            Frame::Reject { reason } => {
                w.u8(5).str(reason);
            }
        }
        w.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let frame = match r.u8()? {
            1 => {
                let election_id = r.string()?;
                let party = match r.u8()? {
                    0 => None,
                    1 => Some((PartyId(r.u32()?), r.fixed()?)),
                    t => return Err(CodecError::UnknownTag(t)),
                };
                Frame::Hello { election_id, party }
            }
            2 => Frame::Broadcast(AuthenticatedEnvelope::decode(r.bytes()?)?),
            3 => Frame::Lane(LaneEnvelope::decode(r.bytes()?)?),
            4 => Frame::Logged {
                entry: LogEntry::decode(r.bytes()?)?,
                digest: r.fixed()?,
            },
            5 => Frame::Reject { reason: r.string()? },
            t => return Err(CodecError::UnknownTag(t)),
        };
        r.finish()?;
        Ok(frame)
    }
}

pub fn write_frame(w: &mut impl Write, frame: &Frame) -> io::Result<()> {
    let body = frame.encode();
    w.write_all(&(body.len() as u32).to_be_bytes())?;
    w.write_all(&body)?;
    w.flush()
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> io::Result<Option<Frame>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Frame::decode(&body)
        .map(Some)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
}

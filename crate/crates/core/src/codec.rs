//! Canonical binary encoding shared by protocol, OT and log records.
//!
//! Integers are big-endian; byte strings and group elements carry a `u32`
//! length prefix. Decoding rejects trailing bytes, so every value has exactly
//! one encoding.

use thiserror::Error;

use crate::group::{GroupElement, GroupParams, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("unexpected end of input")]
    Truncated,
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("unknown tag {0}")]
    UnknownTag(u8),
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Debug, Default)]
pub struct Writer(Vec<u8>);

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.0.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32);
        self.0.extend_from_slice(v);
        self
    }

    pub fn fixed(&mut self, v: &[u8]) -> &mut Self {
        self.0.extend_from_slice(v);
        self
    }

    pub fn str(&mut self, v: &str) -> &mut Self {
        self.bytes(v.as_bytes())
    }

    pub fn element(&mut self, v: &GroupElement) -> &mut Self {
        self.bytes(&v.to_bytes())
    }

    pub fn scalar(&mut self, v: &Scalar, params: &GroupParams) -> &mut Self {
        self.bytes(&v.to_bytes(params))
    }

    pub fn elements(&mut self, vs: &[GroupElement]) -> &mut Self {
        self.u32(vs.len() as u32);
        for v in vs {
            self.element(v);
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.0
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).ok_or(CodecError::Truncated)?;
        let out = self.buf.get(self.pos..end).ok_or(CodecError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    pub fn string(&mut self) -> Result<String, CodecError> {
        String::from_utf8(self.bytes()?.to_vec())
            .map_err(|_| CodecError::Invalid("string is not UTF-8".into()))
    }

    pub fn element(&mut self, params: &GroupParams) -> Result<GroupElement, CodecError> {
        params
            .element_from_bytes(self.bytes()?)
            .map_err(|e| CodecError::Invalid(e.to_string()))
    }

    pub fn scalar(&mut self, params: &GroupParams) -> Result<Scalar, CodecError> {
        let raw = self.bytes()?;
        if raw.len() != params.element_len() {
            return Err(CodecError::Invalid("scalar width".into()));
        }
        params
            .scalar_from_bytes(raw)
            .map_err(|e| CodecError::Invalid(e.to_string()))
    }

    pub fn elements(&mut self, params: &GroupParams) -> Result<Vec<GroupElement>, CodecError> {
        let n = self.u32()? as usize;
        // Each element costs at least its 4-byte prefix; refuse absurd counts early.
        if n > self.remaining() / 4 {
            return Err(CodecError::Truncated);
        }
        (0..n).map(|_| self.element(params)).collect()
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(CodecError::Trailing(n)),
        }
    }
}

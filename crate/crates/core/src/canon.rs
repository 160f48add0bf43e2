//! Canonical length-prefixed field encoding.
//!
//! Every signed or measured structure in this crate is serialized as a flat
//! sequence of fields, each written as a 4-byte big-endian length followed by
//! that many bytes. Nested records are encoded into a byte field of their
//! parent. There is exactly one encoding per value, so signatures and digests
//! over these bytes are stable.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonError {
    #[error("field at byte {offset} is truncated")]
    Truncated { offset: usize },
    #[error("{count} trailing bytes after the last field")]
    Trailing { count: usize },
    #[error("field at byte {offset} has length {found}, expected {expected}")]
    BadWidth {
        offset: usize,
        expected: usize,
        found: usize,
    },
    #[error("field at byte {offset} is not valid UTF-8")]
    BadUtf8 { offset: usize },
    #[error("field at byte {offset} holds out-of-range value {value}")]
    BadValue { offset: usize, value: u64 },
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts the buffer with raw (unprefixed) bytes, e.g. a file magic.
    pub fn with_prefix(prefix: &[u8]) -> Self {
        Writer {
            buf: prefix.to_vec(),
        }
    }

    pub fn bytes(&mut self, data: &[u8]) -> &mut Self {
        let len = u32::try_from(data.len()).expect("canonical field longer than 4 GiB");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(data);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.bytes(&[v])
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_be_bytes())
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u8(v as u8)
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Reader { data, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.data.len()
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CanonError> {
        let start = self.pos;
        let header = self
            .data
            .get(start..start + 4)
            .ok_or(CanonError::Truncated { offset: start })?;
        let len = u32::from_be_bytes(header.try_into().unwrap()) as usize;
        let body_start = start + 4;
        let body = body_start
            .checked_add(len)
            .and_then(|end| self.data.get(body_start..end))
            .ok_or(CanonError::Truncated { offset: start })?;
        self.pos = body_start + len;
        Ok(body)
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], CanonError> {
        let offset = self.pos;
        let b = self.bytes()?;
        b.try_into().map_err(|_| CanonError::BadWidth {
            offset,
            expected: N,
            found: b.len(),
        })
    }

    pub fn str(&mut self) -> Result<&'a str, CanonError> {
        let offset = self.pos;
        std::str::from_utf8(self.bytes()?).map_err(|_| CanonError::BadUtf8 { offset })
    }

    pub fn u8(&mut self) -> Result<u8, CanonError> {
        Ok(self.fixed::<1>()?[0])
    }

    pub fn u16(&mut self) -> Result<u16, CanonError> {
        Ok(u16::from_be_bytes(self.fixed()?))
    }

    pub fn u32(&mut self) -> Result<u32, CanonError> {
        Ok(u32::from_be_bytes(self.fixed()?))
    }

    pub fn u64(&mut self) -> Result<u64, CanonError> {
        Ok(u64::from_be_bytes(self.fixed()?))
    }

    pub fn bool(&mut self) -> Result<bool, CanonError> {
        let offset = self.pos;
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(CanonError::BadValue {
                offset,
                value: v as u64,
            }),
        }
    }

    /// Fails unless every byte has been consumed.
    pub fn finish(self) -> Result<(), CanonError> {
        if self.pos == self.data.len() {
            Ok(())
        } else {
            Err(CanonError::Trailing {
                count: self.data.len() - self.pos,
            })
        }
    }
}

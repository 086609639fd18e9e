//! Flat tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "RELMEM01"
//! version u32      1
//! then, repeated until end of file:
//!   name_len u32, name (UTF-8, name_len bytes)
//!   rank     u32, dims (u64 × rank)
//!   values   f64 × product(dims)
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensors::Tensor;

pub const MAGIC: &[u8; 8] = b"RELMEM01";
pub const VERSION: u32 = 1;

pub fn encode<S: Scalar>(records: &[(&str, &Tensor<S>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for (name, t) in records {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        for d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor<f64>)>> {
    let mut r = ByteReader::new(bytes);
    if r.take(8)? != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut records = Vec::new();
    while !r.is_empty() {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let dims = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let (rows, cols) = match dims.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [m, n] => (*m, *n),
            _ => return Err(Error::Format(format!("{name}: rank {rank} unsupported"))),
        };
        let count = rows
            .checked_mul(cols)
            .filter(|c| c.checked_mul(8).is_some_and(|b| b <= r.remaining()))
            .ok_or_else(|| Error::Format(format!("{name}: truncated values")))?;
        let values = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        records.push((name, Tensor::new(rows, cols, values)?));
    }
    Ok(records)
}

pub fn save<S: Scalar>(path: &Path, records: &[(&str, &Tensor<S>)]) -> Result<()> {
    std::fs::write(path, encode(records)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<(String, Tensor<f64>)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Cursor over a little-endian byte buffer that reports truncation.
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader { buf, pos: 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Format(format!(
                "truncated: wanted {n} bytes at offset {}",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    pub fn u64(&mut self) -> Result<u64> {
        self.array().map(u64::from_le_bytes)
    }

    pub fn f32(&mut self) -> Result<f32> {
        self.array().map(f32::from_le_bytes)
    }

    pub fn f64(&mut self) -> Result<f64> {
        self.array().map(f64::from_le_bytes)
    }
}

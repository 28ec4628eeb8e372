//! Binary containers: `SFD1` for gridded fields, `SFW1` for named weight tensors.
//!
//! Both share one layout: a 4-byte magic, a little-endian `u32` header length,
//! a UTF-8 JSON header, then a flat little-endian `f64` payload.

mod sfd;
mod weights;

pub use sfd::{decode_sfd, encode_sfd, read_sfd, write_sfd, SfdFile, SfdHeader, SFD_MAGIC};
pub use weights::{decode_weights, encode_weights, read_weights, write_weights, NamedTensor, SFW_MAGIC};

use thiserror::Error;

/// Container decoding and encoding failures.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },

    #[error("truncated header: declared {declared} bytes, {available} available")]
    TruncatedHeader { declared: usize, available: usize },

    #[error("malformed header: {0}")]
    BadHeader(String),

    #[error("unknown grid kind {0:?}")]
    UnknownGridKind(String),

    #[error("header mismatch: {0}")]
    HeaderMismatch(String),

    #[error("payload length mismatch: expected {expected} bytes, found {found}")]
    PayloadLength { expected: usize, found: usize },
}

impl FormatError {
    /// Stable numeric code, distinct per variant.
    pub fn code(&self) -> u32 {
        match self {
            FormatError::Io(_) => 1,
            FormatError::BadMagic { .. } => 2,
            FormatError::TruncatedHeader { .. } => 3,
            FormatError::BadHeader(_) => 4,
            FormatError::UnknownGridKind(_) => 5,
            FormatError::HeaderMismatch(_) => 6,
            FormatError::PayloadLength { .. } => 7,
        }
    }
}

/// Splits `bytes` into (JSON header, payload) after checking the magic.
fn split_container<'a>(bytes: &'a [u8], magic: &[u8; 4]) -> Result<(&'a [u8], &'a [u8]), FormatError> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(FormatError::BadMagic {
            expected: *magic,
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < 8 {
        return Err(FormatError::TruncatedHeader { declared: 4, available: bytes.len() - 4 });
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let rest = &bytes[8..];
    if rest.len() < len {
        return Err(FormatError::TruncatedHeader { declared: len, available: rest.len() });
    }
    Ok(rest.split_at(len))
}

fn join_container(magic: &[u8; 4], header: &[u8], payload: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + header.len() + 8 * payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode_f64s(payload: &[u8], count: usize) -> Result<Vec<f64>, FormatError> {
    if payload.len() != 8 * count {
        return Err(FormatError::PayloadLength { expected: 8 * count, found: payload.len() });
    }
    Ok(payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

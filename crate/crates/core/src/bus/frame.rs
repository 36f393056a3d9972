//! Bit-exact record framing shared by the bus, the socket transport, the
//! session log, and the dataset container.
//!
//! Frame layout, all integers little-endian:
//!   magic  4 bytes  0x48 0x57 0x4B 0x52
//!   stream 1 byte
//!   time   8 bytes  unsigned nanoseconds since session start
//!   length 4 bytes  payload byte count
//!   payload
//!   crc    4 bytes  CRC32 (IEEE) of every preceding frame byte

use thiserror::Error;

pub const FRAME_MAGIC: [u8; 4] = [0x48, 0x57, 0x4B, 0x52];

/// Fixed bytes before the payload: magic + stream + timestamp + length.
pub const FRAME_HEADER_LEN: usize = 17;

/// Bytes added around a payload: header plus trailing CRC.
pub const FRAME_OVERHEAD: usize = FRAME_HEADER_LEN + 4;

/// One transportable sensor event: a stream id, a nanosecond timestamp, and
/// an opaque stream-specific payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampedRecord {
    pub stream_id: u8,
    pub timestamp_ns: u64,
    pub payload: Vec<u8>,
}

#[derive(Debug, Error)]
pub enum EncodeError {
    /// Payload length must fit the 32-bit length field.
    #[error("payload of {0} bytes exceeds the frame format limit")]
    PayloadTooLarge(usize),
}

/// The three distinguishable decode failures.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    /// First four bytes are not the frame magic.
    #[error("bad frame magic")]
    BadMagic,
    /// Frame is well-formed but its checksum does not match.
    #[error("frame crc mismatch")]
    CrcMismatch,
    /// Buffer ends before the frame does.
    #[error("truncated frame")]
    Truncated,
}

/// Appends the encoded frame to `out`. Returns the encoded length.
pub fn encode_frame_into(record: &TimestampedRecord, out: &mut Vec<u8>) -> Result<usize, EncodeError> {
    if record.payload.len() > u32::MAX as usize {
        return Err(EncodeError::PayloadTooLarge(record.payload.len()));
    }
    let start = out.len();
    out.extend_from_slice(&FRAME_MAGIC);
    out.push(record.stream_id);
    out.extend_from_slice(&record.timestamp_ns.to_le_bytes());
    out.extend_from_slice(&(record.payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&record.payload);
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out.len() - start)
}

pub fn encode_frame(record: &TimestampedRecord) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::with_capacity(record.payload.len() + FRAME_OVERHEAD);
    encode_frame_into(record, &mut out)?;
    Ok(out)
}

/// Decodes one frame from the front of `bytes`, returning the record and the
/// number of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(TimestampedRecord, usize), DecodeError> {
    // Magic is judged on the bytes that exist: a short prefix of the magic is
    // a truncation, a mismatch is a framing error.
    let probe = bytes.len().min(4);
    if bytes[..probe] != FRAME_MAGIC[..probe] {
        return Err(DecodeError::BadMagic);
    }
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(DecodeError::Truncated);
    }
    let stream_id = bytes[4];
    let timestamp_ns = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
    let len = u32::from_le_bytes(bytes[13..17].try_into().unwrap()) as usize;
    let total = FRAME_HEADER_LEN + len + 4;
    if bytes.len() < total {
        return Err(DecodeError::Truncated);
    }
    let crc_stored = u32::from_le_bytes(bytes[total - 4..total].try_into().unwrap());
    let crc_actual = crc32fast::hash(&bytes[..total - 4]);
    if crc_stored != crc_actual {
        return Err(DecodeError::CrcMismatch);
    }
    Ok((
        TimestampedRecord {
            stream_id,
            timestamp_ns,
            payload: bytes[FRAME_HEADER_LEN..FRAME_HEADER_LEN + len].to_vec(),
        },
        total,
    ))
}

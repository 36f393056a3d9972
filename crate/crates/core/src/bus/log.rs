//! Append-only session log: a length-prefixed, checksummed header followed
//! by frames until end of file. A torn tail is reported, never fatal; any
//! other corruption is an error.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::frame::{decode_frame, encode_frame_into, DecodeError, TimestampedRecord};

pub const LOG_MAGIC: [u8; 4] = [0x48, 0x57, 0x4B, 0x4C];
pub const LOG_VERSION: u32 = 1;
const HEADER_BODY_LEN: usize = 72;

/// Identifies what produced the log: content hashes of the scene and session
/// config plus the logical session start time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogHeader {
    pub version: u32,
    pub scene_hash: [u8; 32],
    pub config_hash: [u8; 32],
    pub start_time_ns: u64,
}

impl LogHeader {
    pub fn new(scene_hash: [u8; 32], config_hash: [u8; 32], start_time_ns: u64) -> Self {
        LogHeader {
            version: LOG_VERSION,
            scene_hash,
            config_hash,
            start_time_ns,
        }
    }

    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + HEADER_BODY_LEN + 4);
        out.extend_from_slice(&LOG_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(HEADER_BODY_LEN as u32).to_le_bytes());
        out.extend_from_slice(&self.scene_hash);
        out.extend_from_slice(&self.config_hash);
        out.extend_from_slice(&self.start_time_ns.to_le_bytes());
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }
}

/// A fully loaded log. `truncated` flags a torn trailing frame; the records
/// before it are intact.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub header: LogHeader,
    pub records: Vec<TimestampedRecord>,
    pub truncated: bool,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log io error: {0}")]
    Io(#[from] std::io::Error),
    /// Header magic, checksum, version, or layout is wrong.
    #[error("corrupt log header: {0}")]
    CorruptHeader(String),
    /// A frame in the body failed to decode (other than a torn tail).
    #[error("corrupt log frame: {0}")]
    Frame(DecodeError),
    /// Writers must keep per-stream timestamps non-decreasing.
    #[error("stream {stream} timestamp {ts} precedes {prev}")]
    StreamOrder { stream: u8, ts: u64, prev: u64 },
}

/// Streaming frame writer over any byte sink.
pub struct LogWriter<W: Write> {
    sink: W,
    last_ts: HashMap<u8, u64>,
    scratch: Vec<u8>,
}

impl LogWriter<BufWriter<std::fs::File>> {
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self, LogError> {
        let file = std::fs::File::create(path)?;
        LogWriter::new(BufWriter::new(file), header)
    }
}

impl<W: Write> LogWriter<W> {
    pub fn new(mut sink: W, header: &LogHeader) -> Result<Self, LogError> {
        sink.write_all(&header.encode())?;
        Ok(LogWriter {
            sink,
            last_ts: HashMap::new(),
            scratch: Vec::new(),
        })
    }

    pub fn append(&mut self, record: &TimestampedRecord) -> Result<(), LogError> {
        if let Some(&prev) = self.last_ts.get(&record.stream_id) {
            if record.timestamp_ns < prev {
                return Err(LogError::StreamOrder {
                    stream: record.stream_id,
                    ts: record.timestamp_ns,
                    prev,
                });
            }
        }
        self.last_ts.insert(record.stream_id, record.timestamp_ns);
        self.scratch.clear();
        encode_frame_into(record, &mut self.scratch)
            .map_err(|e| LogError::Io(std::io::Error::other(e)))?;
        self.sink.write_all(&self.scratch)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, LogError> {
        self.sink.flush()?;
        Ok(self.sink)
    }
}

/// Incremental frame decoder over any byte source; shared by the log reader
/// and the socket transport.
pub struct FrameReader<R: Read> {
    source: R,
    buf: Vec<u8>,
    start: usize,
    eof: bool,
}

/// Outcome of pulling the next frame from a byte source.
pub enum NextFrame {
    Frame(TimestampedRecord),
    /// Clean end of stream.
    End,
    /// Stream ended inside a frame.
    TornTail,
}

impl<R: Read> FrameReader<R> {
    pub fn new(source: R) -> Self {
        FrameReader {
            source,
            buf: Vec::new(),
            start: 0,
            eof: false,
        }
    }

    fn refill(&mut self) -> std::io::Result<usize> {
        if self.start > 0 && (self.start == self.buf.len() || self.start > 1 << 20) {
            self.buf.drain(..self.start);
            self.start = 0;
        }
        let mut chunk = [0u8; 65536];
        let n = self.source.read(&mut chunk)?;
        if n == 0 {
            self.eof = true;
        } else {
            self.buf.extend_from_slice(&chunk[..n]);
        }
        Ok(n)
    }

    pub fn next_frame(&mut self) -> Result<NextFrame, LogError> {
        loop {
            if self.start == self.buf.len() && self.eof {
                return Ok(NextFrame::End);
            }
            match decode_frame(&self.buf[self.start..]) {
                Ok((record, used)) => {
                    self.start += used;
                    return Ok(NextFrame::Frame(record));
                }
                Err(DecodeError::Truncated) => {
                    if self.eof {
                        return Ok(NextFrame::TornTail);
                    }
                    self.refill()?;
                }
                Err(e) => return Err(LogError::Frame(e)),
            }
        }
    }
}

fn read_header<R: Read>(r: &mut R) -> Result<LogHeader, LogError> {
    let mut fixed = [0u8; 12];
    r.read_exact(&mut fixed)
        .map_err(|_| LogError::CorruptHeader("file shorter than a header".into()))?;
    if fixed[..4] != LOG_MAGIC {
        return Err(LogError::CorruptHeader("bad magic".into()));
    }
    let version = u32::from_le_bytes(fixed[4..8].try_into().unwrap());
    let body_len = u32::from_le_bytes(fixed[8..12].try_into().unwrap()) as usize;
    if version != LOG_VERSION {
        return Err(LogError::CorruptHeader(format!(
            "unsupported version {version}"
        )));
    }
    if body_len != HEADER_BODY_LEN {
        return Err(LogError::CorruptHeader(format!(
            "version 1 header body must be {HEADER_BODY_LEN} bytes, found {body_len}"
        )));
    }
    let mut body = vec![0u8; body_len + 4];
    r.read_exact(&mut body)
        .map_err(|_| LogError::CorruptHeader("header cut short".into()))?;
    let crc_stored = u32::from_le_bytes(body[body_len..].try_into().unwrap());
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&fixed);
    hasher.update(&body[..body_len]);
    if hasher.finalize() != crc_stored {
        return Err(LogError::CorruptHeader("header crc mismatch".into()));
    }
    let mut scene_hash = [0u8; 32];
    scene_hash.copy_from_slice(&body[..32]);
    let mut config_hash = [0u8; 32];
    config_hash.copy_from_slice(&body[32..64]);
    let start_time_ns = u64::from_le_bytes(body[64..72].try_into().unwrap());
    Ok(LogHeader {
        version,
        scene_hash,
        config_hash,
        start_time_ns,
    })
}

/// Opens a log for streaming: returns the header and a frame reader
/// positioned at the first frame.
pub fn open_log(path: &Path) -> Result<(LogHeader, FrameReader<BufReader<std::fs::File>>), LogError>
{
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let header = read_header(&mut reader)?;
    Ok((header, FrameReader::new(reader)))
}

/// Loads a whole log. Complete frames before a torn tail are kept and the
/// truncation is flagged.
pub fn read_log(path: &Path) -> Result<SessionLog, LogError> {
    let (header, mut frames) = open_log(path)?;
    let mut records = Vec::new();
    let mut truncated = false;
    loop {
        match frames.next_frame()? {
            NextFrame::Frame(rec) => records.push(rec),
            NextFrame::End => break,
            NextFrame::TornTail => {
                truncated = true;
                break;
            }
        }
    }
    Ok(SessionLog {
        header,
        records,
        truncated,
    })
}

/// Writes a complete log in one call.
pub fn write_log<'a>(
    path: &Path,
    header: &LogHeader,
    records: impl IntoIterator<Item = &'a TimestampedRecord>,
) -> Result<(), LogError> {
    let mut writer = LogWriter::create(path, header)?;
    for rec in records {
        writer.append(rec)?;
    }
    writer.finish()?;
    Ok(())
}

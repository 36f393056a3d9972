//! Frame transport over Unix domain sockets. The byte stream is exactly the
//! frame section of a session log, so a socket capture and a log replay are
//! interchangeable.

use std::io::Write;
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::Path;
use std::time::{Duration, Instant};

use super::frame::{encode_frame_into, TimestampedRecord};

/// Binds a listener, replacing any stale socket file at the path.
pub fn bind(path: &Path) -> std::io::Result<UnixListener> {
    if path.exists() {
        std::fs::remove_file(path)?;
    }
    UnixListener::bind(path)
}

/// Connects to a socket that may not be listening yet, retrying until the
/// deadline passes.
pub fn connect_with_retry(path: &Path, timeout: Duration) -> std::io::Result<UnixStream> {
    let deadline = Instant::now() + timeout;
    loop {
        match UnixStream::connect(path) {
            Ok(stream) => return Ok(stream),
            Err(e) => {
                if Instant::now() >= deadline {
                    return Err(e);
                }
                std::thread::sleep(Duration::from_millis(20));
            }
        }
    }
}

/// Writes records as frames. `speed` of `Some(s)` paces emission so record
/// timestamp gaps play back at `s` times real time; `None` streams flat out.
/// Returns the number of records sent.
pub fn send_records<'a, W: Write>(
    mut sink: W,
    records: impl IntoIterator<Item = &'a TimestampedRecord>,
    speed: Option<f64>,
) -> std::io::Result<usize> {
    let mut scratch = Vec::new();
    let mut sent = 0usize;
    let mut prev_ts: Option<u64> = None;
    for record in records {
        if let (Some(s), Some(prev)) = (speed, prev_ts) {
            let gap_ns = record.timestamp_ns.saturating_sub(prev) as f64 / s.max(1e-9);
            if gap_ns >= 1.0 {
                std::thread::sleep(Duration::from_nanos(gap_ns as u64));
            }
        }
        prev_ts = Some(record.timestamp_ns);
        scratch.clear();
        encode_frame_into(record, &mut scratch).map_err(std::io::Error::other)?;
        sink.write_all(&scratch)?;
        sent += 1;
    }
    sink.flush()?;
    Ok(sent)
}

//! Per-stream payload encodings, little-endian throughout.
//!
//!   camera (0), camera_rear (5): u32 width, u32 height, f32 max_range,
//!       width*height f32 depths row-major
//!   lidar (1): u32 ray count, f32 max_range, then f32 ranges
//!   imu (2): 9 f64: acceleration xyz, magnetic xyz, orientation rpy
//!   mmwave (3): u32 beam count, u32 best index, then f64 SNR dB
//!   position (4): 2 f64: x, y
//!
//! Camera and LiDAR carry f32 samples: both are quantized real sensors and
//! dominate the byte volume. IMU, position, and SNR stay f64 because dead
//! reckoning and normalization integrate over them.

use thiserror::Error;

use crate::geometry::Vec2;
use crate::propagation::BeamSweep;
use crate::sensors::{
    CameraFrame, ImuSample, LidarScan, PositionSample, SensorRecord, STREAM_CAMERA,
    STREAM_CAMERA_REAR, STREAM_IMU, STREAM_LIDAR, STREAM_MMWAVE, STREAM_POSITION,
};

use super::frame::TimestampedRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PayloadError {
    /// Stream id not produced by any sensor.
    #[error("unknown stream id {0}")]
    UnknownStream(u8),
    /// Payload bytes do not match the stream's layout.
    #[error("malformed {0} payload")]
    Malformed(&'static str),
}

pub(crate) struct Writer {
    pub(crate) buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new(capacity: usize) -> Self {
        Writer {
            buf: Vec::with_capacity(capacity),
        }
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f32(&mut self, v: f64) {
        self.buf.extend_from_slice(&(v as f32).to_le_bytes());
    }

    pub(crate) fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8], what: &'static str) -> Self {
        Reader { buf, pos: 0, what }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], PayloadError> {
        if self.pos + n > self.buf.len() {
            return Err(PayloadError::Malformed(self.what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32, PayloadError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, PayloadError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f64, PayloadError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64)
    }

    pub(crate) fn f64(&mut self) -> Result<f64, PayloadError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn finish(&self) -> Result<(), PayloadError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(PayloadError::Malformed(self.what))
        }
    }
}

pub(crate) fn camera_payload(f: &CameraFrame) -> Vec<u8> {
    let mut w = Writer::new(12 + 4 * f.pixels.len());
    w.u32(f.width as u32);
    w.u32(f.height as u32);
    w.f32(f.max_range);
    for px in &f.pixels {
        w.f32(*px);
    }
    w.buf
}

/// Frames a typed sensor record for transport.
pub fn to_frame(record: &SensorRecord) -> TimestampedRecord {
    let (payload, stream_id) = match record {
        SensorRecord::Camera(f) => (camera_payload(f), STREAM_CAMERA),
        SensorRecord::CameraRear(f) => (camera_payload(f), STREAM_CAMERA_REAR),
        SensorRecord::Lidar(s) => {
            let mut w = Writer::new(8 + 4 * s.ranges.len());
            w.u32(s.ranges.len() as u32);
            w.f32(s.max_range);
            for r in &s.ranges {
                w.f32(*r);
            }
            (w.buf, STREAM_LIDAR)
        }
        SensorRecord::Imu(s) => {
            let mut w = Writer::new(72);
            for v in s.acceleration.iter().chain(&s.magnetic).chain(&s.orientation) {
                w.f64(*v);
            }
            (w.buf, STREAM_IMU)
        }
        SensorRecord::Mmwave(s) => {
            let mut w = Writer::new(8 + 8 * s.snr_db.len());
            w.u32(s.snr_db.len() as u32);
            w.u32(s.best_index as u32);
            for v in &s.snr_db {
                w.f64(*v);
            }
            (w.buf, STREAM_MMWAVE)
        }
        SensorRecord::Position(s) => {
            let mut w = Writer::new(16);
            w.f64(s.position.x);
            w.f64(s.position.y);
            (w.buf, STREAM_POSITION)
        }
    };
    TimestampedRecord {
        stream_id,
        timestamp_ns: record.timestamp_ns(),
        payload,
    }
}

pub(crate) fn camera_from(rec: &TimestampedRecord) -> Result<CameraFrame, PayloadError> {
    let mut r = Reader::new(&rec.payload, "camera");
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let max_range = r.f32()?;
    let count = width
        .checked_mul(height)
        .ok_or(PayloadError::Malformed("camera"))?;
    let mut pixels = Vec::with_capacity(count);
    for _ in 0..count {
        pixels.push(r.f32()?);
    }
    r.finish()?;
    Ok(CameraFrame {
        timestamp_ns: rec.timestamp_ns,
        width,
        height,
        pixels,
        max_range,
    })
}

/// Decodes a framed record back into its typed form.
pub fn from_frame(rec: &TimestampedRecord) -> Result<SensorRecord, PayloadError> {
    match rec.stream_id {
        STREAM_CAMERA => Ok(SensorRecord::Camera(camera_from(rec)?)),
        STREAM_CAMERA_REAR => Ok(SensorRecord::CameraRear(camera_from(rec)?)),
        STREAM_LIDAR => {
            let mut r = Reader::new(&rec.payload, "lidar");
            let n = r.u32()? as usize;
            let max_range = r.f32()?;
            let mut ranges = Vec::with_capacity(n);
            for _ in 0..n {
                ranges.push(r.f32()?);
            }
            r.finish()?;
            Ok(SensorRecord::Lidar(LidarScan {
                timestamp_ns: rec.timestamp_ns,
                ranges,
                max_range,
            }))
        }
        STREAM_IMU => {
            let mut r = Reader::new(&rec.payload, "imu");
            let mut v = [0.0; 9];
            for slot in v.iter_mut() {
                *slot = r.f64()?;
            }
            r.finish()?;
            Ok(SensorRecord::Imu(ImuSample {
                timestamp_ns: rec.timestamp_ns,
                acceleration: [v[0], v[1], v[2]],
                magnetic: [v[3], v[4], v[5]],
                orientation: [v[6], v[7], v[8]],
            }))
        }
        STREAM_MMWAVE => {
            let mut r = Reader::new(&rec.payload, "mmwave");
            let n = r.u32()? as usize;
            let best_index = r.u32()? as usize;
            let mut snr_db = Vec::with_capacity(n);
            for _ in 0..n {
                snr_db.push(r.f64()?);
            }
            r.finish()?;
            if best_index >= n.max(1) {
                return Err(PayloadError::Malformed("mmwave"));
            }
            Ok(SensorRecord::Mmwave(BeamSweep {
                timestamp_ns: rec.timestamp_ns,
                snr_db,
                best_index,
            }))
        }
        STREAM_POSITION => {
            let mut r = Reader::new(&rec.payload, "position");
            let x = r.f64()?;
            let y = r.f64()?;
            r.finish()?;
            Ok(SensorRecord::Position(PositionSample {
                timestamp_ns: rec.timestamp_ns,
                position: Vec2::new(x, y),
            }))
        }
        other => Err(PayloadError::UnknownStream(other)),
    }
}

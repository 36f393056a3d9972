//! Turns a recorded session log into training rows: every beam sweep becomes
//! an anchor, the other streams are pulled onto its timestamp (linear
//! interpolation for numeric streams, nearest frame for camera images), SNRs
//! are z-scored with statistics frozen on the chronological training split,
//! and IMU readings are dead-reckoned into positions relative to the session
//! start. Rear camera frames, when present, are ignored here.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::bus::frame::{encode_frame_into, TimestampedRecord};
use crate::bus::log::{LogError, SessionLog};
use crate::bus::payload::{self, PayloadError, Reader, Writer};
use crate::geometry::Vec2;
use crate::propagation::{argmax_lowest, BeamSweep};
use crate::sensors::{
    downsample_frame, stream_name, CameraFrame, ImuSample, LidarScan, PositionSample,
    SensorRates, SensorRecord, STREAM_CAMERA, STREAM_IMU, STREAM_LIDAR, STREAM_MMWAVE,
    STREAM_POSITION,
};

/// Stream id of dataset rows inside the dataset container.
pub const DATASET_STREAM_ID: u8 = 0x20;
pub const DATASET_MAGIC: [u8; 4] = [0x48, 0x57, 0x4B, 0x44];
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("dataset io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Payload(#[from] PayloadError),
    /// Log holds no beam sweeps to anchor on.
    #[error("log contains no beam sweeps")]
    NoAnchors,
    /// A stream the pipeline needs is absent from the log.
    #[error("log is missing the {0} stream")]
    MissingStream(&'static str),
    /// Interpolation needs at least two records.
    #[error("{0} stream has fewer than two records")]
    TooFewRecords(&'static str),
    /// Query time outside the stream's coverage.
    #[error("time {t_ns} ns is outside the stream's coverage")]
    OutOfRange { t_ns: u64 },
    /// Dead reckoning requires time-ordered samples.
    #[error("imu timestamps go backwards: {prev_ns} then {next_ns}")]
    NonMonotoneImu { prev_ns: u64, next_ns: u64 },
    /// All training SNR values are identical; z-scoring is undefined.
    #[error("training snr distribution is degenerate (zero spread)")]
    DegenerateSnr,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("bad dataset options: {0}")]
    BadOptions(String),
    #[error("corrupt dataset: {0}")]
    CorruptDataset(String),
}

/// One training row, anchored on a beam sweep's emitted timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSample {
    pub timestamp_ns: u64,
    /// Nearest camera frame, average-pooled by the configured factor.
    pub camera: CameraFrame,
    pub camera_gap_ns: u64,
    /// Ranges linearly interpolated at the anchor time.
    pub lidar: Vec<f64>,
    pub lidar_gap_ns: u64,
    /// Dead-reckoned position relative to the session start.
    pub rel_position: Vec2,
    /// Yaw of the nearest inertial sample.
    pub yaw: f64,
    /// Dead-reckoned positions at the trailing inertial sample times,
    /// oldest first, at most `imu_window` of them.
    pub imu_track: Vec<Vec2>,
    pub imu_gap_ns: u64,
    /// Normalized per-beam SNR.
    pub snr_norm: Vec<f64>,
    /// Best beam index from the raw sweep.
    pub label: usize,
}

/// Z-score statistics frozen on the training split. The per-beam variant
/// substitutes a unit spread for beams that never vary in training, so their
/// normalized value stays zero there and unscaled deviations elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub enum NormalizationStats {
    Pooled { mean: f64, std: f64 },
    PerBeam { mean: Vec<f64>, std: Vec<f64> },
}

impl NormalizationStats {
    /// Population statistics over the training sweeps.
    pub fn compute(sweeps: &[&[f64]], per_beam: bool) -> Result<NormalizationStats, AlignError> {
        if sweeps.is_empty() || sweeps[0].is_empty() {
            return Err(AlignError::InsufficientData(
                "no training sweeps for normalization".into(),
            ));
        }
        let n_beams = sweeps[0].len();
        if per_beam {
            let mut mean = vec![0.0; n_beams];
            let mut std = vec![0.0; n_beams];
            for j in 0..n_beams {
                let column: Vec<f64> = sweeps.iter().map(|s| s[j]).collect();
                let (m, s) = mean_std(&column);
                mean[j] = m;
                std[j] = if s > 0.0 { s } else { 1.0 };
            }
            Ok(NormalizationStats::PerBeam { mean, std })
        } else {
            let pooled: Vec<f64> = sweeps.iter().flat_map(|s| s.iter().copied()).collect();
            let (mean, std) = mean_std(&pooled);
            if !(std > 0.0) {
                return Err(AlignError::DegenerateSnr);
            }
            Ok(NormalizationStats::Pooled { mean, std })
        }
    }

    pub fn apply(&self, snr: &[f64]) -> Vec<f64> {
        match self {
            NormalizationStats::Pooled { mean, std } => {
                snr.iter().map(|x| (x - mean) / std).collect()
            }
            NormalizationStats::PerBeam { mean, std } => snr
                .iter()
                .enumerate()
                .map(|(j, x)| (x - mean[j]) / std[j])
                .collect(),
        }
    }

    /// The pooled map is affine and order-preserving; per-beam is not.
    pub fn preserves_argmax(&self) -> bool {
        matches!(self, NormalizationStats::Pooled { .. })
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Dead-reckoned state at one inertial sample time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadReckonPoint {
    pub timestamp_ns: u64,
    /// Position relative to the first sample.
    pub rel_position: Vec2,
    pub velocity: Vec2,
    pub yaw: f64,
}

/// Rotates body accelerations into the world frame by yaw and
/// double-integrates with the trapezoidal rule from rest.
pub fn dead_reckon(samples: &[ImuSample]) -> Result<Vec<DeadReckonPoint>, AlignError> {
    if samples.len() < 2 {
        return Err(AlignError::TooFewRecords("imu"));
    }
    let world_accel = |s: &ImuSample| {
        Vec2::new(s.acceleration[0], s.acceleration[1]).rotate(s.orientation[2])
    };
    let mut out = Vec::with_capacity(samples.len());
    out.push(DeadReckonPoint {
        timestamp_ns: samples[0].timestamp_ns,
        rel_position: Vec2::ZERO,
        velocity: Vec2::ZERO,
        yaw: samples[0].orientation[2],
    });
    for pair in samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.timestamp_ns < a.timestamp_ns {
            return Err(AlignError::NonMonotoneImu {
                prev_ns: a.timestamp_ns,
                next_ns: b.timestamp_ns,
            });
        }
        let dt = (b.timestamp_ns - a.timestamp_ns) as f64 * 1e-9;
        let prev = *out.last().unwrap();
        let accel_mid = world_accel(a).add(world_accel(b)).scale(0.5);
        let velocity = prev.velocity.add(accel_mid.scale(dt));
        let rel_position = prev
            .rel_position
            .add(prev.velocity.add(velocity).scale(0.5 * dt));
        out.push(DeadReckonPoint {
            timestamp_ns: b.timestamp_ns,
            rel_position,
            velocity,
            yaw: b.orientation[2],
        });
    }
    Ok(out)
}

/// Index of the record nearest to `t`, ties to the earlier one, plus the gap.
/// `times` must be sorted. Returns None on an empty slice.
pub fn nearest_index(times: &[u64], t: u64) -> Option<(usize, u64)> {
    if times.is_empty() {
        return None;
    }
    let i = times.partition_point(|&x| x < t);
    let after = i.min(times.len() - 1);
    let before = i.saturating_sub(1);
    let gap = |idx: usize| times[idx].abs_diff(t);
    if gap(before) <= gap(after) {
        Some((before, gap(before)))
    } else {
        Some((after, gap(after)))
    }
}

/// Bracketing indices and the fractional weight of the later record.
fn bracket(times: &[u64], t: u64) -> Result<(usize, usize, f64), AlignError> {
    if times.len() < 2 {
        return Err(AlignError::TooFewRecords("numeric"));
    }
    if t < times[0] || t > *times.last().unwrap() {
        return Err(AlignError::OutOfRange { t_ns: t });
    }
    let i = times.partition_point(|&x| x < t);
    if i < times.len() && times[i] == t {
        return Ok((i, i, 0.0));
    }
    let (lo, hi) = (i - 1, i);
    let span = (times[hi] - times[lo]) as f64;
    let w = (t - times[lo]) as f64 / span;
    Ok((lo, hi, w))
}

/// Component-wise linear interpolation between the bracketing records.
pub fn interpolate_numeric(
    times: &[u64],
    rows: &[Vec<f64>],
    t: u64,
) -> Result<Vec<f64>, AlignError> {
    let (lo, hi, w) = bracket(times, t)?;
    if lo == hi {
        return Ok(rows[lo].clone());
    }
    Ok(rows[lo]
        .iter()
        .zip(rows[hi].iter())
        .map(|(a, b)| a + (b - a) * w)
        .collect())
}

/// Extracts the beam sweeps from a log, in emission order.
pub fn anchor_on_mmwave(log: &SessionLog) -> Result<Vec<BeamSweep>, AlignError> {
    let mut sweeps = Vec::new();
    for rec in &log.records {
        if rec.stream_id != STREAM_MMWAVE {
            continue;
        }
        match payload::from_frame(rec)? {
            SensorRecord::Mmwave(sweep) => sweeps.push(sweep),
            _ => unreachable!("stream id 3 decodes to a sweep"),
        }
    }
    if sweeps.is_empty() {
        return Err(AlignError::NoAnchors);
    }
    Ok(sweeps)
}

/// Knobs for dataset construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetOptions {
    /// Average-pool factor applied to camera frames before storage.
    pub camera_downsample: usize,
    /// Leading fraction of anchors whose samples form the training split.
    pub train_fraction: f64,
    /// Per-beam instead of pooled z-scoring (breaks argmax preservation).
    pub per_beam_norm: bool,
    /// Nominal rates, for staleness bounds.
    pub rates: SensorRates,
    /// Allowance on top of half-period staleness bounds for clock error.
    pub max_clock_error_ns: u64,
    /// Trailing inertial positions kept per sample.
    pub imu_window: usize,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            camera_downsample: 1,
            train_fraction: 0.8,
            per_beam_norm: false,
            rates: SensorRates::default(),
            max_clock_error_ns: 2_000_000,
            imu_window: 10,
        }
    }
}

impl DatasetOptions {
    fn validate(&self) -> Result<(), AlignError> {
        if self.camera_downsample == 0 {
            return Err(AlignError::BadOptions("camera_downsample must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(AlignError::BadOptions(
                "train_fraction must be in (0, 1]".into(),
            ));
        }
        if self.imu_window == 0 {
            return Err(AlignError::BadOptions("imu_window must be >= 1".into()));
        }
        Ok(())
    }
}

/// Anchors dropped during construction, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropStats {
    /// No bracketing or no preceding data for some constituent.
    pub no_bracket: usize,
    /// A constituent's gap exceeded its staleness bound.
    pub stale: usize,
}

impl DropStats {
    pub fn total(&self) -> usize {
        self.no_bracket + self.stale
    }
}

/// A built dataset: rows plus the frozen normalization statistics and
/// provenance carried over from the log header.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scene_hash: [u8; 32],
    pub config_hash: [u8; 32],
    pub beam_count: usize,
    pub lidar_max_range: f64,
    /// Ground-truth position of the first position record; lets consumers
    /// turn dead-reckoned relative positions into scene coordinates.
    pub start_position: Vec2,
    /// Timestamp of the last training anchor; the chronological split line.
    pub cutoff_ns: u64,
    /// Samples at or before the cutoff, as a prefix of `samples`.
    pub train_count: usize,
    pub stats: NormalizationStats,
    pub drops: DropStats,
    /// Total anchors considered, kept plus dropped.
    pub anchors: usize,
    pub samples: Vec<AlignedSample>,
}

struct StreamTables {
    cameras: Vec<CameraFrame>,
    camera_ts: Vec<u64>,
    lidars: Vec<LidarScan>,
    lidar_ts: Vec<u64>,
    imus: Vec<ImuSample>,
    sweeps: Vec<BeamSweep>,
    positions: Vec<PositionSample>,
}

fn split_streams(log: &SessionLog) -> Result<StreamTables, AlignError> {
    let mut t = StreamTables {
        cameras: Vec::new(),
        camera_ts: Vec::new(),
        lidars: Vec::new(),
        lidar_ts: Vec::new(),
        imus: Vec::new(),
        sweeps: Vec::new(),
        positions: Vec::new(),
    };
    for rec in &log.records {
        match payload::from_frame(rec)? {
            SensorRecord::Camera(f) => {
                t.camera_ts.push(f.timestamp_ns);
                t.cameras.push(f);
            }
            SensorRecord::Lidar(s) => {
                t.lidar_ts.push(s.timestamp_ns);
                t.lidars.push(s);
            }
            SensorRecord::Imu(s) => t.imus.push(s),
            SensorRecord::Mmwave(s) => t.sweeps.push(s),
            SensorRecord::Position(p) => t.positions.push(p),
            SensorRecord::CameraRear(_) => {}
        }
    }
    for (found, id) in [
        (!t.cameras.is_empty(), STREAM_CAMERA),
        (t.lidars.len() >= 2, STREAM_LIDAR),
        (t.imus.len() >= 2, STREAM_IMU),
        (!t.sweeps.is_empty(), STREAM_MMWAVE),
        (!t.positions.is_empty(), STREAM_POSITION),
    ] {
        if !found {
            return Err(AlignError::MissingStream(stream_name(id)));
        }
    }
    Ok(t)
}

fn staleness_bound_ns(rates: &SensorRates, stream: u8, slop_ns: u64) -> u64 {
    let half_own = rates.period_ns(stream) / 2;
    let half_anchor = rates.period_ns(STREAM_MMWAVE) / 2;
    half_own.min(half_anchor) + slop_ns
}

/// Builds one aligned row per usable sweep. Anchors whose constituents are
/// unavailable or stale are dropped and counted, never extrapolated.
pub fn build_dataset(log: &SessionLog, options: &DatasetOptions) -> Result<Dataset, AlignError> {
    options.validate()?;
    let tables = split_streams(log)?;
    let sweeps = &tables.sweeps;
    let beam_count = sweeps[0].snr_db.len();
    if sweeps.iter().any(|s| s.snr_db.len() != beam_count) {
        return Err(AlignError::CorruptDataset("beam count varies across sweeps".into()));
    }

    let n_train_anchors = (options.train_fraction * sweeps.len() as f64).floor() as usize;
    if n_train_anchors == 0 {
        return Err(AlignError::InsufficientData(format!(
            "train fraction {} of {} anchors leaves no training data",
            options.train_fraction,
            sweeps.len()
        )));
    }
    let cutoff_ns = sweeps[n_train_anchors - 1].timestamp_ns;

    let track = dead_reckon(&tables.imus)?;
    let track_ts: Vec<u64> = track.iter().map(|p| p.timestamp_ns).collect();
    let lidar_rows: Vec<Vec<f64>> = tables.lidars.iter().map(|s| s.ranges.clone()).collect();

    let cam_bound = staleness_bound_ns(&options.rates, STREAM_CAMERA, options.max_clock_error_ns);
    let lidar_bound = staleness_bound_ns(&options.rates, STREAM_LIDAR, options.max_clock_error_ns);
    let imu_bound = staleness_bound_ns(&options.rates, STREAM_IMU, options.max_clock_error_ns);

    let mut drops = DropStats::default();
    let mut samples = Vec::new();
    let mut raw_snrs = Vec::new();
    for sweep in sweeps {
        let t = sweep.timestamp_ns;
        let (cam_idx, camera_gap_ns) =
            nearest_index(&tables.camera_ts, t).expect("camera stream checked non-empty");
        let lidar = match interpolate_numeric(&tables.lidar_ts, &lidar_rows, t) {
            Ok(v) => v,
            Err(AlignError::OutOfRange { .. }) => {
                drops.no_bracket += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let (_, lidar_gap_ns) =
            nearest_index(&tables.lidar_ts, t).expect("lidar stream checked non-empty");
        let rel_position = match bracket(&track_ts, t) {
            Ok((lo, hi, w)) => {
                let (a, b) = (track[lo].rel_position, track[hi].rel_position);
                a.add(b.sub(a).scale(w))
            }
            Err(AlignError::OutOfRange { .. }) => {
                drops.no_bracket += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let (imu_idx, imu_gap_ns) =
            nearest_index(&track_ts, t).expect("imu stream checked non-empty");
        let yaw = track[imu_idx].yaw;
        if camera_gap_ns > cam_bound || lidar_gap_ns > lidar_bound || imu_gap_ns > imu_bound {
            drops.stale += 1;
            continue;
        }
        let first_in_window = track_ts.partition_point(|&x| x <= t);
        let imu_track: Vec<Vec2> = track[..first_in_window]
            .iter()
            .rev()
            .take(options.imu_window)
            .rev()
            .map(|p| p.rel_position)
            .collect();
        if imu_track.is_empty() {
            drops.no_bracket += 1;
            continue;
        }
        let camera = downsample_frame(&tables.cameras[cam_idx], options.camera_downsample);
        raw_snrs.push(sweep.snr_db.clone());
        samples.push(AlignedSample {
            timestamp_ns: t,
            camera,
            camera_gap_ns,
            lidar,
            lidar_gap_ns,
            rel_position,
            yaw,
            imu_track,
            imu_gap_ns,
            snr_norm: Vec::new(),
            label: sweep.best_index,
        });
    }

    let train_count = samples
        .iter()
        .take_while(|s| s.timestamp_ns <= cutoff_ns)
        .count();
    if train_count == 0 {
        return Err(AlignError::InsufficientData(
            "no training anchors survived alignment".into(),
        ));
    }
    let train_views: Vec<&[f64]> = raw_snrs[..train_count].iter().map(Vec::as_slice).collect();
    let stats = NormalizationStats::compute(&train_views, options.per_beam_norm)?;
    for (sample, raw) in samples.iter_mut().zip(&raw_snrs) {
        sample.snr_norm = stats.apply(raw);
        if stats.preserves_argmax() {
            assert_eq!(
                argmax_lowest(&sample.snr_norm),
                sample.label,
                "pooled normalization must preserve the best beam"
            );
        }
    }

    Ok(Dataset {
        scene_hash: log.header.scene_hash,
        config_hash: log.header.config_hash,
        beam_count,
        lidar_max_range: tables.lidars[0].max_range,
        start_position: tables.positions[0].position,
        cutoff_ns,
        train_count,
        stats,
        drops,
        anchors: sweeps.len(),
        samples,
    })
}

fn header_bytes(ds: &Dataset) -> Vec<u8> {
    let mut w = Writer::new(256);
    w.buf.extend_from_slice(&DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    let mut body = Writer::new(192);
    body.buf.extend_from_slice(&ds.scene_hash);
    body.buf.extend_from_slice(&ds.config_hash);
    body.u32(ds.beam_count as u32);
    body.f64(ds.lidar_max_range);
    body.f64(ds.start_position.x);
    body.f64(ds.start_position.y);
    body.u64(ds.cutoff_ns);
    body.u32(ds.train_count as u32);
    body.u32(ds.anchors as u32);
    body.u32(ds.drops.no_bracket as u32);
    body.u32(ds.drops.stale as u32);
    match &ds.stats {
        NormalizationStats::Pooled { mean, std } => {
            body.buf.push(0);
            body.f64(*mean);
            body.f64(*std);
        }
        NormalizationStats::PerBeam { mean, std } => {
            body.buf.push(1);
            body.u32(mean.len() as u32);
            for m in mean {
                body.f64(*m);
            }
            for s in std {
                body.f64(*s);
            }
        }
    }
    w.u32(body.buf.len() as u32);
    w.buf.extend_from_slice(&body.buf);
    let crc = crc32fast::hash(&w.buf);
    w.u32(crc);
    w.buf
}

fn sample_payload(s: &AlignedSample) -> Vec<u8> {
    let mut w = Writer::new(64 + 8 * (s.camera.pixels.len() + s.lidar.len() + s.snr_norm.len()));
    w.u64(s.camera.timestamp_ns);
    w.u32(s.camera.width as u32);
    w.u32(s.camera.height as u32);
    w.f64(s.camera.max_range);
    for px in &s.camera.pixels {
        w.f64(*px);
    }
    w.u64(s.camera_gap_ns);
    w.u32(s.lidar.len() as u32);
    for r in &s.lidar {
        w.f64(*r);
    }
    w.u64(s.lidar_gap_ns);
    w.f64(s.rel_position.x);
    w.f64(s.rel_position.y);
    w.f64(s.yaw);
    w.u32(s.imu_track.len() as u32);
    for p in &s.imu_track {
        w.f64(p.x);
        w.f64(p.y);
    }
    w.u64(s.imu_gap_ns);
    w.u32(s.snr_norm.len() as u32);
    for v in &s.snr_norm {
        w.f64(*v);
    }
    w.u32(s.label as u32);
    w.buf
}

fn sample_from(rec: &TimestampedRecord, beam_count: usize) -> Result<AlignedSample, AlignError> {
    let mut r = Reader::new(&rec.payload, "dataset row");
    let cam_ts = r.u64()?;
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let max_range = r.f64()?;
    let count = width
        .checked_mul(height)
        .ok_or(PayloadError::Malformed("dataset row"))?;
    let mut pixels = Vec::new();
    for _ in 0..count {
        pixels.push(r.f64()?);
    }
    let camera = CameraFrame {
        timestamp_ns: cam_ts,
        width,
        height,
        pixels,
        max_range,
    };
    let camera_gap_ns = r.u64()?;
    let n_lidar = r.u32()? as usize;
    let mut lidar = Vec::new();
    for _ in 0..n_lidar {
        lidar.push(r.f64()?);
    }
    let lidar_gap_ns = r.u64()?;
    let rel_position = Vec2::new(r.f64()?, r.f64()?);
    let yaw = r.f64()?;
    let n_track = r.u32()? as usize;
    let mut imu_track = Vec::new();
    for _ in 0..n_track {
        imu_track.push(Vec2::new(r.f64()?, r.f64()?));
    }
    let imu_gap_ns = r.u64()?;
    let n_snr = r.u32()? as usize;
    let mut snr_norm = Vec::new();
    for _ in 0..n_snr {
        snr_norm.push(r.f64()?);
    }
    let label = r.u32()? as usize;
    r.finish()?;
    if n_snr != beam_count || label >= beam_count {
        return Err(AlignError::CorruptDataset(format!(
            "row at {} ns disagrees with header beam count {beam_count}",
            rec.timestamp_ns
        )));
    }
    Ok(AlignedSample {
        timestamp_ns: rec.timestamp_ns,
        camera,
        camera_gap_ns,
        lidar,
        lidar_gap_ns,
        rel_position,
        yaw,
        imu_track,
        imu_gap_ns,
        snr_norm,
        label,
    })
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<(), AlignError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(&header_bytes(ds))?;
    let mut scratch = Vec::new();
    for s in &ds.samples {
        let rec = TimestampedRecord {
            stream_id: DATASET_STREAM_ID,
            timestamp_ns: s.timestamp_ns,
            payload: sample_payload(s),
        };
        scratch.clear();
        encode_frame_into(&rec, &mut scratch).map_err(std::io::Error::other)?;
        out.write_all(&scratch)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, AlignError> {
    let mut reader = BufReader::new(std::fs::File::open(path)?);
    let mut fixed = [0u8; 12];
    reader
        .read_exact(&mut fixed)
        .map_err(|_| AlignError::CorruptDataset("file shorter than a header".into()))?;
    if fixed[..4] != DATASET_MAGIC {
        return Err(AlignError::CorruptDataset("bad magic".into()));
    }
    let version = u32::from_le_bytes(fixed[4..8].try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(AlignError::CorruptDataset(format!(
            "unsupported version {version}"
        )));
    }
    let body_len = u32::from_le_bytes(fixed[8..12].try_into().unwrap()) as usize;
    let mut rest = vec![0u8; body_len + 4];
    reader
        .read_exact(&mut rest)
        .map_err(|_| AlignError::CorruptDataset("header cut short".into()))?;
    let crc_stored = u32::from_le_bytes(rest[body_len..].try_into().unwrap());
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&fixed);
    hasher.update(&rest[..body_len]);
    if hasher.finalize() != crc_stored {
        return Err(AlignError::CorruptDataset("header crc mismatch".into()));
    }

    let mut r = Reader::new(&rest[..body_len], "dataset header");
    let mut scene_hash = [0u8; 32];
    scene_hash.copy_from_slice(r.take(32)?);
    let mut config_hash = [0u8; 32];
    config_hash.copy_from_slice(r.take(32)?);
    let beam_count = r.u32()? as usize;
    let lidar_max_range = r.f64()?;
    let start_position = Vec2::new(r.f64()?, r.f64()?);
    let cutoff_ns = r.u64()?;
    let train_count = r.u32()? as usize;
    let anchors = r.u32()? as usize;
    let drops = DropStats {
        no_bracket: r.u32()? as usize,
        stale: r.u32()? as usize,
    };
    let kind = r.take(1)?[0];
    let stats = match kind {
        0 => NormalizationStats::Pooled {
            mean: r.f64()?,
            std: r.f64()?,
        },
        1 => {
            let n = r.u32()? as usize;
            let mut mean = Vec::new();
            for _ in 0..n {
                mean.push(r.f64()?);
            }
            let mut std = Vec::new();
            for _ in 0..n {
                std.push(r.f64()?);
            }
            NormalizationStats::PerBeam { mean, std }
        }
        k => {
            return Err(AlignError::CorruptDataset(format!(
                "unknown stats kind {k}"
            )))
        }
    };
    r.finish()?;

    let mut frames = crate::bus::log::FrameReader::new(reader);
    let mut samples = Vec::new();
    loop {
        match frames.next_frame()? {
            crate::bus::log::NextFrame::Frame(rec) => {
                if rec.stream_id != DATASET_STREAM_ID {
                    return Err(AlignError::CorruptDataset(format!(
                        "unexpected stream id {} in dataset body",
                        rec.stream_id
                    )));
                }
                samples.push(sample_from(&rec, beam_count)?);
            }
            crate::bus::log::NextFrame::End => break,
            crate::bus::log::NextFrame::TornTail => {
                return Err(AlignError::CorruptDataset("truncated row section".into()))
            }
        }
    }
    if train_count > samples.len() {
        return Err(AlignError::CorruptDataset(
            "train count exceeds sample count".into(),
        ));
    }
    Ok(Dataset {
        scene_hash,
        config_hash,
        beam_count,
        lidar_max_range,
        start_position,
        cutoff_ns,
        train_count,
        stats,
        drops,
        anchors,
        samples,
    })
}

/// Writes the plain-text summary: one row per sample with timestamp, label,
/// relative position, and the normalized SNR vector.
pub fn write_csv_summary(path: &Path, ds: &Dataset) -> Result<(), AlignError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write!(out, "timestamp_ns,label,rel_x,rel_y")?;
    for j in 0..ds.beam_count {
        write!(out, ",snr_norm_{j}")?;
    }
    writeln!(out)?;
    for s in &ds.samples {
        write!(
            out,
            "{},{},{:.9},{:.9}",
            s.timestamp_ns, s.label, s.rel_position.x, s.rel_position.y
        )?;
        for v in &s.snr_norm {
            write!(out, ",{v:.9}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

//! Multi-rate sensor simulation: a vehicle follows a waypoint trajectory
//! while camera, LiDAR, IMU, position, and beam-sweep streams sample the
//! scene at their nominal rates, each stamped through its own imperfect
//! clock.
//!
//! The vehicle rests at the first waypoint for a configurable lead-in before
//! moving, so the initial velocity step is an interior event that inertial
//! integration can observe.

pub mod camera;
pub mod imu;
pub mod lidar;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::geometry::{ray_segment_intersection, Vec2, GEOM_EPS};
use crate::propagation::{sweep, BeamCodebook, BeamSweep, PropagationError};
use crate::scene::{Pose, Scene};

pub use camera::{downsample_frame, render_camera, CameraFrame};
pub use imu::{sample_imu, ImuSample, PositionSample};
pub use lidar::{lidar_to_points, render_lidar, LidarScan};

#[derive(Debug, Error)]
pub enum SensorError {
    /// Trajectory violates its contract.
    #[error("invalid trajectory: {0}")]
    BadTrajectory(String),
    /// Time outside a non-loop trajectory's traversal window.
    #[error("time {0} s is outside the trajectory domain")]
    TimeOutOfRange(f64),
    /// Rate or duration out of range.
    #[error("invalid rate: {0}")]
    BadRate(String),
    /// Camera field of view must be in (0, pi).
    #[error("field of view must be in (0, pi)")]
    BadFov,
    /// Clock parameters violate the sync bound or would reorder a stream.
    #[error("invalid clock: {0}")]
    BadClock(String),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    /// Failure reported by the record sink.
    #[error("record sink failed: {0}")]
    Sink(#[from] std::io::Error),
}

/// Piecewise-linear waypoint path traversed at constant speed.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<Vec2>,
    speed: f64,
    is_loop: bool,
    cumulative: Vec<f64>,
}

impl Trajectory {
    pub fn new(waypoints: Vec<Vec2>, speed: f64, is_loop: bool) -> Result<Self, SensorError> {
        if waypoints.len() < 2 {
            return Err(SensorError::BadTrajectory(
                "need at least 2 waypoints".into(),
            ));
        }
        if !(speed > 0.0) {
            return Err(SensorError::BadTrajectory("speed must be positive".into()));
        }
        let mut cumulative = Vec::with_capacity(waypoints.len() + 1);
        cumulative.push(0.0);
        for pair in waypoints.windows(2) {
            let d = pair[0].dist(pair[1]);
            if d <= GEOM_EPS {
                return Err(SensorError::BadTrajectory(
                    "consecutive waypoints must be distinct".into(),
                ));
            }
            cumulative.push(cumulative.last().unwrap() + d);
        }
        if is_loop {
            let d = waypoints.last().unwrap().dist(waypoints[0]);
            // A loop closes back to the first waypoint unless the caller
            // already closed it.
            if d > GEOM_EPS {
                cumulative.push(cumulative.last().unwrap() + d);
            }
        }
        Ok(Trajectory {
            waypoints,
            speed,
            is_loop,
            cumulative,
        })
    }

    pub fn waypoints(&self) -> &[Vec2] {
        &self.waypoints
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn is_loop(&self) -> bool {
        self.is_loop
    }

    pub fn path_length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Traversal time for one pass (non-loop) or one lap (loop).
    pub fn total_time(&self) -> f64 {
        self.path_length() / self.speed
    }

    fn segment_at_arc(&self, s: f64) -> (usize, f64) {
        let n_segs = self.cumulative.len() - 1;
        // Binary search keeps pose_at O(log n) for long paths.
        let mut lo = 0usize;
        let mut hi = n_segs - 1;
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.cumulative[mid] <= s {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        (lo, s - self.cumulative[lo])
    }

    fn segment_endpoints(&self, i: usize) -> (Vec2, Vec2) {
        let a = self.waypoints[i % self.waypoints.len()];
        let b = self.waypoints[(i + 1) % self.waypoints.len()];
        (a, b)
    }

    /// Pose at time t: constant-speed interpolation, heading along the
    /// current segment. Loops wrap; non-loop t beyond the end is an error.
    pub fn pose_at(&self, t: f64) -> Result<Pose, SensorError> {
        if t < 0.0 {
            return Err(SensorError::TimeOutOfRange(t));
        }
        let total = self.path_length();
        let mut s = t * self.speed;
        if self.is_loop {
            s = s.rem_euclid(total);
        } else if s > total * (1.0 + 1e-12) {
            return Err(SensorError::TimeOutOfRange(t));
        } else {
            s = s.min(total);
        }
        let (i, ds) = if s >= total {
            // Exactly at the end of a non-loop path: stay on the last segment.
            (self.cumulative.len() - 2, total - self.cumulative[self.cumulative.len() - 2])
        } else {
            self.segment_at_arc(s)
        };
        let (a, b) = self.segment_endpoints(i);
        let dir = b.sub(a);
        let len = dir.norm();
        let p = a.add(dir.scale(ds / len));
        Ok(Pose::new(p, dir.bearing()))
    }
}

/// Trajectory plus the rest lead-in; total over all t >= 0, parking the
/// vehicle at the end of non-loop paths.
#[derive(Debug, Clone)]
pub struct MotionProfile {
    pub trajectory: Trajectory,
    pub rest_duration_s: f64,
}

impl MotionProfile {
    pub fn new(trajectory: Trajectory, rest_duration_s: f64) -> Self {
        MotionProfile {
            trajectory,
            rest_duration_s: rest_duration_s.max(0.0),
        }
    }

    pub fn pose(&self, t: f64) -> Pose {
        let t_move = t - self.rest_duration_s;
        if t_move <= 0.0 {
            return self.trajectory.pose_at(0.0).expect("t=0 is always valid");
        }
        let end = self.trajectory.total_time();
        if !self.trajectory.is_loop() && t_move >= end {
            return self.trajectory.pose_at(end).expect("end time is valid");
        }
        self.trajectory.pose_at(t_move).expect("interior time")
    }

    /// Exact world-frame velocity; zero while resting or parked.
    pub fn velocity(&self, t: f64) -> Vec2 {
        let t_move = t - self.rest_duration_s;
        if t_move < 0.0 {
            return Vec2::ZERO;
        }
        if !self.trajectory.is_loop() && t_move >= self.trajectory.total_time() {
            return Vec2::ZERO;
        }
        let pose = self.trajectory.pose_at(t_move).expect("interior time");
        Vec2::from_angle(pose.heading).scale(self.trajectory.speed())
    }
}

/// Per-sensor clock imperfection. Offsets are bounded by the 1 ms sync
/// budget; jitter is Gaussian truncated at 6 sigma so the deviation bound
/// offset + 6*jitter_std is hard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockModel {
    pub offset_ns: i64,
    pub jitter_std_ns: f64,
}

pub const MAX_CLOCK_OFFSET_NS: i64 = 1_000_000;

impl Default for ClockModel {
    fn default() -> Self {
        ClockModel {
            offset_ns: 0,
            jitter_std_ns: 0.0,
        }
    }
}

impl ClockModel {
    pub fn validate(&self) -> Result<(), SensorError> {
        if self.offset_ns.abs() > MAX_CLOCK_OFFSET_NS {
            return Err(SensorError::BadClock(format!(
                "offset {} ns exceeds the 1 ms sync bound",
                self.offset_ns
            )));
        }
        if self.jitter_std_ns < 0.0 {
            return Err(SensorError::BadClock("negative jitter".into()));
        }
        Ok(())
    }

    /// Worst-case |emitted - true| in nanoseconds.
    pub fn max_error_ns(&self) -> f64 {
        self.offset_ns.abs() as f64 + 6.0 * self.jitter_std_ns
    }

    fn stamp(&self, true_ns: u64, rng: &mut ChaCha12Rng) -> u64 {
        let jitter = if self.jitter_std_ns > 0.0 {
            let normal = rand_distr::Normal::new(0.0, self.jitter_std_ns).expect("std >= 0");
            loop {
                let x: f64 = rng.sample(normal);
                if x.abs() <= 6.0 * self.jitter_std_ns {
                    break x;
                }
            }
        } else {
            0.0
        };
        let stamped = true_ns as i128 + self.offset_ns as i128 + jitter.round() as i128;
        stamped.max(0) as u64
    }
}

/// Stream identifiers, fixed across the transport and log format.
pub const STREAM_CAMERA: u8 = 0;
pub const STREAM_LIDAR: u8 = 1;
pub const STREAM_IMU: u8 = 2;
pub const STREAM_MMWAVE: u8 = 3;
pub const STREAM_POSITION: u8 = 4;
pub const STREAM_CAMERA_REAR: u8 = 5;

/// All stream ids a session can produce, in id order.
pub const ALL_STREAMS: [u8; 6] = [
    STREAM_CAMERA,
    STREAM_LIDAR,
    STREAM_IMU,
    STREAM_MMWAVE,
    STREAM_POSITION,
    STREAM_CAMERA_REAR,
];

pub fn stream_name(id: u8) -> &'static str {
    match id {
        STREAM_CAMERA => "camera",
        STREAM_LIDAR => "lidar",
        STREAM_IMU => "imu",
        STREAM_MMWAVE => "mmwave",
        STREAM_POSITION => "position",
        STREAM_CAMERA_REAR => "camera_rear",
        _ => "unknown",
    }
}

/// One emitted sensor event, typed. The transport layer turns these into
/// framed byte records.
#[derive(Debug, Clone, PartialEq)]
pub enum SensorRecord {
    Camera(CameraFrame),
    Lidar(LidarScan),
    Imu(ImuSample),
    Mmwave(BeamSweep),
    Position(PositionSample),
    CameraRear(CameraFrame),
}

impl SensorRecord {
    pub fn stream_id(&self) -> u8 {
        match self {
            SensorRecord::Camera(_) => STREAM_CAMERA,
            SensorRecord::Lidar(_) => STREAM_LIDAR,
            SensorRecord::Imu(_) => STREAM_IMU,
            SensorRecord::Mmwave(_) => STREAM_MMWAVE,
            SensorRecord::Position(_) => STREAM_POSITION,
            SensorRecord::CameraRear(_) => STREAM_CAMERA_REAR,
        }
    }

    pub fn timestamp_ns(&self) -> u64 {
        match self {
            SensorRecord::Camera(f) | SensorRecord::CameraRear(f) => f.timestamp_ns,
            SensorRecord::Lidar(s) => s.timestamp_ns,
            SensorRecord::Imu(s) => s.timestamp_ns,
            SensorRecord::Mmwave(s) => s.timestamp_ns,
            SensorRecord::Position(s) => s.timestamp_ns,
        }
    }
}

/// Nominal emission rates in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorRates {
    pub camera_hz: f64,
    pub lidar_hz: f64,
    pub imu_hz: f64,
    pub mmwave_hz: f64,
    pub position_hz: f64,
}

impl Default for SensorRates {
    fn default() -> Self {
        SensorRates {
            camera_hz: 30.0,
            lidar_hz: 15.0,
            imu_hz: 100.0,
            mmwave_hz: 10.0,
            position_hz: 100.0,
        }
    }
}

impl SensorRates {
    pub fn rate_of(&self, stream: u8) -> f64 {
        match stream {
            STREAM_CAMERA | STREAM_CAMERA_REAR => self.camera_hz,
            STREAM_LIDAR => self.lidar_hz,
            STREAM_IMU => self.imu_hz,
            STREAM_MMWAVE => self.mmwave_hz,
            STREAM_POSITION => self.position_hz,
            _ => 0.0,
        }
    }

    pub fn period_ns(&self, stream: u8) -> u64 {
        (1e9 / self.rate_of(stream)).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraParams {
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub max_range: f64,
    /// Emit a second, rear-facing camera stream.
    pub rear: bool,
}

impl Default for CameraParams {
    fn default() -> Self {
        CameraParams {
            width: 160,
            height: 90,
            fov_deg: 90.0,
            max_range: 20.0,
            rear: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarParams {
    pub rays: usize,
    pub max_range: f64,
}

impl Default for LidarParams {
    fn default() -> Self {
        LidarParams {
            rays: 1600,
            max_range: 20.0,
        }
    }
}

/// Per-stream clocks, indexed by stream id.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClockSet {
    pub clocks: [ClockModel; 6],
}

impl ClockSet {
    pub fn uniform(clock: ClockModel) -> Self {
        ClockSet { clocks: [clock; 6] }
    }

    pub fn get(&self, stream: u8) -> ClockModel {
        self.clocks[stream as usize]
    }
}

/// Everything a session run needs besides the scene.
#[derive(Debug, Clone)]
pub struct SessionParams {
    pub trajectory: Trajectory,
    pub rates: SensorRates,
    pub camera: CameraParams,
    pub lidar: LidarParams,
    /// Gaussian noise on body-frame acceleration, m/s^2 per axis.
    pub imu_accel_noise_std: f64,
    pub clocks: ClockSet,
    pub duration_s: f64,
    pub rest_duration_s: f64,
    pub seed: u64,
}

impl SessionParams {
    pub fn new(trajectory: Trajectory, duration_s: f64, seed: u64) -> Self {
        SessionParams {
            trajectory,
            rates: SensorRates::default(),
            camera: CameraParams::default(),
            lidar: LidarParams::default(),
            imu_accel_noise_std: 0.0,
            clocks: ClockSet::default(),
            duration_s,
            rest_duration_s: 0.1,
            seed,
        }
    }

    fn validate(&self) -> Result<(), SensorError> {
        if !(self.duration_s > 0.0) {
            return Err(SensorError::BadRate("duration must be positive".into()));
        }
        let rates = [
            self.rates.camera_hz,
            self.rates.lidar_hz,
            self.rates.imu_hz,
            self.rates.mmwave_hz,
            self.rates.position_hz,
        ];
        if rates.iter().any(|r| !(*r > 0.0)) {
            return Err(SensorError::BadRate("all rates must be positive".into()));
        }
        let fov = self.camera.fov_deg.to_radians();
        if !(fov > 0.0 && fov < std::f64::consts::PI) {
            return Err(SensorError::BadFov);
        }
        if self.camera.width == 0 || self.camera.height == 0 {
            return Err(SensorError::BadRate("camera resolution must be nonzero".into()));
        }
        if self.lidar.rays == 0 {
            return Err(SensorError::BadRate("lidar needs at least one ray".into()));
        }
        for stream in ALL_STREAMS {
            let clock = self.clocks.get(stream);
            clock.validate()?;
            let period = self.rates.period_ns(stream) as f64;
            // Truncated jitter of 6 sigma on consecutive ticks can reorder a
            // stream only when the period is under 12 sigma.
            if 12.0 * clock.jitter_std_ns >= period {
                return Err(SensorError::BadClock(format!(
                    "jitter too large for the {} period",
                    stream_name(stream)
                )));
            }
        }
        Ok(())
    }
}

/// Per-stream record counts of a finished session.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub counts: [u64; 6],
}

impl SessionStats {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Splitmix64 step, used to derive independent per-stream seeds.
pub(crate) fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Nearest hit distance of a ray against every wall and blocker edge, capped
/// at max_range. Optical sensors see all geometry regardless of RF losses.
pub(crate) fn cast_ray(scene: &Scene, origin: Vec2, angle: f64, max_range: f64) -> f64 {
    let dir = Vec2::from_angle(angle);
    let mut best = max_range;
    for wall in &scene.walls {
        if let Some(t) = ray_segment_intersection(origin, dir, wall.segment) {
            if t < best {
                best = t;
            }
        }
    }
    for blocker in &scene.blockers {
        for edge in blocker.polygon.edges() {
            if let Some(t) = ray_segment_intersection(origin, dir, edge) {
                if t < best {
                    best = t;
                }
            }
        }
    }
    best
}

struct StreamTicks {
    stream: u8,
    /// (true tick ns, emitted ns), emitted non-decreasing.
    ticks: Vec<(u64, u64)>,
    next: usize,
}

fn build_ticks(
    stream: u8,
    params: &SessionParams,
    duration_ns: u64,
) -> StreamTicks {
    let period = params.rates.period_ns(stream);
    let clock = params.clocks.get(stream);
    let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(params.seed, 0x100 + stream as u64));
    let mut ticks = Vec::new();
    let mut prev: u64 = 0;
    let mut k: u64 = 0;
    loop {
        let t = k * period;
        if t >= duration_ns {
            break;
        }
        let mut emitted = clock.stamp(t, &mut rng);
        // Per-stream order is part of the contract; the jitter validation
        // above makes this clamp a no-op in practice.
        if k > 0 && emitted < prev {
            emitted = prev;
        }
        prev = emitted;
        ticks.push((t, emitted));
        k += 1;
    }
    StreamTicks {
        stream,
        ticks,
        next: 0,
    }
}

/// Runs a full session, delivering records to `sink` ordered by emitted
/// timestamp (ties broken by stream id). Deterministic for a fixed seed.
pub fn run_session<F>(
    scene: &Scene,
    codebook: &BeamCodebook,
    params: &SessionParams,
    mut sink: F,
) -> Result<SessionStats, SensorError>
where
    F: FnMut(SensorRecord) -> std::io::Result<()>,
{
    params.validate()?;
    let profile = MotionProfile::new(params.trajectory.clone(), params.rest_duration_s);
    let duration_ns = (params.duration_s * 1e9).round() as u64;

    let mut active: Vec<u8> = vec![
        STREAM_CAMERA,
        STREAM_LIDAR,
        STREAM_IMU,
        STREAM_MMWAVE,
        STREAM_POSITION,
    ];
    if params.camera.rear {
        active.push(STREAM_CAMERA_REAR);
    }
    let mut streams: Vec<StreamTicks> = active
        .iter()
        .map(|&s| build_ticks(s, params, duration_ns))
        .collect();

    let mut imu_rng = ChaCha12Rng::seed_from_u64(derive_seed(params.seed, 0x200));
    let imu_period_s = params.rates.period_ns(STREAM_IMU) as f64 / 1e9;
    let fov = params.camera.fov_deg.to_radians();

    let mut stats = SessionStats::default();
    loop {
        // Merge by (emitted, stream id); streams are few, a scan is cheap.
        let mut pick: Option<usize> = None;
        for (i, st) in streams.iter().enumerate() {
            if st.next >= st.ticks.len() {
                continue;
            }
            let key = st.ticks[st.next];
            let better = match pick {
                None => true,
                Some(j) => {
                    let cur = streams[j].ticks[streams[j].next];
                    (key.1, st.stream) < (cur.1, streams[j].stream)
                }
            };
            if better {
                pick = Some(i);
            }
        }
        let Some(i) = pick else { break };
        let (true_ns, emitted_ns) = streams[i].ticks[streams[i].next];
        streams[i].next += 1;
        let stream = streams[i].stream;
        let t = true_ns as f64 / 1e9;
        let pose = profile.pose(t);
        let record = match stream {
            STREAM_CAMERA => SensorRecord::Camera(render_camera(
                scene,
                pose,
                params.camera.width,
                params.camera.height,
                fov,
                params.camera.max_range,
                emitted_ns,
            )?),
            STREAM_CAMERA_REAR => {
                let rear = Pose::new(pose.position, pose.heading + std::f64::consts::PI);
                SensorRecord::CameraRear(render_camera(
                    scene,
                    rear,
                    params.camera.width,
                    params.camera.height,
                    fov,
                    params.camera.max_range,
                    emitted_ns,
                )?)
            }
            STREAM_LIDAR => SensorRecord::Lidar(render_lidar(
                scene,
                pose,
                params.lidar.rays,
                params.lidar.max_range,
                emitted_ns,
            )),
            STREAM_IMU => SensorRecord::Imu(sample_imu(
                &profile,
                t,
                imu_period_s,
                params.imu_accel_noise_std,
                emitted_ns,
                &mut imu_rng,
            )),
            STREAM_MMWAVE => SensorRecord::Mmwave(sweep(
                scene,
                pose,
                codebook,
                &scene.radio,
                emitted_ns,
            )?),
            STREAM_POSITION => SensorRecord::Position(PositionSample {
                timestamp_ns: emitted_ns,
                position: pose.position,
            }),
            _ => unreachable!("inactive stream id"),
        };
        stats.counts[stream as usize] += 1;
        sink(record)?;
    }
    Ok(stats)
}

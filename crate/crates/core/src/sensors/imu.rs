//! Inertial and ground-truth position sampling. Acceleration comes from a
//! second central difference of the exact trajectory position, expressed in
//! the body frame, so no dynamics model beyond the path itself is invented.
//! The difference spans several sampling periods, imitating the limited
//! bandwidth of a real accelerometer: velocity steps at waypoint corners
//! become continuous triangular ramps instead of single-tick impulses, which
//! keeps downstream integration stable against timestamp jitter.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::geometry::Vec2;

use super::MotionProfile;

/// One IMU reading: body-frame acceleration, a unit heading encoding as the
/// magnetic vector, and yaw-only orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuSample {
    pub timestamp_ns: u64,
    /// m/s^2, body frame; z unused and zero.
    pub acceleration: [f64; 3],
    /// Unit vector of the world heading, z zero.
    pub magnetic: [f64; 3],
    /// (roll, pitch, yaw); only yaw is nonzero, in [0, 2pi).
    pub orientation: [f64; 3],
}

/// Ground-truth world position.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionSample {
    pub timestamp_ns: u64,
    pub position: Vec2,
}

/// Width of the central difference in sampling periods; the accelerometer's
/// effective bandwidth. Must be even so the half-window is a whole number of
/// ticks, which makes trapezoidal re-integration errors cancel at corners.
pub const ACCEL_WINDOW_TICKS: usize = 20;

/// Samples the IMU at true time `t` with sampling period `dt`. World
/// acceleration is the second central difference of position,
/// (p(t+h) - 2 p(t) + p(t-h)) / h^2 with h = ACCEL_WINDOW_TICKS * dt / 2,
/// rotated into the body frame by the current yaw; optional Gaussian noise
/// lands on the body x/y axes only. The position before the session start
/// is the start pose itself, matching a vehicle at rest.
pub fn sample_imu(
    profile: &MotionProfile,
    t: f64,
    dt: f64,
    accel_noise_std: f64,
    timestamp_ns: u64,
    rng: &mut ChaCha12Rng,
) -> ImuSample {
    let h = ACCEL_WINDOW_TICKS as f64 * dt / 2.0;
    let p_now = profile.pose(t).position;
    let p_later = profile.pose(t + h).position;
    let p_earlier = if t - h < 0.0 {
        profile.pose(0.0).position
    } else {
        profile.pose(t - h).position
    };
    let accel_world = p_later
        .add(p_earlier)
        .sub(p_now.scale(2.0))
        .scale(1.0 / (h * h));
    let yaw = profile.pose(t).heading;
    let accel_body = accel_world.rotate(-yaw);
    let (nx, ny) = if accel_noise_std > 0.0 {
        let normal = rand_distr::Normal::new(0.0, accel_noise_std).expect("std >= 0");
        (rng.sample(normal), rng.sample(normal))
    } else {
        (0.0, 0.0)
    };
    ImuSample {
        timestamp_ns,
        acceleration: [accel_body.x + nx, accel_body.y + ny, 0.0],
        magnetic: [yaw.cos(), yaw.sin(), 0.0],
        orientation: [0.0, 0.0, yaw],
    }
}

//! Planar LiDAR: a ring of range measurements at uniform azimuths starting
//! from the vehicle heading.

use crate::scene::{Pose, Scene};

use super::cast_ray;

/// One revolution of ranges. Ray k points at heading + 2*pi*k/n; misses
/// report max_range.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub timestamp_ns: u64,
    pub ranges: Vec<f64>,
    pub max_range: f64,
}

/// Casts `n_rays` rays against every wall and blocker edge.
pub fn render_lidar(
    scene: &Scene,
    pose: Pose,
    n_rays: usize,
    max_range: f64,
    timestamp_ns: u64,
) -> LidarScan {
    let step = std::f64::consts::TAU / n_rays as f64;
    let ranges = (0..n_rays)
        .map(|k| cast_ray(scene, pose.position, pose.heading + step * k as f64, max_range))
        .collect();
    LidarScan {
        timestamp_ns,
        ranges,
        max_range,
    }
}

/// Body-frame (x, y, z) points for the ring, z = 0. Ray k's azimuth in the
/// body frame is 2*pi*k/n.
pub fn lidar_to_points(scan: &LidarScan) -> Vec<[f64; 3]> {
    let n = scan.ranges.len();
    let step = std::f64::consts::TAU / n as f64;
    scan.ranges
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let az = step * k as f64;
            [r * az.cos(), r * az.sin(), 0.0]
        })
        .collect()
}

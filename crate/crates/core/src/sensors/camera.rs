//! Depth camera: one ray per column across the field of view, every row of a
//! column sharing the column's hit range (billboard rendering). Depth keeps
//! the geometry-to-beam correlation without inventing appearance.

use crate::scene::{Pose, Scene};

use super::{cast_ray, SensorError};

/// Row-major depth frame, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub timestamp_ns: u64,
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
    pub max_range: f64,
}

impl CameraFrame {
    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }
}

/// Renders a frame. Column 0 is the left edge of the view: azimuth
/// heading + fov/2, decreasing linearly to heading - fov/2 at the last
/// column. A single-column camera looks straight ahead.
pub fn render_camera(
    scene: &Scene,
    pose: Pose,
    width: usize,
    height: usize,
    fov: f64,
    max_range: f64,
    timestamp_ns: u64,
) -> Result<CameraFrame, SensorError> {
    if !(fov > 0.0 && fov < std::f64::consts::PI) {
        return Err(SensorError::BadFov);
    }
    let mut columns = Vec::with_capacity(width);
    for c in 0..width {
        let az = if width == 1 {
            pose.heading
        } else {
            pose.heading + fov / 2.0 - fov * c as f64 / (width - 1) as f64
        };
        columns.push(cast_ray(scene, pose.position, az, max_range));
    }
    let mut pixels = Vec::with_capacity(width * height);
    for _ in 0..height {
        pixels.extend_from_slice(&columns);
    }
    Ok(CameraFrame {
        timestamp_ns,
        width,
        height,
        pixels,
        max_range,
    })
}

/// Average-pools a frame by an integer factor in both axes, truncating edge
/// remainders. Factor 1 copies.
pub fn downsample_frame(frame: &CameraFrame, factor: usize) -> CameraFrame {
    let factor = factor.max(1);
    let out_w = (frame.width / factor).max(1);
    let out_h = (frame.height / factor).max(1);
    let mut pixels = Vec::with_capacity(out_w * out_h);
    for r in 0..out_h {
        for c in 0..out_w {
            let mut acc = 0.0;
            for dr in 0..factor {
                for dc in 0..factor {
                    let rr = (r * factor + dr).min(frame.height - 1);
                    let cc = (c * factor + dc).min(frame.width - 1);
                    acc += frame.pixels[rr * frame.width + cc];
                }
            }
            pixels.push(acc / (factor * factor) as f64);
        }
    }
    CameraFrame {
        timestamp_ns: frame.timestamp_ns,
        width: out_w,
        height: out_h,
        pixels,
        max_range: frame.max_range,
    }
}

//! Beam prediction testbed: a deterministic software twin of an mmWave
//! vehicular measurement rig. A simulated vehicle drives through a 2-D
//! reflective scene while multi-rate sensors (depth camera, LiDAR ring, IMU,
//! ground-truth position) and an exhaustive 36-beam sweep sample the world.
//! Records travel over a framed pub/sub transport into session logs, are
//! aligned on the sweep timestamps, and feed a from-scratch multimodal
//! network that learns to predict the best beam index without the sweep.

pub mod align;
pub mod bus;
pub mod experiment;
pub mod fusion;
pub mod metrics;
pub mod geometry;
pub mod nn;
pub mod propagation;
pub mod scene;
pub mod sensors;

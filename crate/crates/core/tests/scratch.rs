//! Temporary diagnostic for baseline conventions on session data.

use std::fs;

use beamfuse::experiment::{baseline_reports, load_experiment, preprocess_log, record_session};
use beamfuse::geometry::wrap_to_2pi;

const SCENE: &str = r#"
[bounds]
min = [0.0, 0.0]
max = [8.0, 6.0]

[bs]
position = [7.4, 5.4]
facing_deg = 225.0
"#;

const CONFIG: &str = r#"
name = "scratch"
seeds = [7]

[scene]
file = "scene.toml"

[simulate]
duration_s = 600.0
speed_mps = 0.6
rest_s = 0.5
loop_trajectory = true
waypoints = [[1.0, 1.0], [7.0, 1.0], [7.0, 4.6], [1.0, 4.6]]
camera_width = 16
camera_height = 12
camera_fov_deg = 90.0
camera_max_range = 15.0
lidar_rays = 384
lidar_max_range = 15.0
imu_accel_noise_std = 0.0001
clock_offset_ns = 100000
clock_jitter_std_ns = 20000.0

[preprocess]
camera_downsample = 1
train_fraction = 0.8
imu_window = 6
max_clock_error_ns = 2000000

[model]
window = 3

[train]
epochs = 1

[eval]
max_k = 5
knn_k = 5

[[ablations]]
name = "L"
lidar = true
"#;

#[test]
fn geometric_convention_on_free_space_session() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("scene.toml"), SCENE).unwrap();
    let cfg_path = dir.path().join("experiment.toml");
    fs::write(&cfg_path, CONFIG).unwrap();

    let loaded = load_experiment(&cfg_path).unwrap();
    let log_path = dir.path().join("session.log");
    record_session(
        &loaded.scene,
        &loaded.codebook,
        &loaded.config.simulate,
        7,
        [0u8; 32],
        [0u8; 32],
        &log_path,
    )
    .unwrap();
    let ds_path = dir.path().join("dataset.ds");
    let dataset = preprocess_log(&log_path, &loaded.config.preprocess.options(), &ds_path).unwrap();

    let rows = baseline_reports(
        &dataset,
        loaded.scene.bs_pose.position,
        &loaded.codebook,
        3,
        5,
        5,
    )
    .unwrap();
    for (kind, report) in &rows {
        println!("{kind}: top1={:.3} top5={:.3}", report.accuracy[0], report.accuracy[4]);
    }

    let bs = loaded.scene.bs_pose.position;
    let test = &dataset.samples[dataset.train_count..];
    println!("start_position = {:?}", dataset.start_position);
    for s in test.iter().step_by(7).take(20) {
        let est = dataset.start_position.add(s.rel_position);
        let bearing = bs.sub(est).bearing();
        let beam = loaded.codebook.nearest_beam(wrap_to_2pi(bearing - s.yaw));
        let n = dataset.beam_count as isize;
        let offset = (s.label as isize - beam as isize).rem_euclid(n);
        println!(
            "t={} label={:2} geo={:2} offset={:2} yaw={:+.3} rel=({:+.3},{:+.3})",
            s.timestamp_ns, s.label, beam, offset, s.yaw, s.rel_position.x, s.rel_position.y
        );
    }
}

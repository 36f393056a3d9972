//! Drives the compiled binary end to end: stage subcommands, the full
//! experiment runner, log utilities, and the exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use beamfuse::bus::log::{FrameReader, NextFrame};
use beamfuse::bus::socket::connect_with_retry;

const SCENE: &str = r#"
[bounds]
min = [0.0, 0.0]
max = [6.0, 4.0]

[bs]
position = [5.5, 3.5]
facing_deg = 210.0
"#;

const CONFIG: &str = r#"
name = "cli-check"
seeds = [3]

[scene]
file = "scene.toml"

[simulate]
duration_s = 12.0
speed_mps = 0.8
rest_s = 0.2
loop_trajectory = true
waypoints = [[0.8, 0.8], [5.2, 0.8], [5.2, 3.2], [0.8, 3.2]]
camera_width = 16
camera_height = 12
camera_fov_deg = 90.0
camera_max_range = 10.0
lidar_rays = 384
lidar_max_range = 10.0

[preprocess]
train_fraction = 0.8
imu_window = 6

[model]
window = 3
lidar_downsample = 8
rnn_hidden = 8
feature_width = 16
fused_width = 16
lstm_hidden = 16

[train]
learning_rate = 0.02
batch_size = 8
epochs = 1
train_stride = 2

[[ablations]]
name = "L"
lidar = true

[[ablations]]
name = "L+C+I"
camera = true
lidar = true
imu_position = true
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_beamfuse"))
}

fn setup(dir: &Path) -> PathBuf {
    fs::write(dir.join("scene.toml"), SCENE).unwrap();
    let config = dir.join("experiment.toml");
    fs::write(&config, CONFIG).unwrap();
    config
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn stage_subcommands_compose_into_a_scored_model() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let log = dir.path().join("session.log");
    let dataset = dir.path().join("session.ds");
    let ckpt = dir.path().join("model.ckpt");

    let out = bin()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--seed", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("mmwave"));

    let out = bin()
        .args(["record", "--config"])
        .arg(&config)
        .args(["--seed", "3", "--out"])
        .arg(&log)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert!(log.exists());

    let out = bin().args(["inspect", "--log"]).arg(&log).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("version 1"));
    assert!(text.contains("camera"));

    let out = bin()
        .args(["preprocess", "--config"])
        .arg(&config)
        .args(["--log"])
        .arg(&log)
        .args(["--out"])
        .arg(&dataset)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("anchors 120"));

    let out = bin()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--dataset"])
        .arg(&dataset)
        .args(["--ablation", "L", "--seed", "3", "--out"])
        .arg(&ckpt)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).contains("epoch   1"));

    let out = bin()
        .args(["eval", "--config"])
        .arg(&config)
        .args(["--dataset"])
        .arg(&dataset)
        .args(["--checkpoint"])
        .arg(&ckpt)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("ablation L"));
    assert!(text.contains("top1="));
}

#[test]
fn the_full_runner_writes_reports_and_reruns_reuse_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let out_dir = dir.path().join("out");

    let out = bin()
        .args(["all", "--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("report.csv"));
    assert!(text.contains("majority"));
    for file in ["report.csv", "ablation_topk.csv", "baselines.csv", "plot_topk.gp"] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }
    let report = fs::read(out_dir.join("report.csv")).unwrap();

    // `report` reuses every cached artifact and rewrites identical tables.
    let out = bin()
        .args(["report", "--config"])
        .arg(&config)
        .args(["--out-dir"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert_eq!(fs::read(out_dir.join("report.csv")).unwrap(), report);
}

#[test]
fn exit_codes_identify_what_failed() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());

    let out = bin()
        .args(["all", "--config", "/nonexistent.toml", "--out-dir"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    let broken = CONFIG.replace("learning_rate = 0.02", "learning_rate = -1.0");
    let bad_config = dir.path().join("bad.toml");
    fs::write(&bad_config, broken).unwrap();
    let out = bin()
        .args(["all", "--config"])
        .arg(&bad_config)
        .args(["--out-dir"])
        .arg(dir.path().join("out2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(13), "{out:?}");

    let garbage = dir.path().join("garbage.log");
    fs::write(&garbage, b"not a log").unwrap();
    let out = bin()
        .args(["preprocess", "--config"])
        .arg(&config)
        .args(["--log"])
        .arg(&garbage)
        .args(["--out"])
        .arg(dir.path().join("x.ds"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(12), "{out:?}");

    let out = bin().arg("no-such-subcommand").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn replay_serves_the_recorded_frames_over_a_socket() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup(dir.path());
    let log = dir.path().join("session.log");
    let socket = dir.path().join("replay.sock");

    let out = bin()
        .args(["record", "--config"])
        .arg(&config)
        .args(["--seed", "3", "--out"])
        .arg(&log)
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");

    let mut child = bin()
        .args(["replay", "--log"])
        .arg(&log)
        .args(["--socket"])
        .arg(&socket)
        .args(["--speed", "0"])
        .spawn()
        .unwrap();

    let stream = connect_with_retry(&socket, Duration::from_secs(10)).unwrap();
    let mut reader = FrameReader::new(stream);
    let mut frames = 0usize;
    loop {
        match reader.next_frame().unwrap() {
            NextFrame::Frame(_) => frames += 1,
            NextFrame::End => break,
            NextFrame::TornTail => panic!("replay ended mid-frame"),
        }
    }
    // 12 s of defaults: 361 camera + 180 lidar + 1200 inertial + 120 sweeps
    // + 1200 positions.
    assert_eq!(frames, 3061);
    let status = child.wait().unwrap();
    assert!(status.success());
}

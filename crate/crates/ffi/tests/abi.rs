//! Exercises the C entry points exactly as a foreign caller would: raw
//! pointers, NUL-terminated paths, explicit frees, and status-code checks.

use std::ffi::CString;
use std::fs;
use std::path::Path;

use beamfuse::experiment::{
    load_experiment, preprocess_log, record_session, train_model,
};
use beamfuse_ffi::{
    bf_dataset_free, bf_dataset_label, bf_dataset_len, bf_dataset_load, bf_dataset_train_count,
    bf_last_error, bf_model_classes, bf_model_free, bf_model_load, bf_model_predict,
    bf_model_window, bf_scene_beam_count, bf_scene_best_beam, bf_scene_free, bf_scene_load,
    BfDataset, BfModel, BfScene, BfStatus,
};

const SCENE: &str = r#"
[bounds]
min = [0.0, 0.0]
max = [6.0, 4.0]

[bs]
position = [5.5, 3.5]
facing_deg = 210.0
"#;

const CONFIG: &str = r#"
name = "abi-check"
seeds = [5]

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
name = "L+C+I"
camera = true
lidar = true
imu_position = true
"#;

fn c_path(path: &Path) -> CString {
    CString::new(path.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    let len = bf_last_error(buf.as_mut_ptr(), buf.len());
    let bytes: Vec<u8> = buf[..len.min(255)].iter().map(|&b| b as u8).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

/// Builds scene, dataset, and checkpoint fixtures through the public Rust
/// pipeline, then drives them through the C surface.
#[test]
fn the_c_surface_loads_scores_and_frees_every_handle() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("scene.toml"), SCENE).unwrap();
    fs::write(dir.path().join("experiment.toml"), CONFIG).unwrap();
    let loaded = load_experiment(&dir.path().join("experiment.toml")).unwrap();
    let log = dir.path().join("session.log");
    record_session(
        &loaded.scene,
        &loaded.codebook,
        &loaded.config.simulate,
        5,
        [0; 32],
        [0; 32],
        &log,
    )
    .unwrap();
    let ds_path = dir.path().join("session.ds");
    let dataset = preprocess_log(&log, &loaded.config.preprocess.options(), &ds_path).unwrap();
    let ckpt_path = dir.path().join("model.ckpt");
    train_model(
        &dataset,
        &loaded.config.model,
        &loaded.config.ablations[0],
        &loaded.config.train,
        5,
        "abi-check",
        &ckpt_path,
    )
    .unwrap();

    unsafe {
        let mut scene: *mut BfScene = std::ptr::null_mut();
        let path = c_path(&dir.path().join("scene.toml"));
        assert_eq!(bf_scene_load(path.as_ptr(), &mut scene), BfStatus::BfOk);
        assert_eq!(bf_scene_beam_count(scene), 36);

        let mut beam = u32::MAX;
        let mut snr = f64::NAN;
        assert_eq!(
            bf_scene_best_beam(scene, 1.0, 1.0, &mut beam, &mut snr),
            BfStatus::BfOk
        );
        assert!(beam < 36);
        assert!(snr.is_finite());
        // Out-of-bounds positions are rejected with a message.
        assert_eq!(
            bf_scene_best_beam(scene, 99.0, 99.0, &mut beam, &mut snr),
            BfStatus::BfBadInput
        );
        assert!(!last_error().is_empty());

        let mut ds: *mut BfDataset = std::ptr::null_mut();
        let path = c_path(&ds_path);
        assert_eq!(bf_dataset_load(path.as_ptr(), &mut ds), BfStatus::BfOk);
        assert_eq!(bf_dataset_len(ds), dataset.samples.len());
        assert_eq!(bf_dataset_train_count(ds), dataset.train_count);
        assert_eq!(bf_dataset_label(ds, 0), dataset.samples[0].label);
        // Out-of-range index reports the class count, never a valid label.
        assert_eq!(bf_dataset_label(ds, usize::MAX), 36);

        let mut model: *mut BfModel = std::ptr::null_mut();
        let path = c_path(&ckpt_path);
        assert_eq!(bf_model_load(path.as_ptr(), &mut model), BfStatus::BfOk);
        assert_eq!(bf_model_classes(model), 36);
        assert_eq!(bf_model_window(model), 3);

        let mut probs = vec![0.0f64; 36];
        let anchor = dataset.train_count + 2;
        assert_eq!(
            bf_model_predict(model, ds, anchor, probs.as_mut_ptr(), probs.len()),
            BfStatus::BfOk
        );
        let total: f64 = probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(probs.iter().all(|p| *p >= 0.0));

        // A window that would start before the first sample is rejected.
        assert_eq!(
            bf_model_predict(model, ds, 0, probs.as_mut_ptr(), probs.len()),
            BfStatus::BfBadInput
        );
        // Undersized output buffers are rejected before any write.
        assert_eq!(
            bf_model_predict(model, ds, anchor, probs.as_mut_ptr(), 4),
            BfStatus::BfBadInput
        );

        bf_model_free(model);
        bf_dataset_free(ds);
        bf_scene_free(scene);
    }
}

#[test]
fn null_and_bad_arguments_never_crash() {
    unsafe {
        let mut scene: *mut BfScene = std::ptr::null_mut();
        assert_eq!(
            bf_scene_load(std::ptr::null(), &mut scene),
            BfStatus::BfNullArgument
        );
        let path = CString::new("/nonexistent/scene.toml").unwrap();
        assert_eq!(
            bf_scene_load(path.as_ptr(), std::ptr::null_mut()),
            BfStatus::BfNullArgument
        );
        assert_eq!(
            bf_scene_load(path.as_ptr(), &mut scene),
            BfStatus::BfBadInput
        );
        assert!(last_error().contains("scene.toml"));

        assert_eq!(bf_scene_beam_count(std::ptr::null()), 0);
        assert_eq!(bf_dataset_len(std::ptr::null()), 0);
        assert_eq!(bf_model_classes(std::ptr::null()), 0);
        assert_eq!(
            bf_model_predict(
                std::ptr::null_mut(),
                std::ptr::null(),
                0,
                std::ptr::null_mut(),
                0
            ),
            BfStatus::BfNullArgument
        );

        bf_scene_free(std::ptr::null_mut());
        bf_dataset_free(std::ptr::null_mut());
        bf_model_free(std::ptr::null_mut());

        // Messages are clipped to the buffer, NUL-terminated, and report
        // their full length.
        let mut tiny = [0 as std::ffi::c_char; 4];
        let full = bf_last_error(tiny.as_mut_ptr(), tiny.len());
        assert!(full >= 3);
        assert_eq!(tiny[3], 0);
    }
}

//! Experiment orchestration: one TOML file describes a scene, a simulated
//! session, preprocessing, model widths, a training schedule, and a list of
//! modality ablations evaluated over shared seeds. `run_experiment` drives
//! simulate -> record -> preprocess -> train -> evaluate -> report for every
//! (ablation, seed) pair and writes all artifacts into one output directory.
//!
//! Artifacts carry a sidecar `.stamp` file holding a digest of everything
//! that produced them; a rerun with unchanged inputs reuses the file, and
//! changing one stage's parameters recomputes only from that stage down.
//! Seeds fix the simulation, shuffling, and initialization, so a rerun from
//! scratch is byte-identical.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::{build_dataset, load_dataset, save_dataset, Dataset, DatasetOptions};
use crate::bus::log::{read_log, LogHeader, LogWriter};
use crate::bus::payload::to_frame;
use crate::fusion::{build_windows, predict_all, train_on_dataset, FusionConfig, FusionModel};
use crate::geometry::Vec2;
use crate::metrics::{
    geometric_predictions, knn_predictions, majority_predictions, oracle_predictions,
    topk_report, TopKReport,
};
use crate::nn::{
    collect_params, load_checkpoint, restore_params, save_checkpoint, Optimizer, TrainConfig,
    TrainReport,
};
use crate::propagation::BeamCodebook;
use crate::scene::Scene;
use crate::sensors::{
    run_session, CameraParams, ClockModel, ClockSet, LidarParams, SensorError, SensorRates,
    SessionParams, SessionStats, Trajectory,
};

/// Per-run accuracy table.
pub const REPORT_FILE: &str = "report.csv";
/// Per-ablation seed-averaged accuracy, one row per ablation.
pub const ABLATION_FILE: &str = "ablation_topk.csv";
/// Reference predictor accuracy, one row per (baseline, seed).
pub const BASELINE_FILE: &str = "baselines.csv";
/// Gnuplot script rendering `ABLATION_FILE` as grouped bars.
pub const PLOT_FILE: &str = "plot_topk.gp";

/// Decorrelates the shuffle stream from the weight-init stream, which both
/// derive from the same experiment seed.
const SHUFFLE_SALT: u64 = 0x5EED_51DE_0F0F_A5A5;

/// Pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Record,
    Preprocess,
    Train,
    Eval,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Record => "record",
            Stage::Preprocess => "preprocess",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }

    /// Process exit code identifying the failed stage.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Simulate => 10,
            Stage::Record => 11,
            Stage::Preprocess => 12,
            Stage::Train => 13,
            Stage::Eval => 14,
            Stage::Report => 15,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    /// Configuration file missing, malformed, or inconsistent.
    #[error("config: {0}")]
    Config(String),
    /// Filesystem failure outside any pipeline stage.
    #[error("{context}: {message}")]
    Io { context: String, message: String },
    /// A pipeline stage failed.
    #[error("{stage} stage: {message}")]
    Stage { stage: Stage, message: String },
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 3,
            ExperimentError::Io { .. } => 4,
            ExperimentError::Stage { stage, .. } => stage.exit_code(),
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            ExperimentError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

fn stage_err<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> ExperimentError {
    move |e| ExperimentError::Stage {
        stage,
        message: e.to_string(),
    }
}

/// Scene file reference, relative to the experiment file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneRef {
    pub file: String,
}

/// Session synthesis parameters. Stream rates stay at their defaults; the
/// trajectory, sensor geometry, noise, and clock skew are per experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub duration_s: f64,
    pub speed_mps: f64,
    /// Pause before motion starts; exercises the stationary branch.
    pub rest_s: f64,
    pub loop_trajectory: bool,
    pub waypoints: Vec<[f64; 2]>,
    pub camera_width: usize,
    pub camera_height: usize,
    pub camera_fov_deg: f64,
    pub camera_max_range: f64,
    pub camera_rear: bool,
    pub lidar_rays: usize,
    pub lidar_max_range: f64,
    pub imu_accel_noise_std: f64,
    pub clock_offset_ns: i64,
    pub clock_jitter_std_ns: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            duration_s: 60.0,
            speed_mps: 0.6,
            rest_s: 0.2,
            loop_trajectory: true,
            waypoints: Vec::new(),
            camera_width: 32,
            camera_height: 18,
            camera_fov_deg: 90.0,
            camera_max_range: 15.0,
            camera_rear: false,
            lidar_rays: 1600,
            lidar_max_range: 15.0,
            imu_accel_noise_std: 0.0,
            clock_offset_ns: 0,
            clock_jitter_std_ns: 0.0,
        }
    }
}

impl SimulateConfig {
    pub fn session_params(&self, seed: u64) -> Result<SessionParams, SensorError> {
        let waypoints: Vec<Vec2> = self.waypoints.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        let trajectory = Trajectory::new(waypoints, self.speed_mps, self.loop_trajectory)?;
        Ok(SessionParams {
            trajectory,
            rates: SensorRates::default(),
            camera: CameraParams {
                width: self.camera_width,
                height: self.camera_height,
                fov_deg: self.camera_fov_deg,
                max_range: self.camera_max_range,
                rear: self.camera_rear,
            },
            lidar: LidarParams {
                rays: self.lidar_rays,
                max_range: self.lidar_max_range,
            },
            imu_accel_noise_std: self.imu_accel_noise_std,
            clocks: ClockSet::uniform(ClockModel {
                offset_ns: self.clock_offset_ns,
                jitter_std_ns: self.clock_jitter_std_ns,
            }),
            duration_s: self.duration_s,
            rest_duration_s: self.rest_s,
            seed,
        })
    }
}

/// Alignment options; mirrors the dataset builder's knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub camera_downsample: usize,
    pub train_fraction: f64,
    pub per_beam_norm: bool,
    pub imu_window: usize,
    pub max_clock_error_ns: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        let d = DatasetOptions::default();
        PreprocessConfig {
            camera_downsample: d.camera_downsample,
            train_fraction: d.train_fraction,
            per_beam_norm: d.per_beam_norm,
            imu_window: d.imu_window,
            max_clock_error_ns: d.max_clock_error_ns,
        }
    }
}

impl PreprocessConfig {
    pub fn options(&self) -> DatasetOptions {
        DatasetOptions {
            camera_downsample: self.camera_downsample,
            train_fraction: self.train_fraction,
            per_beam_norm: self.per_beam_norm,
            rates: SensorRates::default(),
            max_clock_error_ns: self.max_clock_error_ns,
            imu_window: self.imu_window,
        }
    }
}

/// Training schedule. The modality flags and seed of the model config are
/// overridden per (ablation, seed) pair, so they are not repeated here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// "sgd" or "momentum".
    pub optimizer: String,
    pub momentum_beta: f64,
    /// Step between starts of consecutive training windows.
    pub train_stride: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 10,
            optimizer: "momentum".into(),
            momentum_beta: 0.9,
            train_stride: 1,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> Result<TrainConfig, ExperimentError> {
        let optimizer = match self.optimizer.as_str() {
            "sgd" => Optimizer::Sgd,
            "momentum" => Optimizer::Momentum {
                beta: self.momentum_beta,
            },
            other => {
                return Err(ExperimentError::Config(format!(
                    "unknown optimizer {other:?}, expected \"sgd\" or \"momentum\""
                )))
            }
        };
        Ok(TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: seed ^ SHUFFLE_SALT,
            optimizer,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Accuracy is reported for every K up to this.
    pub max_k: usize,
    /// Neighbours used by the position-fingerprint baseline.
    pub knn_k: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { max_k: 5, knn_k: 5 }
    }
}

/// One modality subset to train and evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub name: String,
    #[serde(default)]
    pub camera: bool,
    #[serde(default)]
    pub lidar: bool,
    #[serde(default)]
    pub imu_position: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub scene: SceneRef,
    pub simulate: SimulateConfig,
    pub preprocess: PreprocessConfig,
    pub model: FusionConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub ablations: Vec<AblationConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: String::new(),
            seeds: Vec::new(),
            scene: SceneRef::default(),
            simulate: SimulateConfig::default(),
            preprocess: PreprocessConfig::default(),
            model: FusionConfig::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            ablations: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if self.name.is_empty() {
            return bad("experiment name must not be empty".into());
        }
        if self.scene.file.is_empty() {
            return bad("scene.file is required".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.simulate.waypoints.len() < 2 {
            return bad("simulate.waypoints needs at least 2 points".into());
        }
        if self.ablations.is_empty() {
            return bad("at least one ablation is required".into());
        }
        let mut slugs = Vec::new();
        for a in &self.ablations {
            if a.name.is_empty() {
                return bad("ablation names must not be empty".into());
            }
            if !(a.camera || a.lidar || a.imu_position) {
                return bad(format!("ablation {:?} enables no modality", a.name));
            }
            let s = slug(&a.name);
            if slugs.contains(&s) {
                return bad(format!("ablation name {:?} collides with another row", a.name));
            }
            slugs.push(s);
        }
        if self.eval.max_k == 0 || self.eval.knn_k == 0 {
            return bad("eval.max_k and eval.knn_k must be at least 1".into());
        }
        if self.train.train_stride == 0 {
            return bad("train.train_stride must be at least 1".into());
        }
        // Fails fast on an unknown optimizer name.
        self.train.to_train_config(0)?;
        Ok(())
    }
}

/// Parsed experiment plus everything derived from its scene file.
pub struct LoadedExperiment {
    pub config: ExperimentConfig,
    pub scene: Scene,
    pub scene_text: String,
    pub codebook: BeamCodebook,
}

pub fn load_experiment(config_path: &Path) -> Result<LoadedExperiment, ExperimentError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| ExperimentError::Config(format!("{}: {e}", config_path.display())))?;
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| ExperimentError::Config(e.to_string()))?;
    config.validate()?;
    let scene_path = config_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&config.scene.file);
    let scene_text = fs::read_to_string(&scene_path)
        .map_err(|e| ExperimentError::Config(format!("{}: {e}", scene_path.display())))?;
    let scene = Scene::from_toml_str(&scene_text)
        .map_err(|e| ExperimentError::Config(format!("{}: {e}", scene_path.display())))?;
    let codebook =
        BeamCodebook::from_params(&scene.beams).map_err(|e| ExperimentError::Config(e.to_string()))?;
    Ok(LoadedExperiment {
        config,
        scene,
        scene_text,
        codebook,
    })
}

/// Filesystem-safe ablation identifier used in artifact names.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

fn digest_parts(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        // Length prefix keeps part boundaries unambiguous.
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn hex(digest: &[u8; 32]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn canon<T: Serialize>(value: &T) -> Result<String, ExperimentError> {
    toml::to_string(value).map_err(|e| ExperimentError::Config(e.to_string()))
}

fn stamp_path(artifact: &Path) -> PathBuf {
    let mut os = artifact.as_os_str().to_os_string();
    os.push(".stamp");
    PathBuf::from(os)
}

fn artifact_fresh(artifact: &Path, key: &str) -> bool {
    artifact.exists()
        && fs::read_to_string(stamp_path(artifact))
            .map(|s| s.trim() == key)
            .unwrap_or(false)
}

fn write_stamp(artifact: &Path, key: &str, stage: Stage) -> Result<(), ExperimentError> {
    fs::write(stamp_path(artifact), format!("{key}\n")).map_err(stage_err(stage))
}

/// Runs a session without persisting anything; returns the stream counts.
pub fn simulate_session(
    scene: &Scene,
    codebook: &BeamCodebook,
    sim: &SimulateConfig,
    seed: u64,
) -> Result<SessionStats, ExperimentError> {
    let params = sim.session_params(seed).map_err(stage_err(Stage::Simulate))?;
    run_session(scene, codebook, &params, |_| Ok(())).map_err(stage_err(Stage::Simulate))
}

/// Runs a session and writes every record to a framed log at `path`.
pub fn record_session(
    scene: &Scene,
    codebook: &BeamCodebook,
    sim: &SimulateConfig,
    seed: u64,
    scene_hash: [u8; 32],
    config_hash: [u8; 32],
    path: &Path,
) -> Result<SessionStats, ExperimentError> {
    let params = sim.session_params(seed).map_err(stage_err(Stage::Simulate))?;
    let header = LogHeader::new(scene_hash, config_hash, 0);
    let mut writer = LogWriter::create(path, &header).map_err(stage_err(Stage::Record))?;
    let stats = run_session(scene, codebook, &params, |rec| {
        writer.append(&to_frame(&rec)).map_err(std::io::Error::other)
    })
    .map_err(|e| match e {
        SensorError::Sink(io) => ExperimentError::Stage {
            stage: Stage::Record,
            message: io.to_string(),
        },
        other => ExperimentError::Stage {
            stage: Stage::Simulate,
            message: other.to_string(),
        },
    })?;
    writer.finish().map_err(stage_err(Stage::Record))?;
    Ok(stats)
}

/// Aligns a session log into a dataset and persists it at `out`.
pub fn preprocess_log(
    log_path: &Path,
    options: &DatasetOptions,
    out: &Path,
) -> Result<Dataset, ExperimentError> {
    let log = read_log(log_path).map_err(stage_err(Stage::Preprocess))?;
    let dataset = build_dataset(&log, options).map_err(stage_err(Stage::Preprocess))?;
    save_dataset(out, &dataset).map_err(stage_err(Stage::Preprocess))?;
    Ok(dataset)
}

/// Everything needed to rebuild a trained model from its checkpoint alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub experiment: String,
    pub ablation: String,
    pub seed: u64,
    pub classes: usize,
    pub camera_h: usize,
    pub camera_w: usize,
    pub lidar_len: usize,
    pub fusion: FusionConfig,
    pub train: TrainSection,
}

/// Parses the TOML metadata stored in a model checkpoint.
pub fn parse_checkpoint_meta(text: &str) -> Result<CheckpointMeta, ExperimentError> {
    toml::from_str(text)
        .map_err(|e| ExperimentError::Config(format!("checkpoint metadata: {e}")))
}

/// Trains one (ablation, seed) model and checkpoints it at `ckpt_path`.
pub fn train_model(
    dataset: &Dataset,
    base: &FusionConfig,
    ablation: &AblationConfig,
    train: &TrainSection,
    seed: u64,
    experiment: &str,
    ckpt_path: &Path,
) -> Result<TrainReport, ExperimentError> {
    let mut fusion = base.clone();
    fusion.camera = ablation.camera;
    fusion.lidar = ablation.lidar;
    fusion.imu_position = ablation.imu_position;
    fusion.seed = seed;
    let train_cfg = train.to_train_config(seed)?;
    let run = train_on_dataset(dataset, &fusion, &train_cfg, train.train_stride)
        .map_err(stage_err(Stage::Train))?;
    let mut model = run.model;
    let (camera_h, camera_w, lidar_len) = model.input_dims();
    let meta = CheckpointMeta {
        experiment: experiment.into(),
        ablation: ablation.name.clone(),
        seed,
        classes: model.classes(),
        camera_h,
        camera_w,
        lidar_len,
        fusion,
        train: train.clone(),
    };
    let meta_text = canon(&meta)?;
    let entries = collect_params(&mut model);
    save_checkpoint(ckpt_path, &meta_text, &entries).map_err(stage_err(Stage::Train))?;
    Ok(run.report)
}

/// Rebuilds the checkpointed model and scores it on the dataset's
/// chronological test split, one window per anchor.
pub fn evaluate_checkpoint(
    dataset: &Dataset,
    ckpt_path: &Path,
    max_k: usize,
) -> Result<(CheckpointMeta, TopKReport), ExperimentError> {
    let ckpt = load_checkpoint(ckpt_path).map_err(stage_err(Stage::Eval))?;
    let meta = parse_checkpoint_meta(&ckpt.meta).map_err(|e| ExperimentError::Stage {
        stage: Stage::Eval,
        message: e.to_string(),
    })?;
    let mut model = FusionModel::new(
        meta.fusion.clone(),
        meta.camera_h,
        meta.camera_w,
        meta.lidar_len,
        meta.classes,
    )
    .map_err(stage_err(Stage::Eval))?;
    restore_params(&mut model, &ckpt).map_err(stage_err(Stage::Eval))?;
    let test = &dataset.samples[dataset.train_count..];
    let windows = build_windows(test, dataset.lidar_max_range, model.config(), 1);
    if windows.is_empty() {
        return Err(ExperimentError::Stage {
            stage: Stage::Eval,
            message: format!(
                "test split has {} samples, fewer than one {}-step window",
                test.len(),
                meta.fusion.window
            ),
        });
    }
    let predictions = predict_all(&mut model, &windows).map_err(stage_err(Stage::Eval))?;
    let report = topk_report(&predictions, max_k).map_err(stage_err(Stage::Eval))?;
    Ok((meta, report))
}

/// Reference predictors scored on exactly the samples the model's test
/// windows end on: a label oracle, dead-reckoned geometry, a position
/// fingerprint (k-NN), and the training-majority prior.
pub fn baseline_reports(
    dataset: &Dataset,
    bs_position: Vec2,
    codebook: &BeamCodebook,
    window: usize,
    knn_k: usize,
    max_k: usize,
) -> Result<Vec<(&'static str, TopKReport)>, ExperimentError> {
    let err = stage_err::<String>(Stage::Eval);
    let train = &dataset.samples[..dataset.train_count];
    let test = &dataset.samples[dataset.train_count..];
    if test.len() < window {
        return Err(err(format!(
            "test split has {} samples, fewer than one {window}-step window",
            test.len()
        )));
    }
    let ends = &test[window - 1..];
    let end_labels: Vec<usize> = ends.iter().map(|s| s.label).collect();
    let train_labels: Vec<usize> = train.iter().map(|s| s.label).collect();
    let train_points: Vec<(Vec2, usize)> =
        train.iter().map(|s| (s.rel_position, s.label)).collect();
    let queries: Vec<(Vec2, usize)> = ends.iter().map(|s| (s.rel_position, s.label)).collect();
    let geo_queries: Vec<(Vec2, f64, usize)> = ends
        .iter()
        .map(|s| (s.rel_position, s.yaw, s.label))
        .collect();
    let classes = dataset.beam_count;

    let rows = vec![
        ("oracle", oracle_predictions(&end_labels, classes)),
        (
            "geometric",
            geometric_predictions(&geo_queries, dataset.start_position, bs_position, codebook),
        ),
        ("knn", knn_predictions(&train_points, &queries, knn_k, classes)),
        (
            "majority",
            majority_predictions(&train_labels, classes, &end_labels),
        ),
    ];
    rows.into_iter()
        .map(|(kind, preds)| {
            let report = topk_report(&preds, max_k).map_err(stage_err(Stage::Eval))?;
            Ok((kind, report))
        })
        .collect()
}

/// Accuracy of one trained (ablation, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub ablation: String,
    pub seed: u64,
    pub report: TopKReport,
}

/// Accuracy of one reference predictor on one seed's dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub kind: String,
    pub seed: u64,
    pub report: TopKReport,
}

/// Seed-averaged accuracy of one ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationMean {
    pub ablation: String,
    pub accuracy: Vec<f64>,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    /// One row per (ablation, seed), ablation-major in config order.
    pub rows: Vec<EvalRow>,
    /// One row per ablation, averaged over seeds.
    pub means: Vec<AblationMean>,
    /// One row per (seed, baseline kind).
    pub baselines: Vec<BaselineRow>,
    pub out_dir: PathBuf,
}

pub fn run_experiment(config_path: &Path, out_dir: &Path) -> Result<ExperimentOutcome, ExperimentError> {
    let loaded = load_experiment(config_path)?;
    run_loaded_experiment(&loaded, out_dir)
}

pub fn run_loaded_experiment(
    loaded: &LoadedExperiment,
    out_dir: &Path,
) -> Result<ExperimentOutcome, ExperimentError> {
    let cfg = &loaded.config;
    fs::create_dir_all(out_dir).map_err(|e| ExperimentError::Io {
        context: format!("creating {}", out_dir.display()),
        message: e.to_string(),
    })?;

    let scene_hash = digest_parts(&[b"scene-v1", loaded.scene_text.as_bytes()]);
    let sim_canon = canon(&cfg.simulate)?;
    let pre_canon = canon(&cfg.preprocess)?;
    let model_canon = canon(&cfg.model)?;
    let train_canon = canon(&cfg.train)?;

    // Record and preprocess each seed's session, reusing fresh artifacts.
    let mut datasets = Vec::with_capacity(cfg.seeds.len());
    let mut pre_keys = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let record_key = hex(&digest_parts(&[
            b"record-v1",
            &scene_hash,
            sim_canon.as_bytes(),
            &seed.to_le_bytes(),
        ]));
        let log_path = out_dir.join(format!("session_s{seed}.log"));
        if !artifact_fresh(&log_path, &record_key) {
            let config_hash = digest_parts(&[sim_canon.as_bytes(), &seed.to_le_bytes()]);
            record_session(
                &loaded.scene,
                &loaded.codebook,
                &cfg.simulate,
                seed,
                scene_hash,
                config_hash,
                &log_path,
            )?;
            write_stamp(&log_path, &record_key, Stage::Record)?;
        }

        let pre_key = hex(&digest_parts(&[
            b"preprocess-v1",
            record_key.as_bytes(),
            pre_canon.as_bytes(),
        ]));
        let ds_path = out_dir.join(format!("dataset_s{seed}.ds"));
        let dataset = if artifact_fresh(&ds_path, &pre_key) {
            load_dataset(&ds_path).map_err(stage_err(Stage::Preprocess))?
        } else {
            let ds = preprocess_log(&log_path, &cfg.preprocess.options(), &ds_path)?;
            write_stamp(&ds_path, &pre_key, Stage::Preprocess)?;
            ds
        };
        datasets.push(dataset);
        pre_keys.push(pre_key);
    }

    let mut baselines = Vec::new();
    for (i, &seed) in cfg.seeds.iter().enumerate() {
        for (kind, report) in baseline_reports(
            &datasets[i],
            loaded.scene.bs_pose.position,
            &loaded.codebook,
            cfg.model.window,
            cfg.eval.knn_k,
            cfg.eval.max_k,
        )? {
            baselines.push(BaselineRow {
                kind: kind.into(),
                seed,
                report,
            });
        }
    }

    // Ablation runs are independent; spread them over the available cores.
    // Results land in per-job slots, so output order never depends on timing.
    let jobs: Vec<(usize, usize)> = (0..cfg.ablations.len())
        .flat_map(|a| (0..cfg.seeds.len()).map(move |s| (a, s)))
        .collect();
    let results: Mutex<Vec<Option<Result<EvalRow, ExperimentError>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    let cursor = AtomicUsize::new(0);
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(jobs.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = cursor.fetch_add(1, Ordering::Relaxed);
                if j >= jobs.len() {
                    break;
                }
                let (ai, si) = jobs[j];
                let ablation = &cfg.ablations[ai];
                let seed = cfg.seeds[si];
                let outcome = run_ablation_job(
                    cfg,
                    &datasets[si],
                    &pre_keys[si],
                    &model_canon,
                    &train_canon,
                    ablation,
                    seed,
                    out_dir,
                );
                results.lock().unwrap()[j] = Some(outcome);
            });
        }
    });

    let mut rows = Vec::with_capacity(jobs.len());
    for slot in results.into_inner().unwrap() {
        rows.push(slot.expect("every job ran")?);
    }

    let mut means = Vec::with_capacity(cfg.ablations.len());
    for (ai, ablation) in cfg.ablations.iter().enumerate() {
        let mut acc = vec![0.0; cfg.eval.max_k];
        let seed_rows = &rows[ai * cfg.seeds.len()..(ai + 1) * cfg.seeds.len()];
        for row in seed_rows {
            for (a, v) in acc.iter_mut().zip(&row.report.accuracy) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= seed_rows.len() as f64;
        }
        means.push(AblationMean {
            ablation: ablation.name.clone(),
            accuracy: acc,
        });
    }

    write_reports(out_dir, cfg.eval.max_k, &rows, &means, &baselines)?;
    Ok(ExperimentOutcome {
        rows,
        means,
        baselines,
        out_dir: out_dir.to_path_buf(),
    })
}

#[allow(clippy::too_many_arguments)]
fn run_ablation_job(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    pre_key: &str,
    model_canon: &str,
    train_canon: &str,
    ablation: &AblationConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<EvalRow, ExperimentError> {
    let ablation_canon = canon(ablation)?;
    let train_key = hex(&digest_parts(&[
        b"train-v1",
        pre_key.as_bytes(),
        model_canon.as_bytes(),
        train_canon.as_bytes(),
        ablation_canon.as_bytes(),
        &seed.to_le_bytes(),
    ]));
    let ckpt_path = out_dir.join(format!("model_{}_s{seed}.ckpt", slug(&ablation.name)));
    if !artifact_fresh(&ckpt_path, &train_key) {
        train_model(
            dataset,
            &cfg.model,
            ablation,
            &cfg.train,
            seed,
            &cfg.name,
            &ckpt_path,
        )?;
        write_stamp(&ckpt_path, &train_key, Stage::Train)?;
    }
    let (_, report) = evaluate_checkpoint(dataset, &ckpt_path, cfg.eval.max_k)?;
    Ok(EvalRow {
        ablation: ablation.name.clone(),
        seed,
        report,
    })
}

fn accuracy_cells(accuracy: &[f64]) -> String {
    accuracy
        .iter()
        .map(|v| format!("{v:.6}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn topk_header(max_k: usize) -> String {
    (1..=max_k).map(|k| format!("top{k}")).collect::<Vec<_>>().join(",")
}

fn write_reports(
    out_dir: &Path,
    max_k: usize,
    rows: &[EvalRow],
    means: &[AblationMean],
    baselines: &[BaselineRow],
) -> Result<(), ExperimentError> {
    let err = stage_err::<std::io::Error>(Stage::Report);

    let mut report = format!("ablation,seed,windows,{}\n", topk_header(max_k));
    for row in rows {
        report.push_str(&format!(
            "{},{},{},{}\n",
            row.ablation,
            row.seed,
            row.report.samples,
            accuracy_cells(&row.report.accuracy)
        ));
    }
    fs::write(out_dir.join(REPORT_FILE), report).map_err(&err)?;

    let mut ablation = format!("ablation,{}\n", topk_header(max_k));
    for mean in means {
        ablation.push_str(&format!(
            "{},{}\n",
            mean.ablation,
            accuracy_cells(&mean.accuracy)
        ));
    }
    fs::write(out_dir.join(ABLATION_FILE), ablation).map_err(&err)?;

    let mut base = format!("baseline,seed,samples,{}\n", topk_header(max_k));
    for row in baselines {
        base.push_str(&format!(
            "{},{},{},{}\n",
            row.kind,
            row.seed,
            row.report.samples,
            accuracy_cells(&row.report.accuracy)
        ));
    }
    fs::write(out_dir.join(BASELINE_FILE), base).map_err(&err)?;

    fs::write(out_dir.join(PLOT_FILE), plot_script(max_k)).map_err(&err)?;
    Ok(())
}

/// Grouped-bar chart over the ablation table; render with
/// `gnuplot plot_topk.gp`.
fn plot_script(max_k: usize) -> String {
    let mut s = String::from(
        "# Accuracy per modality subset, one bar group per ablation.\n\
         set datafile separator ','\n\
         set terminal svg size 760,420\n\
         set output 'ablation_topk.svg'\n\
         set style data histograms\n\
         set style histogram clustered gap 1\n\
         set style fill solid 0.85 border -1\n\
         set boxwidth 0.9\n\
         set yrange [0:1]\n\
         set ylabel 'accuracy'\n\
         set xlabel 'modalities'\n\
         set key left top\n\
         plot ",
    );
    for k in 1..=max_k {
        if k > 1 {
            s.push_str(", \\\n     ");
        }
        let source = if k == 1 { format!("'{ABLATION_FILE}'") } else { "''".into() };
        let xtic = if k == 1 { ":xtic(1)" } else { "" };
        s.push_str(&format!(
            "{source} every ::1 using {}{xtic} title 'K={k}'",
            k + 1
        ));
    }
    s.push('\n');
    s
}

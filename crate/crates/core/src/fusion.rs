//! Multimodal beam predictor. Per anchor step, enabled modality encoders
//! (depth camera grid, circular range ring, inertial track) produce fixed
//! width features that are concatenated in a fixed order, fused by a dense
//! layer, and run through an LSTM over a short window of consecutive
//! anchors; the final hidden state maps to one logit per beam.

use serde::{Deserialize, Serialize};

use crate::align::{AlignedSample, Dataset};
use crate::nn::{
    seeded_rng, softmax, train, AvgPool1d, Conv1dCircular, Conv2d, Dense, GlobalMaxPool1d, Layer,
    LstmLayer, MaxPool1d, MaxPool2d, Model, NnError, Relu, RnnLayer, Sequential, Tensor,
    TrainConfig, TrainReport,
};

/// Static per-step features: scaled relative position plus yaw as a unit
/// vector.
const STATICS_WIDTH: usize = 4;
const CAMERA_CH: (usize, usize) = (8, 16);
const LIDAR_CH: (usize, usize) = (8, 16);
const RING_KERNEL: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub camera: bool,
    pub lidar: bool,
    pub imu_position: bool,
    /// Consecutive anchors per prediction window.
    pub window: usize,
    /// Average-pool factor applied to the range ring before convolution.
    pub lidar_downsample: usize,
    /// Replace the flattening dense input with a per-channel global maximum,
    /// making the ring encoder invariant to rotations that are multiples of
    /// the cumulative pooling stride.
    pub lidar_global_pool: bool,
    pub rnn_hidden: usize,
    /// Output width of the camera and ring encoders.
    pub feature_width: usize,
    /// Width of the fused per-step representation fed to the LSTM.
    pub fused_width: usize,
    pub lstm_hidden: usize,
    /// Divisor applied to positions before they enter the network.
    pub position_scale: f64,
    pub seed: u64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            camera: true,
            lidar: true,
            imu_position: true,
            window: 5,
            lidar_downsample: 8,
            lidar_global_pool: false,
            rnn_hidden: 32,
            feature_width: 64,
            fused_width: 64,
            lstm_hidden: 64,
            position_scale: 10.0,
            seed: 0,
        }
    }
}

impl FusionConfig {
    fn validate(&self) -> Result<(), NnError> {
        if !(self.camera || self.lidar || self.imu_position) {
            return Err(NnError::BadConfig("no modalities enabled".into()));
        }
        if self.window == 0 {
            return Err(NnError::BadConfig("window must be >= 1".into()));
        }
        if self.lidar_downsample == 0 {
            return Err(NnError::BadConfig("lidar_downsample must be >= 1".into()));
        }
        for (name, v) in [
            ("rnn_hidden", self.rnn_hidden),
            ("feature_width", self.feature_width),
            ("fused_width", self.fused_width),
            ("lstm_hidden", self.lstm_hidden),
        ] {
            if v == 0 {
                return Err(NnError::BadConfig(format!("{name} must be >= 1")));
            }
        }
        if !self.position_scale.is_finite() || self.position_scale <= 0.0 {
            return Err(NnError::BadConfig(format!(
                "position_scale {}",
                self.position_scale
            )));
        }
        Ok(())
    }

    fn fuse_input_width(&self) -> usize {
        let mut w = 0;
        if self.camera {
            w += self.feature_width;
        }
        if self.lidar {
            w += self.feature_width;
        }
        if self.imu_position {
            w += self.rnn_hidden + STATICS_WIDTH;
        }
        w
    }
}

/// Prepared tensors for one anchor inside a window.
pub struct WindowStep {
    pub(crate) camera: Tensor,
    pub(crate) lidar: Tensor,
    pub(crate) track: Tensor,
    pub(crate) statics: Vec<f64>,
}

/// A run of consecutive aligned samples; the label and timestamp are the
/// last step's.
pub struct Window {
    pub(crate) steps: Vec<WindowStep>,
    pub label: usize,
    pub timestamp_ns: u64,
}

fn make_step(sample: &AlignedSample, lidar_max_range: f64, config: &FusionConfig) -> WindowStep {
    let cam = &sample.camera;
    let depth_scale = if cam.max_range > 0.0 { cam.max_range } else { 1.0 };
    let camera = Tensor {
        shape: vec![1, cam.height, cam.width],
        data: cam.pixels.iter().map(|&p| p / depth_scale).collect(),
    };
    let ring_scale = if lidar_max_range > 0.0 { lidar_max_range } else { 1.0 };
    let lidar = Tensor {
        shape: vec![1, sample.lidar.len()],
        data: sample.lidar.iter().map(|&r| r / ring_scale).collect(),
    };
    let ps = config.position_scale;
    let track = Tensor {
        shape: vec![sample.imu_track.len(), 2],
        data: sample
            .imu_track
            .iter()
            .flat_map(|p| [p.x / ps, p.y / ps])
            .collect(),
    };
    WindowStep {
        camera,
        lidar,
        track,
        statics: vec![
            sample.rel_position.x / ps,
            sample.rel_position.y / ps,
            sample.yaw.cos(),
            sample.yaw.sin(),
        ],
    }
}

/// Slides a window of `config.window` samples over `samples` with the given
/// stride. Windows are built within the slice only, so passing the training
/// and evaluation regions separately keeps them disjoint.
pub fn build_windows(
    samples: &[AlignedSample],
    lidar_max_range: f64,
    config: &FusionConfig,
    stride: usize,
) -> Vec<Window> {
    let stride = stride.max(1);
    let mut windows = Vec::new();
    if samples.len() < config.window {
        return windows;
    }
    let mut start = 0;
    while start + config.window <= samples.len() {
        let slice = &samples[start..start + config.window];
        let last = slice.last().unwrap();
        windows.push(Window {
            steps: slice
                .iter()
                .map(|s| make_step(s, lidar_max_range, config))
                .collect(),
            label: last.label,
            timestamp_ns: last.timestamp_ns,
        });
        start += stride;
    }
    windows
}

pub struct FusionModel {
    config: FusionConfig,
    camera_h: usize,
    camera_w: usize,
    lidar_len: usize,
    classes: usize,
    camera_enc: Option<Sequential>,
    lidar_enc: Option<Sequential>,
    track_enc: Option<RnnLayer>,
    fuse: Dense,
    fuse_act: Relu,
    temporal: LstmLayer,
    head: Dense,
    /// Step counts of forwards awaiting a backward, innermost last.
    pending_steps: Vec<usize>,
}

impl FusionModel {
    pub fn new(
        config: FusionConfig,
        camera_h: usize,
        camera_w: usize,
        lidar_len: usize,
        classes: usize,
    ) -> Result<FusionModel, NnError> {
        config.validate()?;
        if classes < 2 {
            return Err(NnError::BadConfig(format!("{classes} classes")));
        }
        let mut rng = seeded_rng(config.seed);

        let camera_enc = if config.camera {
            if camera_h < 4 || camera_w < 4 {
                return Err(NnError::BadConfig(format!(
                    "camera grid {camera_h}x{camera_w} too small for two pooling stages"
                )));
            }
            let (h2, w2) = (camera_h / 2 / 2, camera_w / 2 / 2);
            Some(Sequential::new(vec![
                Box::new(Conv2d::new(1, CAMERA_CH.0, 3, 3, 1, 1, &mut rng)),
                Box::new(Relu::new()),
                Box::new(MaxPool2d::new(2, 2)),
                Box::new(Conv2d::new(CAMERA_CH.0, CAMERA_CH.1, 3, 3, 1, 1, &mut rng)),
                Box::new(Relu::new()),
                Box::new(MaxPool2d::new(2, 2)),
                Box::new(Dense::new(CAMERA_CH.1 * h2 * w2, config.feature_width, &mut rng)),
                Box::new(Relu::new()),
            ]))
        } else {
            None
        };

        let lidar_enc = if config.lidar {
            let pooled = lidar_len / config.lidar_downsample;
            // The second circular conv sees pooled / 4 positions and needs at
            // least its kernel width.
            if pooled < 4 * RING_KERNEL {
                return Err(NnError::BadConfig(format!(
                    "{lidar_len} ring positions / {} leave {pooled} < {} for the conv stack",
                    config.lidar_downsample,
                    4 * RING_KERNEL
                )));
            }
            let after = pooled / 4 / 4;
            let mut layers: Vec<Box<dyn Layer>> = vec![
                Box::new(AvgPool1d::new(config.lidar_downsample, config.lidar_downsample)),
                Box::new(Conv1dCircular::new(1, LIDAR_CH.0, RING_KERNEL, &mut rng)),
                Box::new(Relu::new()),
                Box::new(MaxPool1d::new(4, 4)),
                Box::new(Conv1dCircular::new(LIDAR_CH.0, LIDAR_CH.1, RING_KERNEL, &mut rng)),
                Box::new(Relu::new()),
                Box::new(MaxPool1d::new(4, 4)),
            ];
            if config.lidar_global_pool {
                layers.push(Box::new(GlobalMaxPool1d::new()));
                layers.push(Box::new(Dense::new(LIDAR_CH.1, config.feature_width, &mut rng)));
            } else {
                layers.push(Box::new(Dense::new(
                    LIDAR_CH.1 * after,
                    config.feature_width,
                    &mut rng,
                )));
            }
            layers.push(Box::new(Relu::new()));
            Some(Sequential::new(layers))
        } else {
            None
        };

        let track_enc = if config.imu_position {
            Some(RnnLayer::new(2, config.rnn_hidden, &mut rng))
        } else {
            None
        };

        let fuse = Dense::new(config.fuse_input_width(), config.fused_width, &mut rng);
        let temporal = LstmLayer::new(config.fused_width, config.lstm_hidden, &mut rng);
        let head = Dense::new(config.lstm_hidden, classes, &mut rng);
        Ok(FusionModel {
            config,
            camera_h,
            camera_w,
            lidar_len,
            classes,
            camera_enc,
            lidar_enc,
            track_enc,
            fuse,
            fuse_act: Relu::new(),
            temporal,
            head,
            pending_steps: Vec::new(),
        })
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Input dimensions the model was built for: camera rows, camera
    /// columns, ring positions.
    pub fn input_dims(&self) -> (usize, usize, usize) {
        (self.camera_h, self.camera_w, self.lidar_len)
    }

    fn check_step(&self, step: &WindowStep) -> Result<(), NnError> {
        if self.config.camera && step.camera.shape != [1, self.camera_h, self.camera_w] {
            return Err(NnError::ShapeMismatch(format!(
                "camera step {:?}, model wants [1, {}, {}]",
                step.camera.shape, self.camera_h, self.camera_w
            )));
        }
        if self.config.lidar && step.lidar.shape != [1, self.lidar_len] {
            return Err(NnError::ShapeMismatch(format!(
                "ring step {:?}, model wants [1, {}]",
                step.lidar.shape, self.lidar_len
            )));
        }
        Ok(())
    }

    /// Class probabilities for one window; caches are cleared afterwards so
    /// this is safe to interleave with training.
    pub fn predict(&mut self, window: &Window) -> Result<Vec<f64>, NnError> {
        let logits = self.logits(window);
        self.reset_caches();
        Ok(softmax(&logits?.data))
    }
}

impl Model<Window> for FusionModel {
    fn logits(&mut self, window: &Window) -> Result<Tensor, NnError> {
        if window.steps.is_empty() {
            return Err(NnError::ShapeMismatch("empty window".into()));
        }
        let mut rows = Vec::with_capacity(window.steps.len() * self.config.fused_width);
        for step in &window.steps {
            self.check_step(step)?;
            let mut cat = Vec::with_capacity(self.config.fuse_input_width());
            if let Some(enc) = &mut self.camera_enc {
                cat.extend_from_slice(&enc.forward(&step.camera)?.data);
            }
            if let Some(enc) = &mut self.lidar_enc {
                cat.extend_from_slice(&enc.forward(&step.lidar)?.data);
            }
            if let Some(enc) = &mut self.track_enc {
                cat.extend_from_slice(&enc.forward(&step.track)?.data);
                cat.extend_from_slice(&step.statics);
            }
            let fused = self
                .fuse_act
                .forward(&self.fuse.forward(&Tensor::from_vec(&[cat.len()], cat)?)?)?;
            rows.extend_from_slice(&fused.data);
        }
        let seq = Tensor::from_vec(&[window.steps.len(), self.config.fused_width], rows)?;
        let hidden = self.temporal.forward(&seq)?;
        let logits = self.head.forward(&hidden)?;
        self.pending_steps.push(window.steps.len());
        Ok(logits)
    }

    fn backprop(&mut self, grad_logits: &Tensor) -> Result<(), NnError> {
        let steps = self.pending_steps.pop().ok_or_else(|| {
            NnError::ShapeMismatch("backprop without matching forward".into())
        })?;
        let dh = self.head.backward(grad_logits)?;
        let drows = self.temporal.backward(&dh)?;
        let fw = self.config.fused_width;
        for t in (0..steps).rev() {
            let row = Tensor::from_vec(&[fw], drows.data[t * fw..(t + 1) * fw].to_vec())?;
            let dact = self.fuse_act.backward(&row)?;
            let dcat = self.fuse.backward(&dact)?;
            let mut offset = 0;
            if let Some(enc) = &mut self.camera_enc {
                let w = self.config.feature_width;
                enc.backward(&Tensor::from_vec(
                    &[w],
                    dcat.data[offset..offset + w].to_vec(),
                )?)?;
                offset += w;
            }
            if let Some(enc) = &mut self.lidar_enc {
                let w = self.config.feature_width;
                enc.backward(&Tensor::from_vec(
                    &[w],
                    dcat.data[offset..offset + w].to_vec(),
                )?)?;
                offset += w;
            }
            if let Some(enc) = &mut self.track_enc {
                let w = self.config.rnn_hidden;
                enc.backward(&Tensor::from_vec(
                    &[w],
                    dcat.data[offset..offset + w].to_vec(),
                )?)?;
                // Static features have no upstream parameters.
            }
        }
        Ok(())
    }

    fn visit_trainable(&mut self, f: &mut dyn FnMut(&mut Tensor, &mut Tensor)) {
        if let Some(enc) = &mut self.camera_enc {
            enc.visit_params(f);
        }
        if let Some(enc) = &mut self.lidar_enc {
            enc.visit_params(f);
        }
        if let Some(enc) = &mut self.track_enc {
            enc.visit_params(f);
        }
        self.fuse.visit_params(f);
        self.temporal.visit_params(f);
        self.head.visit_params(f);
    }

    fn reset_caches(&mut self) {
        if let Some(enc) = &mut self.camera_enc {
            enc.clear_cache();
        }
        if let Some(enc) = &mut self.lidar_enc {
            enc.clear_cache();
        }
        if let Some(enc) = &mut self.track_enc {
            enc.clear_cache();
        }
        self.fuse.clear_cache();
        self.fuse_act.clear_cache();
        self.temporal.clear_cache();
        self.head.clear_cache();
        self.pending_steps.clear();
    }
}

/// A trained model with its windows, split chronologically by the dataset's
/// cutoff so no evaluation window overlaps training data.
pub struct FusionRun {
    pub model: FusionModel,
    pub report: TrainReport,
    pub train_windows: Vec<Window>,
    pub test_windows: Vec<Window>,
}

/// Builds windows over the dataset's train prefix and test suffix, trains a
/// fresh model on the former, and returns everything needed to evaluate on
/// the latter. `train_stride` thins overlapping training windows.
pub fn train_on_dataset(
    dataset: &Dataset,
    config: &FusionConfig,
    train_config: &TrainConfig,
    train_stride: usize,
) -> Result<FusionRun, NnError> {
    let first = dataset
        .samples
        .first()
        .ok_or_else(|| NnError::BadConfig("dataset has no samples".into()))?;
    let train_slice = &dataset.samples[..dataset.train_count];
    let test_slice = &dataset.samples[dataset.train_count..];
    let train_windows = build_windows(train_slice, dataset.lidar_max_range, config, train_stride);
    let test_windows = build_windows(test_slice, dataset.lidar_max_range, config, 1);
    if train_windows.is_empty() || test_windows.is_empty() {
        return Err(NnError::BadConfig(format!(
            "window {} over {} train / {} test samples leaves an empty split",
            config.window,
            train_slice.len(),
            test_slice.len()
        )));
    }
    let mut model = FusionModel::new(
        config.clone(),
        first.camera.height,
        first.camera.width,
        first.lidar.len(),
        dataset.beam_count,
    )?;
    let labels: Vec<usize> = train_windows.iter().map(|w| w.label).collect();
    let report = train(&mut model, &train_windows, &labels, train_config)?;
    Ok(FusionRun {
        model,
        report,
        train_windows,
        test_windows,
    })
}

/// Probability vector and true label for each window, in order.
pub fn predict_all(
    model: &mut FusionModel,
    windows: &[Window],
) -> Result<Vec<(Vec<f64>, usize)>, NnError> {
    windows
        .iter()
        .map(|w| Ok((model.predict(w)?, w.label)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny_config() -> FusionConfig {
        FusionConfig {
            rnn_hidden: 8,
            feature_width: 16,
            fused_width: 16,
            lstm_hidden: 16,
            ..FusionConfig::default()
        }
    }

    /// Synthetic window with plausible scales; |steps| = window.
    fn fake_window(config: &FusionConfig, seed: u64, label: usize) -> Window {
        let mut rng = seeded_rng(seed);
        let steps = (0..config.window)
            .map(|_| {
                let camera = Tensor {
                    shape: vec![1, 8, 12],
                    data: (0..96).map(|_| rng.random_range(0.0..1.0)).collect(),
                };
                let lidar = Tensor {
                    shape: vec![1, 512],
                    data: (0..512).map(|_| rng.random_range(0.0..1.0)).collect(),
                };
                let track = Tensor {
                    shape: vec![6, 2],
                    data: (0..12).map(|_| rng.random_range(-0.5..0.5)).collect(),
                };
                WindowStep {
                    camera,
                    lidar,
                    track,
                    statics: vec![
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        1.0,
                        0.0,
                    ],
                }
            })
            .collect();
        Window {
            steps,
            label,
            timestamp_ns: seed,
        }
    }

    #[test]
    fn untrained_model_emits_a_probability_vector() {
        let config = tiny_config();
        let mut model = FusionModel::new(config.clone(), 8, 12, 512, 36).unwrap();
        let probs = model.predict(&fake_window(&config, 1, 0)).unwrap();
        assert_eq!(probs.len(), 36);
        assert!(probs.iter().all(|&p| p > 0.0 && p < 1.0 && p.is_finite()));
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "probabilities sum to {sum}");
    }

    #[test]
    fn window_of_one_degenerates_cleanly() {
        let config = FusionConfig {
            window: 1,
            ..tiny_config()
        };
        let mut model = FusionModel::new(config.clone(), 8, 12, 512, 36).unwrap();
        let probs = model.predict(&fake_window(&config, 2, 0)).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn every_parameter_receives_gradient() {
        let config = tiny_config();
        let mut model = FusionModel::new(config.clone(), 8, 12, 512, 36).unwrap();
        let window = fake_window(&config, 3, 7);
        let logits = model.logits(&window).unwrap();
        let dlogits = logits.scalar_like(1.0 / 36.0);
        model.backprop(&dlogits).unwrap();
        let mut dead = Vec::new();
        let mut index = 0;
        model.visit_trainable(&mut |_, grad| {
            if grad.data.iter().all(|&g| g == 0.0) {
                dead.push(index);
            }
            index += 1;
        });
        assert_eq!(index, 6 + 6 + 3 + 2 + 3 + 2);
        assert!(dead.is_empty(), "zero gradient at parameter tensors {dead:?}");
    }

    #[test]
    fn global_pool_makes_ring_rotation_invisible() {
        let config = FusionConfig {
            camera: false,
            imu_position: false,
            lidar_global_pool: true,
            window: 1,
            ..tiny_config()
        };
        let mut model = FusionModel::new(config.clone(), 8, 12, 512, 36).unwrap();
        let window = fake_window(&config, 4, 0);
        let base = model.predict(&window).unwrap();
        // Rotate by the cumulative pooling stride 8 * 4 * 4.
        let shift = 128;
        let rotated = Window {
            steps: window
                .steps
                .iter()
                .map(|s| WindowStep {
                    camera: s.camera.clone(),
                    lidar: Tensor {
                        shape: s.lidar.shape.clone(),
                        data: (0..512).map(|i| s.lidar.data[(i + shift) % 512]).collect(),
                    },
                    track: s.track.clone(),
                    statics: s.statics.clone(),
                })
                .collect(),
            label: window.label,
            timestamp_ns: window.timestamp_ns,
        };
        assert_eq!(base, model.predict(&rotated).unwrap());
    }

    #[test]
    fn same_seed_gives_identical_predictions() {
        let config = tiny_config();
        let window = fake_window(&config, 5, 0);
        let mut a = FusionModel::new(config.clone(), 8, 12, 512, 36).unwrap();
        let mut b = FusionModel::new(config.clone(), 8, 12, 512, 36).unwrap();
        assert_eq!(a.predict(&window).unwrap(), b.predict(&window).unwrap());
    }

    #[test]
    fn training_on_position_labels_reduces_loss() {
        // Label is decided by the sign of the first static feature, so the
        // inertial branch alone can solve it.
        let config = FusionConfig {
            camera: false,
            lidar: false,
            window: 2,
            ..tiny_config()
        };
        let mut windows = Vec::new();
        for i in 0..40 {
            let mut w = fake_window(&config, 100 + i, 0);
            let cls = (i % 2) as usize;
            for step in &mut w.steps {
                step.statics[0] = if cls == 0 { -0.4 } else { 0.4 };
            }
            w.label = cls;
            windows.push(w);
        }
        let labels: Vec<usize> = windows.iter().map(|w| w.label).collect();
        let mut model = FusionModel::new(config, 8, 12, 512, 36).unwrap();
        let report = train(
            &mut model,
            &windows,
            &labels,
            &TrainConfig {
                learning_rate: 0.05,
                batch_size: 8,
                epochs: 30,
                seed: 1,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert!(
            report.epoch_losses.last().unwrap() < &(report.epoch_losses[0] * 0.5),
            "losses {:?}",
            report.epoch_losses
        );
    }

    #[test]
    fn rejects_degenerate_configurations() {
        let none = FusionConfig {
            camera: false,
            lidar: false,
            imu_position: false,
            ..FusionConfig::default()
        };
        assert!(FusionModel::new(none, 8, 12, 512, 36).is_err());
        let config = tiny_config();
        // Camera grid too small for two pooling stages.
        assert!(FusionModel::new(config.clone(), 2, 12, 256, 36).is_err());
        // Ring too short after downsampling.
        assert!(FusionModel::new(config.clone(), 8, 12, 64, 36).is_err());
        // Mismatched step dimensions are caught at the first forward.
        let mut model = FusionModel::new(config.clone(), 8, 12, 512, 36).unwrap();
        let bad = fake_window(
            &FusionConfig {
                window: 1,
                ..config
            },
            6,
            0,
        );
        let mut shrunk = bad;
        shrunk.steps[0].lidar = Tensor::zeros(&[1, 128]);
        assert!(model.predict(&shrunk).is_err());
    }
}

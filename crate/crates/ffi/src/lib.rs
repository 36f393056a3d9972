//! C ABI over scenes, datasets, and trained models. Every object crosses the
//! boundary as an opaque handle owned by this library; callers create them
//! with `bf_*_load`, free them with the matching `bf_*_free`, and read one
//! thread-local error message through `bf_last_error` after any failure.
//!
//! All functions return `BfStatus` unless they are infallible getters.
//! Null handles are rejected, never dereferenced.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use beamfuse::align::{load_dataset, Dataset};
use beamfuse::experiment::CheckpointMeta;
use beamfuse::fusion::{build_windows, FusionModel};
use beamfuse::nn::{load_checkpoint, restore_params};
use beamfuse::propagation::{sweep, BeamCodebook};
use beamfuse::scene::{Pose, Scene};
use beamfuse::geometry::Vec2;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BfStatus {
    /// Success.
    BfOk = 0,
    /// A required pointer argument was null.
    BfNullArgument = 1,
    /// A string argument was not valid UTF-8.
    BfBadString = 2,
    /// The input was structurally valid but unusable (bad file, bad index,
    /// shape mismatch).
    BfBadInput = 3,
    /// The operation panicked; state may be stale but memory is intact.
    BfPanic = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = msg.into());
}

fn fail(status: BfStatus, msg: impl Into<String>) -> BfStatus {
    set_error(msg);
    status
}

/// Copies the current thread's last error message (UTF-8, NUL-terminated)
/// into `buf` and returns the full message length in bytes, excluding the
/// NUL. A zero `cap` leaves `buf` untouched; longer messages are cut to fit.
#[no_mangle]
pub extern "C" fn bf_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            // Cut at a character boundary so the copy stays valid UTF-8.
            let n = (0..=n).rev().find(|&i| msg.is_char_boundary(i)).unwrap_or(0);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast(), n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

fn guard<F: FnOnce() -> BfStatus>(f: F) -> BfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(BfStatus::BfPanic, "internal panic"),
    }
}

/// Duplicated path-decoding for every entry point taking a C string.
unsafe fn path_arg<'a>(ptr: *const c_char) -> Result<&'a Path, BfStatus> {
    if ptr.is_null() {
        return Err(fail(BfStatus::BfNullArgument, "path is null"));
    }
    match CStr::from_ptr(ptr).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => Err(fail(BfStatus::BfBadString, "path is not valid UTF-8")),
    }
}

/// A loaded propagation world plus the codebook built from its beam
/// parameters.
pub struct BfScene {
    scene: Scene,
    codebook: BeamCodebook,
}

/// An aligned, chronologically split training set.
pub struct BfDataset {
    dataset: Dataset,
}

/// A trained model rebuilt from a checkpoint, with its metadata.
pub struct BfModel {
    model: FusionModel,
    meta: CheckpointMeta,
}

/// Loads a scene description and builds its beam codebook.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_scene_load(path: *const c_char, out: *mut *mut BfScene) -> BfStatus {
    guard(|| {
        if out.is_null() {
            return fail(BfStatus::BfNullArgument, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let scene = match Scene::load(path) {
            Ok(s) => s,
            Err(e) => return fail(BfStatus::BfBadInput, format!("{}: {e}", path.display())),
        };
        let codebook = match BeamCodebook::from_params(&scene.beams) {
            Ok(c) => c,
            Err(e) => return fail(BfStatus::BfBadInput, e.to_string()),
        };
        *out = Box::into_raw(Box::new(BfScene { scene, codebook }));
        BfStatus::BfOk
    })
}

/// Frees a scene handle. Null is a no-op.
///
/// # Safety
/// `scene` must come from `bf_scene_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn bf_scene_free(scene: *mut BfScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Number of beams in the scene's codebook; 0 for a null handle.
///
/// # Safety
/// `scene` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bf_scene_beam_count(scene: *const BfScene) -> usize {
    scene.as_ref().map_or(0, |s| s.codebook.len())
}

/// Runs an exhaustive sweep at `(x, y)` and reports the strongest beam and
/// its SNR in dB.
///
/// # Safety
/// `scene` must be a live handle; `out_beam` and `out_snr_db` must be valid
/// or null (null outputs are skipped).
#[no_mangle]
pub unsafe extern "C" fn bf_scene_best_beam(
    scene: *const BfScene,
    x: f64,
    y: f64,
    out_beam: *mut u32,
    out_snr_db: *mut f64,
) -> BfStatus {
    guard(|| {
        let Some(s) = scene.as_ref() else {
            return fail(BfStatus::BfNullArgument, "scene is null");
        };
        let pose = Pose::new(Vec2::new(x, y), 0.0);
        match sweep(&s.scene, pose, &s.codebook, &s.scene.radio, 0) {
            Ok(result) => {
                if !out_beam.is_null() {
                    *out_beam = result.best_index as u32;
                }
                if !out_snr_db.is_null() {
                    *out_snr_db = result.snr_db[result.best_index];
                }
                BfStatus::BfOk
            }
            Err(e) => fail(BfStatus::BfBadInput, e.to_string()),
        }
    })
}

/// Loads a dataset file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_dataset_load(path: *const c_char, out: *mut *mut BfDataset) -> BfStatus {
    guard(|| {
        if out.is_null() {
            return fail(BfStatus::BfNullArgument, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_dataset(path) {
            Ok(dataset) => {
                *out = Box::into_raw(Box::new(BfDataset { dataset }));
                BfStatus::BfOk
            }
            Err(e) => fail(BfStatus::BfBadInput, format!("{}: {e}", path.display())),
        }
    })
}

/// Frees a dataset handle. Null is a no-op.
///
/// # Safety
/// `dataset` must come from `bf_dataset_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn bf_dataset_free(dataset: *mut BfDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Total aligned samples; 0 for a null handle.
///
/// # Safety
/// `dataset` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bf_dataset_len(dataset: *const BfDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.dataset.samples.len())
}

/// Samples in the chronological training prefix; 0 for a null handle.
///
/// # Safety
/// `dataset` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bf_dataset_train_count(dataset: *const BfDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.dataset.train_count)
}

/// True label of sample `index`; the beam count for out-of-range queries.
///
/// # Safety
/// `dataset` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bf_dataset_label(dataset: *const BfDataset, index: usize) -> usize {
    match dataset.as_ref() {
        Some(d) => d
            .dataset
            .samples
            .get(index)
            .map_or(d.dataset.beam_count, |s| s.label),
        None => 0,
    }
}

/// Rebuilds the model stored in a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bf_model_load(path: *const c_char, out: *mut *mut BfModel) -> BfStatus {
    guard(|| {
        if out.is_null() {
            return fail(BfStatus::BfNullArgument, "out is null");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        let ckpt = match load_checkpoint(path) {
            Ok(c) => c,
            Err(e) => return fail(BfStatus::BfBadInput, format!("{}: {e}", path.display())),
        };
        let meta: CheckpointMeta = match toml_meta(&ckpt.meta) {
            Ok(m) => m,
            Err(e) => return fail(BfStatus::BfBadInput, e),
        };
        let mut model = match FusionModel::new(
            meta.fusion.clone(),
            meta.camera_h,
            meta.camera_w,
            meta.lidar_len,
            meta.classes,
        ) {
            Ok(m) => m,
            Err(e) => return fail(BfStatus::BfBadInput, e.to_string()),
        };
        if let Err(e) = restore_params(&mut model, &ckpt) {
            return fail(BfStatus::BfBadInput, e.to_string());
        }
        *out = Box::into_raw(Box::new(BfModel { model, meta }));
        BfStatus::BfOk
    })
}

fn toml_meta(text: &str) -> Result<CheckpointMeta, String> {
    beamfuse::experiment::parse_checkpoint_meta(text).map_err(|e| e.to_string())
}

/// Frees a model handle. Null is a no-op.
///
/// # Safety
/// `model` must come from `bf_model_load` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn bf_model_free(model: *mut BfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Output width of a prediction; 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bf_model_classes(model: *const BfModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.classes())
}

/// Anchors consumed per prediction; 0 for a null handle.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bf_model_window(model: *const BfModel) -> usize {
    model.as_ref().map_or(0, |m| m.meta.fusion.window)
}

/// Scores the window of samples ending at `anchor` (so `anchor` must be at
/// least `window - 1`) and writes a probability per beam into `probs`,
/// which must hold `bf_model_classes` values.
///
/// # Safety
/// `model` and `dataset` must be live handles; `probs` must point to at
/// least `probs_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bf_model_predict(
    model: *mut BfModel,
    dataset: *const BfDataset,
    anchor: usize,
    probs: *mut f64,
    probs_len: usize,
) -> BfStatus {
    guard(|| {
        let Some(m) = model.as_mut() else {
            return fail(BfStatus::BfNullArgument, "model is null");
        };
        let Some(d) = dataset.as_ref() else {
            return fail(BfStatus::BfNullArgument, "dataset is null");
        };
        if probs.is_null() {
            return fail(BfStatus::BfNullArgument, "probs is null");
        }
        if probs_len < m.model.classes() {
            return fail(
                BfStatus::BfBadInput,
                format!(
                    "probs holds {probs_len} values, model emits {}",
                    m.model.classes()
                ),
            );
        }
        let window = m.meta.fusion.window;
        let samples = &d.dataset.samples;
        if anchor + 1 < window || anchor >= samples.len() {
            return fail(
                BfStatus::BfBadInput,
                format!(
                    "anchor {anchor} out of range for window {window} over {} samples",
                    samples.len()
                ),
            );
        }
        let slice = &samples[anchor + 1 - window..=anchor];
        let windows = build_windows(slice, d.dataset.lidar_max_range, m.model.config(), 1);
        let Some(w) = windows.first() else {
            return fail(BfStatus::BfBadInput, "window construction failed");
        };
        match m.model.predict(w) {
            Ok(p) => {
                std::ptr::copy_nonoverlapping(p.as_ptr(), probs, p.len());
                BfStatus::BfOk
            }
            Err(e) => fail(BfStatus::BfBadInput, e.to_string()),
        }
    })
}

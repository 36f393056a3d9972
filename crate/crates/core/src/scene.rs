//! Static propagation world: bounds, reflective walls, lossy or opaque
//! blockers, the base-station pose, and the radio/beam parameters that ride
//! along in the scene description file.

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{ConvexPolygon, Rect, Segment, Vec2};

/// Position plus heading, the pose currency for the vehicle and the BS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec2,
    /// World-frame heading in radians, [0, 2pi).
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Vec2, heading: f64) -> Self {
        Pose {
            position,
            heading: crate::geometry::wrap_to_2pi(heading),
        }
    }
}

/// Reflective line segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Wall {
    pub segment: Segment,
    pub reflection_loss_db: f64,
}

/// Convex obstacle. `penetration_loss_db = None` means opaque: paths through
/// it are dropped instead of attenuated.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocker {
    pub polygon: ConvexPolygon,
    pub penetration_loss_db: Option<f64>,
}

impl Blocker {
    pub fn is_opaque(&self) -> bool {
        self.penetration_loss_db.is_none()
    }
}

/// Carrier and link-budget constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    pub carrier_hz: f64,
    pub tx_power_dbm: f64,
    pub noise_floor_dbm: f64,
    /// SNR assigned to every beam when no propagation path exists. Finite so
    /// downstream normalization stays defined.
    pub sentinel_snr_db: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        RadioParams {
            carrier_hz: 60e9,
            tx_power_dbm: 10.0,
            noise_floor_dbm: -85.0,
            sentinel_snr_db: -40.0,
        }
    }
}

/// Codebook construction parameters (`beams.*` keys of the scene file).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamParams {
    pub count: usize,
    pub mainlobe_deg: f64,
    pub gain_db: f64,
    pub sidelobe_db: f64,
}

impl Default for BeamParams {
    fn default() -> Self {
        BeamParams {
            count: 36,
            mainlobe_deg: 10.0,
            gain_db: 15.0,
            sidelobe_db: -10.0,
        }
    }
}

/// The propagation world. Immutable after load; all propagation and sensor
/// rendering borrow it concurrently.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub bounds: Rect,
    pub walls: Vec<Wall>,
    pub blockers: Vec<Blocker>,
    pub bs_pose: Pose,
    pub radio: RadioParams,
    pub beams: BeamParams,
}

#[derive(Debug, Error)]
pub enum SceneError {
    /// Scene file could not be read.
    #[error("io error reading scene: {0}")]
    Io(#[from] std::io::Error),
    /// Scene file is not valid TOML or misses required keys.
    #[error("scene parse error: {0}")]
    Parse(String),
    /// Bounds rectangle has non-positive width or height.
    #[error("bounds are degenerate: width and height must be positive")]
    DegenerateBounds,
    /// A wall or blocker vertex lies outside the bounds.
    #[error("{0} extends outside scene bounds")]
    OutOfBounds(String),
    /// Reflection or penetration loss below zero.
    #[error("{0} has negative loss")]
    NegativeLoss(String),
    /// Blocker vertex list is not a convex polygon.
    #[error("blocker {0} is not a convex polygon")]
    BadBlocker(usize),
    /// BS must sit inside bounds and outside every blocker.
    #[error("bs pose is outside bounds or inside a blocker")]
    BadBsPose,
    /// Codebook parameters violate their contract.
    #[error("invalid beam parameters: {0}")]
    BadBeams(String),
    /// Radio constants violate their contract.
    #[error("invalid radio parameters: {0}")]
    BadRadio(String),
}

impl Scene {
    /// Loads and validates a scene description file.
    pub fn load(path: &Path) -> Result<Scene, SceneError> {
        let text = std::fs::read_to_string(path)?;
        Scene::from_toml_str(&text)
    }

    /// Parses the scene description document. See `docs` in the README for
    /// the schema; angles in the file are degrees, lengths meters.
    pub fn from_toml_str(text: &str) -> Result<Scene, SceneError> {
        let raw: RawScene = toml::from_str(text).map_err(|e| SceneError::Parse(e.to_string()))?;
        raw.build()
    }

    /// Checks every documented invariant; called by the loaders.
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.bounds.width() <= 0.0 || self.bounds.height() <= 0.0 {
            return Err(SceneError::DegenerateBounds);
        }
        for (i, w) in self.walls.iter().enumerate() {
            if !self.bounds.contains(w.segment.a) || !self.bounds.contains(w.segment.b) {
                return Err(SceneError::OutOfBounds(format!("wall {i}")));
            }
            if w.reflection_loss_db < 0.0 {
                return Err(SceneError::NegativeLoss(format!("wall {i}")));
            }
            if w.segment.length() <= crate::geometry::GEOM_EPS {
                return Err(SceneError::OutOfBounds(format!("wall {i} is degenerate")));
            }
        }
        for (i, b) in self.blockers.iter().enumerate() {
            for v in b.polygon.vertices() {
                if !self.bounds.contains(*v) {
                    return Err(SceneError::OutOfBounds(format!("blocker {i}")));
                }
            }
            if let Some(loss) = b.penetration_loss_db {
                if loss < 0.0 {
                    return Err(SceneError::NegativeLoss(format!("blocker {i}")));
                }
            }
        }
        if !self.position_clear(self.bs_pose.position) {
            return Err(SceneError::BadBsPose);
        }
        if self.beams.count < 2 {
            return Err(SceneError::BadBeams("count must be at least 2".into()));
        }
        if self.beams.mainlobe_deg <= 0.0 {
            return Err(SceneError::BadBeams("mainlobe width must be positive".into()));
        }
        if self.beams.gain_db <= self.beams.sidelobe_db {
            return Err(SceneError::BadBeams(
                "mainlobe gain must exceed sidelobe floor".into(),
            ));
        }
        if self.radio.carrier_hz <= 0.0 {
            return Err(SceneError::BadRadio("carrier must be positive".into()));
        }
        if !self.radio.sentinel_snr_db.is_finite() {
            return Err(SceneError::BadRadio("sentinel SNR must be finite".into()));
        }
        Ok(())
    }

    /// Inside bounds and not inside (or on the boundary of) any blocker.
    pub fn position_clear(&self, p: Vec2) -> bool {
        self.bounds.contains(p) && !self.blockers.iter().any(|b| b.polygon.contains(p))
    }
}

// Raw serde mirror of the file schema. Kept separate so the runtime types
// can hold validated geometry instead of bare arrays.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScene {
    bounds: RawBounds,
    bs: RawBs,
    #[serde(default)]
    radio: RawRadio,
    #[serde(default)]
    beams: RawBeams,
    #[serde(default)]
    walls: Vec<RawWall>,
    #[serde(default)]
    blockers: Vec<RawBlocker>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    min: [f64; 2],
    max: [f64; 2],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBs {
    position: [f64; 2],
    #[serde(default)]
    facing_deg: f64,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRadio {
    carrier_hz: Option<f64>,
    tx_power_dbm: Option<f64>,
    noise_floor_dbm: Option<f64>,
    sentinel_snr_db: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBeams {
    count: Option<usize>,
    mainlobe_deg: Option<f64>,
    gain_db: Option<f64>,
    sidelobe_db: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWall {
    a: [f64; 2],
    b: [f64; 2],
    #[serde(default = "default_reflection_loss")]
    reflection_loss_db: f64,
}

fn default_reflection_loss() -> f64 {
    10.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlocker {
    vertices: Vec<[f64; 2]>,
    /// Omitted means opaque.
    penetration_loss_db: Option<f64>,
}

impl RawScene {
    fn build(self) -> Result<Scene, SceneError> {
        let defaults_radio = RadioParams::default();
        let defaults_beams = BeamParams::default();
        let mut blockers = Vec::with_capacity(self.blockers.len());
        for (i, rb) in self.blockers.into_iter().enumerate() {
            let verts: Vec<Vec2> = rb.vertices.iter().map(|v| Vec2::new(v[0], v[1])).collect();
            let polygon = ConvexPolygon::new(verts).ok_or(SceneError::BadBlocker(i))?;
            blockers.push(Blocker {
                polygon,
                penetration_loss_db: rb.penetration_loss_db,
            });
        }
        let scene = Scene {
            bounds: Rect::new(
                Vec2::new(self.bounds.min[0], self.bounds.min[1]),
                Vec2::new(self.bounds.max[0], self.bounds.max[1]),
            ),
            walls: self
                .walls
                .into_iter()
                .map(|w| Wall {
                    segment: Segment::new(Vec2::new(w.a[0], w.a[1]), Vec2::new(w.b[0], w.b[1])),
                    reflection_loss_db: w.reflection_loss_db,
                })
                .collect(),
            blockers,
            bs_pose: Pose::new(
                Vec2::new(self.bs.position[0], self.bs.position[1]),
                self.bs.facing_deg.to_radians(),
            ),
            radio: RadioParams {
                carrier_hz: self.radio.carrier_hz.unwrap_or(defaults_radio.carrier_hz),
                tx_power_dbm: self
                    .radio
                    .tx_power_dbm
                    .unwrap_or(defaults_radio.tx_power_dbm),
                noise_floor_dbm: self
                    .radio
                    .noise_floor_dbm
                    .unwrap_or(defaults_radio.noise_floor_dbm),
                sentinel_snr_db: self
                    .radio
                    .sentinel_snr_db
                    .unwrap_or(defaults_radio.sentinel_snr_db),
            },
            beams: BeamParams {
                count: self.beams.count.unwrap_or(defaults_beams.count),
                mainlobe_deg: self
                    .beams
                    .mainlobe_deg
                    .unwrap_or(defaults_beams.mainlobe_deg),
                gain_db: self.beams.gain_db.unwrap_or(defaults_beams.gain_db),
                sidelobe_db: self
                    .beams
                    .sidelobe_db
                    .unwrap_or(defaults_beams.sidelobe_db),
            },
        };
        scene.validate()?;
        Ok(scene)
    }
}

/// An empty 100x100 world with the BS at the center, used by tests and the
/// free-space demo config.
pub fn free_space_scene() -> Scene {
    Scene {
        bounds: Rect::new(Vec2::new(-50.0, -50.0), Vec2::new(50.0, 50.0)),
        walls: Vec::new(),
        blockers: Vec::new(),
        bs_pose: Pose::new(Vec2::ZERO, 0.0),
        radio: RadioParams::default(),
        beams: BeamParams::default(),
    }
}

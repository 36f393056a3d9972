//! Beam codebook and the simplified ray-traced channel: free-space path loss
//! plus fixed per-interaction losses over line-of-sight, single specular
//! reflection, and lossy penetration paths.
//!
//! Walls act as mirrors only; a ray crossing a wall segment is not
//! attenuated. Blockers attenuate (or, when opaque, drop) every path segment
//! that crosses them, including reflection legs.

use thiserror::Error;

use crate::geometry::{angular_distance, wrap_to_2pi, Segment, Vec2, GEOM_EPS};
use crate::scene::{BeamParams, Pose, RadioParams, Scene};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum PropagationError {
    /// Codebook parameters out of range.
    #[error("invalid codebook: {0}")]
    BadCodebook(String),
    /// Endpoint outside the scene bounds.
    #[error("path endpoint outside scene bounds")]
    EndpointOutOfBounds,
    /// Only zero or one reflection is modeled.
    #[error("unsupported reflection order {0}, max is 1")]
    UnsupportedReflectionOrder(usize),
    /// Path gain is undefined for zero-length paths.
    #[error("zero length path")]
    ZeroLengthPath,
    /// Sweeps require the UE clear of blockers and inside bounds.
    #[error("ue pose is outside bounds or inside a blocker")]
    InvalidPose,
}

/// One codebook entry. `center` is relative to the UE heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beam {
    pub center: f64,
    pub mainlobe_width: f64,
    pub gain_db: f64,
    pub sidelobe_db: f64,
}

impl Beam {
    /// Two-level pattern: mainlobe gain inside half the width, sidelobe floor
    /// everywhere else.
    pub fn gain_toward(&self, relative_bearing: f64) -> f64 {
        if angular_distance(relative_bearing, self.center) <= self.mainlobe_width / 2.0 {
            self.gain_db
        } else {
            self.sidelobe_db
        }
    }
}

/// Ordered set of beams covering [0, 2pi) uniformly.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamCodebook {
    beams: Vec<Beam>,
}

impl BeamCodebook {
    /// Builds `n_beams` uniformly spaced entries, beam k centered at
    /// 2pi*k/n_beams.
    pub fn build(
        n_beams: usize,
        mainlobe_width: f64,
        gain_db: f64,
        sidelobe_db: f64,
    ) -> Result<BeamCodebook, PropagationError> {
        if n_beams < 2 {
            return Err(PropagationError::BadCodebook(
                "need at least 2 beams".into(),
            ));
        }
        if !(mainlobe_width > 0.0) {
            return Err(PropagationError::BadCodebook(
                "mainlobe width must be positive".into(),
            ));
        }
        if !(gain_db > sidelobe_db) {
            return Err(PropagationError::BadCodebook(
                "mainlobe gain must exceed sidelobe floor".into(),
            ));
        }
        let spacing = std::f64::consts::TAU / n_beams as f64;
        let beams = (0..n_beams)
            .map(|k| Beam {
                center: spacing * k as f64,
                mainlobe_width,
                gain_db,
                sidelobe_db,
            })
            .collect();
        Ok(BeamCodebook { beams })
    }

    pub fn from_params(p: &BeamParams) -> Result<BeamCodebook, PropagationError> {
        BeamCodebook::build(
            p.count,
            p.mainlobe_deg.to_radians(),
            p.gain_db,
            p.sidelobe_db,
        )
    }

    pub fn len(&self) -> usize {
        self.beams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beams.is_empty()
    }

    pub fn beams(&self) -> &[Beam] {
        &self.beams
    }

    pub fn spacing(&self) -> f64 {
        std::f64::consts::TAU / self.beams.len() as f64
    }

    /// Index of the beam whose center is nearest the given UE-relative
    /// bearing; lowest index wins exact midpoints.
    pub fn nearest_beam(&self, relative_bearing: f64) -> usize {
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for (k, b) in self.beams.iter().enumerate() {
            let d = angular_distance(relative_bearing, b.center);
            if d < best_dist - GEOM_EPS {
                best_dist = d;
                best = k;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    /// Direct, nothing crossed.
    LineOfSight,
    /// Direct through one or more lossy blockers.
    Penetration,
    /// One specular bounce off a wall.
    SingleReflection,
}

/// One propagation path from TX to RX.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationPath {
    /// TX, optional specular point, RX.
    pub vertices: Vec<Vec2>,
    pub kind: PathKind,
    pub total_length: f64,
    /// Reflection plus penetration losses along the path.
    pub extra_loss_db: f64,
}

impl PropagationPath {
    /// World bearing of the first leg out of the TX.
    pub fn departure_bearing(&self) -> f64 {
        self.vertices[1].sub(self.vertices[0]).bearing()
    }
}

/// Sum of penetration losses over blockers crossed by `seg`; None when an
/// opaque blocker is crossed.
fn penetration_loss(scene: &Scene, seg: Segment) -> Option<f64> {
    let mut loss = 0.0;
    for b in &scene.blockers {
        if b.polygon.clip_segment(seg).is_some() {
            match b.penetration_loss_db {
                Some(db) => loss += db,
                None => return None,
            }
        }
    }
    Some(loss)
}

/// Enumerates propagation paths from `tx` to `rx`: the direct path (when not
/// blocked by an opaque blocker) followed by one mirror-image path per wall
/// in scene order. `max_reflections` must be 0 or 1.
pub fn trace_paths(
    scene: &Scene,
    tx: Vec2,
    rx: Vec2,
    max_reflections: usize,
) -> Result<Vec<PropagationPath>, PropagationError> {
    if max_reflections > 1 {
        return Err(PropagationError::UnsupportedReflectionOrder(
            max_reflections,
        ));
    }
    if !scene.bounds.contains(tx) || !scene.bounds.contains(rx) {
        return Err(PropagationError::EndpointOutOfBounds);
    }
    let mut paths = Vec::new();
    let direct = Segment::new(tx, rx);
    if direct.length() > GEOM_EPS {
        if let Some(loss) = penetration_loss(scene, direct) {
            paths.push(PropagationPath {
                vertices: vec![tx, rx],
                kind: if loss > 0.0 {
                    PathKind::Penetration
                } else {
                    PathKind::LineOfSight
                },
                total_length: direct.length(),
                extra_loss_db: loss,
            });
        }
    }
    if max_reflections == 1 {
        for wall in &scene.walls {
            // Specular reflection needs both endpoints strictly on one side.
            let side_tx = wall.segment.side_of(tx);
            let side_rx = wall.segment.side_of(rx);
            if side_tx.abs() <= GEOM_EPS || side_rx.abs() <= GEOM_EPS || side_tx * side_rx < 0.0 {
                continue;
            }
            let mirrored = wall.segment.mirror(rx);
            let to_mirror = Segment::new(tx, mirrored);
            let Some((_, u)) = crate::geometry::segment_intersection(to_mirror, wall.segment)
            else {
                continue;
            };
            let specular = wall.segment.point_at(u.clamp(0.0, 1.0));
            let leg_in = Segment::new(tx, specular);
            let leg_out = Segment::new(specular, rx);
            if leg_in.length() <= GEOM_EPS || leg_out.length() <= GEOM_EPS {
                continue;
            }
            let (Some(loss_in), Some(loss_out)) =
                (penetration_loss(scene, leg_in), penetration_loss(scene, leg_out))
            else {
                continue;
            };
            paths.push(PropagationPath {
                vertices: vec![tx, specular, rx],
                kind: PathKind::SingleReflection,
                total_length: leg_in.length() + leg_out.length(),
                extra_loss_db: wall.reflection_loss_db + loss_in + loss_out,
            });
        }
    }
    Ok(paths)
}

/// Free-space path loss with the path's accumulated interaction losses:
/// -20*log10(4*pi*d*f/c) - extra_loss.
pub fn path_gain_db(path: &PropagationPath, carrier_hz: f64) -> Result<f64, PropagationError> {
    if path.total_length <= 0.0 {
        return Err(PropagationError::ZeroLengthPath);
    }
    let fspl =
        20.0 * (4.0 * std::f64::consts::PI * path.total_length * carrier_hz / SPEED_OF_LIGHT)
            .log10();
    Ok(-fspl - path.extra_loss_db)
}

/// Per-beam SNR plus the argmax label.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamSweep {
    pub timestamp_ns: u64,
    pub snr_db: Vec<f64>,
    pub best_index: usize,
}

/// Smallest index attaining the maximum. Defined for non-empty slices.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Evaluates the exhaustive sweep at one UE pose: for every beam, the beam
/// pattern gain toward each path's departure bearing plus the path gain,
/// power-summed over paths, minus the noise floor. Beams see the sentinel
/// floor when no path exists.
pub fn sweep(
    scene: &Scene,
    ue_pose: Pose,
    codebook: &BeamCodebook,
    radio: &RadioParams,
    timestamp_ns: u64,
) -> Result<BeamSweep, PropagationError> {
    if !scene.position_clear(ue_pose.position) {
        return Err(PropagationError::InvalidPose);
    }
    let paths = trace_paths(scene, ue_pose.position, scene.bs_pose.position, 1)?;
    let n = codebook.len();
    let mut snr_db = vec![radio.sentinel_snr_db; n];
    if !paths.is_empty() {
        let gains: Vec<f64> = paths
            .iter()
            .map(|p| path_gain_db(p, radio.carrier_hz))
            .collect::<Result<_, _>>()?;
        let bearings: Vec<f64> = paths
            .iter()
            .map(|p| wrap_to_2pi(p.departure_bearing() - ue_pose.heading))
            .collect();
        for (k, beam) in codebook.beams().iter().enumerate() {
            let mut acc_mw = 0.0;
            for (i, _) in paths.iter().enumerate() {
                let rx_dbm = radio.tx_power_dbm + beam.gain_toward(bearings[i]) + gains[i];
                acc_mw += 10f64.powf(rx_dbm / 10.0);
            }
            snr_db[k] = 10.0 * acc_mw.log10() - radio.noise_floor_dbm;
        }
    }
    let best_index = argmax_lowest(&snr_db);
    Ok(BeamSweep {
        timestamp_ns,
        snr_db,
        best_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{free_space_scene, Blocker, Wall};
    use crate::geometry::ConvexPolygon;

    // Frozen: -20*log10(4*pi*1*60e9/299792458).
    const FSPL_1M_60GHZ: f64 = -68.010_808_229_556_25;

    fn beams36() -> BeamCodebook {
        BeamCodebook::build(36, 10f64.to_radians(), 15.0, -10.0).unwrap()
    }

    #[test]
    fn codebook_centers_are_uniform() {
        let cb = beams36();
        assert_eq!(cb.len(), 36);
        assert_eq!(cb.beams()[0].center, 0.0);
        assert!((cb.beams()[9].center - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        for (k, b) in cb.beams().iter().enumerate() {
            assert!((b.center - cb.spacing() * k as f64).abs() < 1e-12);
        }
        assert!((cb.spacing() - std::f64::consts::TAU / 36.0).abs() < 1e-15);

        let two = BeamCodebook::build(2, std::f64::consts::FRAC_PI_2, 10.0, 0.0).unwrap();
        assert_eq!(two.beams()[0].center, 0.0);
        assert!((two.beams()[1].center - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn codebook_rejects_bad_parameters() {
        assert!(BeamCodebook::build(1, 0.1, 10.0, 0.0).is_err());
        assert!(BeamCodebook::build(36, 0.0, 10.0, 0.0).is_err());
        assert!(BeamCodebook::build(36, 0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn los_path_in_empty_scene() {
        let mut scene = free_space_scene();
        scene.bs_pose.position = Vec2::new(3.0, 4.0);
        let paths = trace_paths(&scene, Vec2::ZERO, Vec2::new(3.0, 4.0), 0).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].kind, PathKind::LineOfSight);
        assert_eq!(paths[0].vertices.len(), 2);
        assert!((paths[0].total_length - 5.0).abs() < 1e-12);
        assert_eq!(paths[0].extra_loss_db, 0.0);
    }

    #[test]
    fn mirror_path_off_vertical_wall() {
        let mut scene = free_space_scene();
        scene.walls.push(Wall {
            segment: Segment::new(Vec2::new(5.0, -10.0), Vec2::new(5.0, 10.0)),
            reflection_loss_db: 10.0,
        });
        let paths = trace_paths(&scene, Vec2::ZERO, Vec2::new(0.0, 2.0), 1).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].kind, PathKind::LineOfSight);
        assert!((paths[0].total_length - 2.0).abs() < 1e-12);
        assert_eq!(paths[1].kind, PathKind::SingleReflection);
        assert_eq!(paths[1].vertices.len(), 3);
        // Mirror image of (0,2) is (10,2); |(0,0)->(10,2)| = sqrt(104).
        assert!((paths[1].total_length - 10.198_039_027_185_569).abs() < 1e-9);
        assert!((paths[1].vertices[1].x - 5.0).abs() < 1e-9);
        assert_eq!(paths[1].extra_loss_db, 10.0);
        // Length decomposes into its legs.
        let legs = paths[1].vertices[0].dist(paths[1].vertices[1])
            + paths[1].vertices[1].dist(paths[1].vertices[2]);
        assert!((paths[1].total_length - legs).abs() < 1e-9);
    }

    #[test]
    fn opaque_blocker_kills_direct_path() {
        let mut scene = free_space_scene();
        scene.blockers.push(Blocker {
            polygon: ConvexPolygon::new(vec![
                Vec2::new(1.0, -1.0),
                Vec2::new(2.0, -1.0),
                Vec2::new(2.0, 1.0),
                Vec2::new(1.0, 1.0),
            ])
            .unwrap(),
            penetration_loss_db: None,
        });
        let paths = trace_paths(&scene, Vec2::ZERO, Vec2::new(3.0, 0.0), 0).unwrap();
        assert!(paths.is_empty());
    }

    #[test]
    fn lossy_blocker_attenuates_direct_path() {
        let mut scene = free_space_scene();
        scene.blockers.push(Blocker {
            polygon: ConvexPolygon::new(vec![
                Vec2::new(1.0, -1.0),
                Vec2::new(2.0, -1.0),
                Vec2::new(2.0, 1.0),
                Vec2::new(1.0, 1.0),
            ])
            .unwrap(),
            penetration_loss_db: Some(25.0),
        });
        let paths = trace_paths(&scene, Vec2::ZERO, Vec2::new(3.0, 0.0), 0).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].kind, PathKind::Penetration);
        assert_eq!(paths[0].extra_loss_db, 25.0);
    }

    #[test]
    fn rejects_unsupported_reflection_order() {
        let scene = free_space_scene();
        assert!(matches!(
            trace_paths(&scene, Vec2::ZERO, Vec2::new(1.0, 0.0), 2),
            Err(PropagationError::UnsupportedReflectionOrder(2))
        ));
    }

    #[test]
    fn path_gain_matches_frozen_values() {
        let path = PropagationPath {
            vertices: vec![Vec2::ZERO, Vec2::new(1.0, 0.0)],
            kind: PathKind::LineOfSight,
            total_length: 1.0,
            extra_loss_db: 0.0,
        };
        let g1 = path_gain_db(&path, 60e9).unwrap();
        assert!((g1 - FSPL_1M_60GHZ).abs() < 1e-9);

        let double = PropagationPath {
            total_length: 2.0,
            ..path.clone()
        };
        let g2 = path_gain_db(&double, 60e9).unwrap();
        // Doubling the distance costs exactly 20*log10(2) dB.
        assert!((g1 - g2 - 6.020_599_913_279_624).abs() < 1e-9);

        let lossy = PropagationPath {
            extra_loss_db: 10.0,
            ..path.clone()
        };
        let g3 = path_gain_db(&lossy, 60e9).unwrap();
        assert!((g3 - (FSPL_1M_60GHZ - 10.0)).abs() < 1e-9);

        let degenerate = PropagationPath {
            total_length: 0.0,
            ..path
        };
        assert!(matches!(
            path_gain_db(&degenerate, 60e9),
            Err(PropagationError::ZeroLengthPath)
        ));
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_lowest(&[5.0; 36]), 0);
        assert_eq!(argmax_lowest(&[-1.0, -0.5]), 1);
    }

    #[test]
    fn free_space_sweep_points_at_bs() {
        let scene = free_space_scene();
        let cb = beams36();
        let radio = RadioParams::default();
        // BS due east of the UE.
        let pose = Pose::new(Vec2::new(-10.0, 0.0), 0.0);
        let s = sweep(&scene, pose, &cb, &radio, 7).unwrap();
        assert_eq!(s.best_index, 0);
        assert_eq!(s.timestamp_ns, 7);
        assert_eq!(s.snr_db.len(), 36);
        // Rotating the vehicle a quarter turn moves the relative bearing to
        // 3pi/2, beam 27.
        let pose = Pose::new(Vec2::new(-10.0, 0.0), std::f64::consts::FRAC_PI_2);
        let s = sweep(&scene, pose, &cb, &radio, 8).unwrap();
        assert_eq!(s.best_index, 27);
    }

    #[test]
    fn sweep_rejects_pose_inside_blocker() {
        let mut scene = free_space_scene();
        scene.blockers.push(Blocker {
            polygon: ConvexPolygon::new(vec![
                Vec2::new(-1.0, -1.0),
                Vec2::new(1.0, -1.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(-1.0, 1.0),
            ])
            .unwrap(),
            penetration_loss_db: Some(3.0),
        });
        scene.bs_pose.position = Vec2::new(10.0, 10.0);
        let pose = Pose::new(Vec2::ZERO, 0.0);
        assert!(matches!(
            sweep(&scene, pose, &beams36(), &RadioParams::default(), 0),
            Err(PropagationError::InvalidPose)
        ));
    }

    #[test]
    fn sentinel_fills_pathless_sweep() {
        let mut scene = free_space_scene();
        scene.blockers.push(Blocker {
            polygon: ConvexPolygon::new(vec![
                Vec2::new(4.0, -2.0),
                Vec2::new(6.0, -2.0),
                Vec2::new(6.0, 2.0),
                Vec2::new(4.0, 2.0),
            ])
            .unwrap(),
            penetration_loss_db: None,
        });
        scene.bs_pose.position = Vec2::new(10.0, 0.0);
        let radio = RadioParams::default();
        let s = sweep(&scene, Pose::new(Vec2::ZERO, 0.0), &beams36(), &radio, 0).unwrap();
        assert!(s.snr_db.iter().all(|&v| v == radio.sentinel_snr_db));
        assert_eq!(s.best_index, 0);
    }

    // Blocked LoS, one reflection off the north wall: the label must match an
    // independent brute-force enumeration of every beam x path combination.
    #[test]
    fn nlos_sweep_matches_brute_force() {
        let mut scene = free_space_scene();
        scene.bounds = crate::geometry::Rect::new(Vec2::new(0.0, 0.0), Vec2::new(10.0, 6.0));
        scene.walls.push(Wall {
            segment: Segment::new(Vec2::new(0.0, 6.0), Vec2::new(10.0, 6.0)),
            reflection_loss_db: 10.0,
        });
        scene.blockers.push(Blocker {
            polygon: ConvexPolygon::new(vec![
                Vec2::new(4.5, 1.5),
                Vec2::new(5.5, 1.5),
                Vec2::new(5.5, 2.5),
                Vec2::new(4.5, 2.5),
            ])
            .unwrap(),
            penetration_loss_db: None,
        });
        scene.bs_pose.position = Vec2::new(8.0, 2.0);
        let ue = Pose::new(Vec2::new(2.0, 2.0), 0.0);
        let cb = beams36();
        let radio = RadioParams::default();
        let s = sweep(&scene, ue, &cb, &radio, 0).unwrap();

        let paths = trace_paths(&scene, ue.position, scene.bs_pose.position, 1).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].kind, PathKind::SingleReflection);

        // Independent recomputation with explicit loops and the raw formula.
        let mut expect = vec![radio.sentinel_snr_db; 36];
        for k in 0..36 {
            let center = std::f64::consts::TAU * k as f64 / 36.0;
            let mut acc = 0.0;
            for p in &paths {
                let d = p.total_length;
                let fspl = -20.0
                    * (4.0 * std::f64::consts::PI * d * radio.carrier_hz / SPEED_OF_LIGHT).log10();
                let bearing = (p.vertices[1].y - p.vertices[0].y)
                    .atan2(p.vertices[1].x - p.vertices[0].x);
                let mut off = bearing - ue.heading - center;
                while off > std::f64::consts::PI {
                    off -= std::f64::consts::TAU;
                }
                while off <= -std::f64::consts::PI {
                    off += std::f64::consts::TAU;
                }
                let g = if off.abs() <= 10f64.to_radians() / 2.0 {
                    15.0
                } else {
                    -10.0
                };
                acc += 10f64.powf((radio.tx_power_dbm + g + fspl - p.extra_loss_db) / 10.0);
            }
            expect[k] = 10.0 * acc.log10() - radio.noise_floor_dbm;
        }
        let expect_best = argmax_lowest(&expect);
        assert_eq!(s.best_index, expect_best);
        for k in 0..36 {
            assert!((s.snr_db[k] - expect[k]).abs() < 1e-9);
        }
        // Departure bearing atan2(4, 3) = 53.13 deg falls in beam 5's lobe.
        assert_eq!(s.best_index, 5);
    }

    #[test]
    fn lossy_blocker_never_raises_snr() {
        let mut scene = free_space_scene();
        scene.bs_pose.position = Vec2::new(10.0, 0.0);
        let cb = beams36();
        let radio = RadioParams::default();
        let pose = Pose::new(Vec2::ZERO, 0.3);
        let clear = sweep(&scene, pose, &cb, &radio, 0).unwrap();
        scene.blockers.push(Blocker {
            polygon: ConvexPolygon::new(vec![
                Vec2::new(4.0, -1.0),
                Vec2::new(6.0, -1.0),
                Vec2::new(6.0, 1.0),
                Vec2::new(4.0, 1.0),
            ])
            .unwrap(),
            penetration_loss_db: Some(25.0),
        });
        let blocked = sweep(&scene, pose, &cb, &radio, 0).unwrap();
        for k in 0..36 {
            assert!(blocked.snr_db[k] <= clear.snr_db[k] + 1e-12);
        }
    }

    #[test]
    fn reciprocity_of_path_lengths() {
        let mut scene = free_space_scene();
        scene.walls.push(Wall {
            segment: Segment::new(Vec2::new(-20.0, 8.0), Vec2::new(20.0, 8.0)),
            reflection_loss_db: 10.0,
        });
        scene.walls.push(Wall {
            segment: Segment::new(Vec2::new(12.0, -20.0), Vec2::new(12.0, 20.0)),
            reflection_loss_db: 10.0,
        });
        let a = Vec2::new(-3.0, 1.0);
        let b = Vec2::new(7.0, -2.0);
        let mut fwd: Vec<f64> = trace_paths(&scene, a, b, 1)
            .unwrap()
            .iter()
            .map(|p| p.total_length)
            .collect();
        let mut rev: Vec<f64> = trace_paths(&scene, b, a, 1)
            .unwrap()
            .iter()
            .map(|p| p.total_length)
            .collect();
        fwd.sort_by(f64::total_cmp);
        rev.sort_by(f64::total_cmp);
        assert_eq!(fwd.len(), rev.len());
        for (x, y) in fwd.iter().zip(rev.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn heading_rotation_shifts_best_beam() {
        let scene = free_space_scene();
        let cb = beams36();
        let radio = RadioParams::default();
        let pose = Pose::new(Vec2::new(-9.0, 3.0), 0.37);
        let base = sweep(&scene, pose, &cb, &radio, 0).unwrap();
        let rotated = Pose::new(pose.position, pose.heading + cb.spacing());
        let shifted = sweep(&scene, rotated, &cb, &radio, 0).unwrap();
        // Turning into the beam direction by one spacing moves the relative
        // bearing one slot down.
        assert_eq!(shifted.best_index, (base.best_index + 35) % 36);
    }
}

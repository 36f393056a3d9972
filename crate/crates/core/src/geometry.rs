//! 2-D vector and intersection primitives shared by propagation and sensor
//! rendering. All coordinates are meters, all angles radians.

use serde::{Deserialize, Serialize};

/// Parameter-space tolerance for intersection tests. Scene coordinates are
/// meter-scale, so 1e-9 is far below any physically meaningful separation.
pub const GEOM_EPS: f64 = 1e-9;

/// 2-D point or vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// Scalar cross product (z component of the 3-D cross).
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        self.sub(o).norm()
    }

    /// Counterclockwise rotation.
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Bearing of this vector in [0, 2pi).
    pub fn bearing(self) -> f64 {
        wrap_to_2pi(self.y.atan2(self.x))
    }

    pub fn from_angle(angle: f64) -> Vec2 {
        Vec2::new(angle.cos(), angle.sin())
    }
}

/// Wraps an angle to [0, 2pi).
pub fn wrap_to_2pi(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let r = a.rem_euclid(two_pi);
    // rem_euclid can return exactly two_pi when a is a tiny negative number.
    if r >= two_pi {
        0.0
    } else {
        r
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_to_pi(a: f64) -> f64 {
    let r = wrap_to_2pi(a);
    if r > std::f64::consts::PI {
        r - std::f64::consts::TAU
    } else {
        r
    }
}

/// Smallest absolute angular distance between two bearings.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    wrap_to_pi(a - b).abs()
}

/// Line segment between two points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Segment { a, b }
    }

    pub fn length(self) -> f64 {
        self.a.dist(self.b)
    }

    pub fn direction(self) -> Vec2 {
        self.b.sub(self.a)
    }

    /// Point at parameter t in [0, 1].
    pub fn point_at(self, t: f64) -> Vec2 {
        self.a.add(self.direction().scale(t))
    }

    /// Mirror image of `p` across the infinite line through this segment.
    pub fn mirror(self, p: Vec2) -> Vec2 {
        let d = self.direction();
        let len2 = d.dot(d);
        // Degenerate segments are rejected at scene validation; guard anyway.
        if len2 <= GEOM_EPS * GEOM_EPS {
            return p;
        }
        let t = p.sub(self.a).dot(d) / len2;
        let foot = self.a.add(d.scale(t));
        foot.add(foot.sub(p))
    }

    /// Signed area of the triangle (a, b, p); positive when p is left of a->b.
    pub fn side_of(self, p: Vec2) -> f64 {
        self.direction().cross(p.sub(self.a))
    }
}

/// Intersection of two segments p and q as parameters (t, u) along each,
/// both in [-GEOM_EPS, 1 + GEOM_EPS]. Collinear overlaps return None: every
/// caller treats exact edge-grazing as a non-event.
pub fn segment_intersection(p: Segment, q: Segment) -> Option<(f64, f64)> {
    let r = p.direction();
    let s = q.direction();
    let denom = r.cross(s);
    if denom.abs() <= GEOM_EPS {
        return None;
    }
    let qp = q.a.sub(p.a);
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    if (-GEOM_EPS..=1.0 + GEOM_EPS).contains(&t) && (-GEOM_EPS..=1.0 + GEOM_EPS).contains(&u) {
        Some((t, u))
    } else {
        None
    }
}

/// Distance along a ray (origin + t*dir, t > GEOM_EPS) to a segment, if hit.
/// `dir` need not be unit length; the returned t is in units of |dir|.
pub fn ray_segment_intersection(origin: Vec2, dir: Vec2, seg: Segment) -> Option<f64> {
    let s = seg.direction();
    let denom = dir.cross(s);
    if denom.abs() <= GEOM_EPS {
        return None;
    }
    let qp = seg.a.sub(origin);
    let t = qp.cross(s) / denom;
    let u = qp.cross(dir) / denom;
    if t > GEOM_EPS && (-GEOM_EPS..=1.0 + GEOM_EPS).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Convex polygon with counterclockwise vertex order (normalized on build).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
}

impl ConvexPolygon {
    /// Builds a polygon, normalizing orientation to counterclockwise.
    /// Returns None for fewer than 3 vertices, repeated vertices, or a
    /// non-convex cycle.
    pub fn new(mut vertices: Vec<Vec2>) -> Option<Self> {
        if vertices.len() < 3 {
            return None;
        }
        let area2: f64 = polygon_area2(&vertices);
        if area2.abs() <= GEOM_EPS {
            return None;
        }
        if area2 < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if a.dist(b) <= GEOM_EPS {
                return None;
            }
            // Strict left turns only: collinear runs and reflex corners are
            // both rejected.
            if b.sub(a).cross(c.sub(b)) <= GEOM_EPS {
                return None;
            }
        }
        Some(ConvexPolygon { vertices })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| Segment::new(self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// True when `p` is inside or on the boundary.
    pub fn contains(&self, p: Vec2) -> bool {
        self.edges().all(|e| e.side_of(p) >= -GEOM_EPS)
    }

    /// True when `p` is strictly inside (off the boundary by GEOM_EPS).
    pub fn contains_strict(&self, p: Vec2) -> bool {
        self.edges().all(|e| e.side_of(p) > GEOM_EPS)
    }

    /// Clips segment `seg` against the polygon. Returns the chord as
    /// parameters (t_in, t_out) along the segment when the overlap has
    /// positive length.
    pub fn clip_segment(&self, seg: Segment) -> Option<(f64, f64)> {
        let d = seg.direction();
        let mut t_in: f64 = 0.0;
        let mut t_out: f64 = 1.0;
        for e in self.edges() {
            // CCW edge: interior is the left side, outward normal points right.
            let normal = Vec2::new(e.direction().y, -e.direction().x);
            let denom = d.dot(normal);
            let num = e.a.sub(seg.a).dot(normal);
            if denom.abs() <= GEOM_EPS {
                // Parallel to this edge: outside the half-plane, or running
                // along the edge line itself, means no chord.
                if num <= GEOM_EPS {
                    return None;
                }
                continue;
            }
            let t = num / denom;
            if denom > 0.0 {
                // Exiting the half-plane.
                t_out = t_out.min(t);
            } else {
                t_in = t_in.max(t);
            }
            if t_in >= t_out {
                return None;
            }
        }
        // Tangential grazes carry no chord.
        if (t_out - t_in) * d.norm() <= GEOM_EPS {
            return None;
        }
        Some((t_in, t_out))
    }

    /// Length of the part of `seg` inside the polygon.
    pub fn chord_length(&self, seg: Segment) -> f64 {
        match self.clip_segment(seg) {
            Some((t_in, t_out)) => (t_out - t_in) * seg.length(),
            None => 0.0,
        }
    }
}

fn polygon_area2(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += vertices[i].cross(vertices[(i + 1) % n]);
    }
    acc
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Rect { min, max }
    }

    pub fn width(self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(self, p: Vec2) -> bool {
        p.x >= self.min.x - GEOM_EPS
            && p.x <= self.max.x + GEOM_EPS
            && p.y >= self.min.y - GEOM_EPS
            && p.y <= self.max.y + GEOM_EPS
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn vector_basics() {
        let v = Vec2::new(3.0, 4.0);
        assert!((v.norm() - 5.0).abs() < TOL);
        assert!((v.dot(Vec2::new(1.0, 0.0)) - 3.0).abs() < TOL);
        assert!((Vec2::new(1.0, 0.0).cross(Vec2::new(0.0, 1.0)) - 1.0).abs() < TOL);
        let r = Vec2::new(1.0, 0.0).rotate(std::f64::consts::FRAC_PI_2);
        assert!(r.x.abs() < TOL && (r.y - 1.0).abs() < TOL);
    }

    #[test]
    fn angle_wrapping() {
        assert!((wrap_to_2pi(-0.1) - (std::f64::consts::TAU - 0.1)).abs() < TOL);
        assert!((wrap_to_pi(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < TOL);
        assert!((angular_distance(0.1, std::f64::consts::TAU - 0.1) - 0.2).abs() < TOL);
        assert_eq!(wrap_to_2pi(0.0), 0.0);
    }

    #[test]
    fn segment_intersection_basics() {
        let p = Segment::new(Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0));
        let q = Segment::new(Vec2::new(1.0, -1.0), Vec2::new(1.0, 1.0));
        let (t, u) = segment_intersection(p, q).unwrap();
        assert!((t - 0.5).abs() < TOL && (u - 0.5).abs() < TOL);

        let miss = Segment::new(Vec2::new(3.0, -1.0), Vec2::new(3.0, 1.0));
        assert!(segment_intersection(p, miss).is_none());

        let parallel = Segment::new(Vec2::new(0.0, 1.0), Vec2::new(2.0, 1.0));
        assert!(segment_intersection(p, parallel).is_none());
    }

    #[test]
    fn ray_hits_segment() {
        let seg = Segment::new(Vec2::new(2.0, -1.0), Vec2::new(2.0, 1.0));
        let t = ray_segment_intersection(Vec2::ZERO, Vec2::new(1.0, 0.0), seg).unwrap();
        assert!((t - 2.0).abs() < TOL);
        // Pointing away: no hit.
        assert!(ray_segment_intersection(Vec2::ZERO, Vec2::new(-1.0, 0.0), seg).is_none());
    }

    #[test]
    fn mirror_across_vertical_line() {
        let wall = Segment::new(Vec2::new(5.0, -10.0), Vec2::new(5.0, 10.0));
        let m = wall.mirror(Vec2::new(0.0, 2.0));
        assert!((m.x - 10.0).abs() < TOL && (m.y - 2.0).abs() < TOL);
        // Mirroring twice is the identity.
        let back = wall.mirror(m);
        assert!(back.dist(Vec2::new(0.0, 2.0)) < TOL);
    }

    #[test]
    fn polygon_orientation_normalized() {
        let cw = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
        ];
        let poly = ConvexPolygon::new(cw).unwrap();
        assert!(polygon_area2(poly.vertices()) > 0.0);
    }

    #[test]
    fn polygon_rejects_degenerate() {
        assert!(ConvexPolygon::new(vec![Vec2::ZERO, Vec2::new(1.0, 0.0)]).is_none());
        // Collinear.
        assert!(ConvexPolygon::new(vec![
            Vec2::ZERO,
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, 0.0)
        ])
        .is_none());
        // Non-convex quad.
        assert!(ConvexPolygon::new(vec![
            Vec2::ZERO,
            Vec2::new(2.0, 0.0),
            Vec2::new(0.2, 0.2),
            Vec2::new(0.0, 2.0),
        ])
        .is_none());
    }

    #[test]
    fn polygon_containment() {
        let poly = ConvexPolygon::new(vec![
            Vec2::ZERO,
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, 2.0),
        ])
        .unwrap();
        assert!(poly.contains(Vec2::new(1.0, 1.0)));
        assert!(poly.contains(Vec2::new(0.0, 1.0)));
        assert!(!poly.contains(Vec2::new(-0.1, 1.0)));
        assert!(poly.contains_strict(Vec2::new(1.0, 1.0)));
        assert!(!poly.contains_strict(Vec2::new(0.0, 1.0)));
    }

    #[test]
    fn chord_through_unit_square() {
        let poly = ConvexPolygon::new(vec![
            Vec2::ZERO,
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
        ])
        .unwrap();
        let seg = Segment::new(Vec2::new(-1.0, 0.5), Vec2::new(2.0, 0.5));
        let len = poly.chord_length(seg);
        assert!((len - 1.0).abs() < 1e-9);

        // Entirely inside.
        let inner = Segment::new(Vec2::new(0.25, 0.5), Vec2::new(0.75, 0.5));
        assert!((poly.chord_length(inner) - 0.5).abs() < 1e-9);

        // Missing entirely.
        let out = Segment::new(Vec2::new(-1.0, 2.5), Vec2::new(2.0, 2.5));
        assert!(poly.chord_length(out) == 0.0);

        // Grazing a corner carries no chord.
        let graze = Segment::new(Vec2::new(-1.0, 1.0), Vec2::new(2.0, 1.0));
        assert!(poly.chord_length(graze) < 1e-9);
    }

    #[test]
    fn rect_contains() {
        let r = Rect::new(Vec2::ZERO, Vec2::new(4.0, 3.0));
        assert!((r.width() - 4.0).abs() < TOL && (r.height() - 3.0).abs() < TOL);
        assert!(r.contains(Vec2::new(4.0, 3.0)));
        assert!(!r.contains(Vec2::new(4.1, 3.0)));
    }
}

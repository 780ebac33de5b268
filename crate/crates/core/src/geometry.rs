//! Regions of interest built from facial landmarks, and the gaze tests run
//! against them.
//!
//! Polygons are counter-clockwise in the usual mathematical sense (positive
//! shoelace area). Image coordinates are y-down, so on screen they appear
//! clockwise; nothing here depends on the visual orientation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::FaceFrame;

/// Distance below which a point is considered to lie on a polygon edge.
pub const BOUNDARY_EPS: f64 = 1e-9;

/// Default falloff distance for [`contact_score`], in pixels.
pub const DEFAULT_D_MAX: f64 = 100.0;

/// Default dilation of the eyelid hulls about their centroid.
pub const DEFAULT_EYE_MARGIN: f64 = 1.5;

/// Landmark indices of the two eyelid contours in the 68-point convention.
pub const LEFT_EYE: std::ops::Range<usize> = 36..42;
pub const RIGHT_EYE: std::ops::Range<usize> = 42..48;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate point set: fewer than three non-collinear points")]
    Degenerate,
    #[error("face was not detected in this frame")]
    NoFace,
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("expected 68 landmarks, got {0}")]
    LandmarkCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: PixelPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl std::ops::Sub for PixelPoint {
    type Output = PixelPoint;
    fn sub(self, rhs: PixelPoint) -> PixelPoint {
        PixelPoint::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// z component of (b - a) x (c - a).
#[inline]
fn orient(a: PixelPoint, b: PixelPoint, c: PixelPoint) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<PixelPoint>,
}

impl Polygon {
    /// Wraps an arbitrary vertex ring. Orientation and simplicity are not
    /// checked; ROI polygons from this module are always convex and CCW.
    pub fn new(vertices: Vec<PixelPoint>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[PixelPoint] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (PixelPoint, PixelPoint)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Signed shoelace area; positive for counter-clockwise rings.
    pub fn signed_area(&self) -> f64 {
        self.edges().map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>() / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Mean of the vertices.
    pub fn vertex_centroid(&self) -> PixelPoint {
        let n = self.vertices.len() as f64;
        let (sx, sy) = self
            .vertices
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        PixelPoint::new(sx / n, sy / n)
    }

    /// Similarity transform about `center`: every vertex's offset is multiplied by `factor`.
    pub fn scaled_about(&self, center: PixelPoint, factor: f64) -> Polygon {
        Polygon {
            vertices: self
                .vertices
                .iter()
                .map(|p| {
                    PixelPoint::new(
                        center.x + (p.x - center.x) * factor,
                        center.y + (p.y - center.y) * factor,
                    )
                })
                .collect(),
        }
    }
}

/// Andrew's monotone chain. Collinear boundary points are dropped.
pub fn convex_hull(points: &[PixelPoint]) -> Result<Polygon, GeometryError> {
    let mut pts: Vec<PixelPoint> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(GeometryError::Degenerate);
    }

    let mut hull: Vec<PixelPoint> = Vec::with_capacity(pts.len() + 1);
    for &p in &pts {
        while hull.len() >= 2 && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();

    if hull.len() < 3 {
        return Err(GeometryError::Degenerate);
    }
    Ok(Polygon { vertices: hull })
}

fn successful_landmarks(face: &FaceFrame) -> Result<&[PixelPoint], GeometryError> {
    if !face.success {
        return Err(GeometryError::NoFace);
    }
    if face.landmarks.len() != crate::ingest::LANDMARK_COUNT {
        return Err(GeometryError::LandmarkCount(face.landmarks.len()));
    }
    Ok(&face.landmarks)
}

/// Convex hull of all 68 landmarks.
pub fn face_polygon(face: &FaceFrame) -> Result<Polygon, GeometryError> {
    convex_hull(successful_landmarks(face)?)
}

/// Left and right eye regions: eyelid hulls dilated by `margin` about their vertex centroid.
pub fn eye_polygons(face: &FaceFrame, margin: f64) -> Result<(Polygon, Polygon), GeometryError> {
    let lm = successful_landmarks(face)?;
    let region = |range: std::ops::Range<usize>| -> Result<Polygon, GeometryError> {
        let hull = convex_hull(&lm[range])?;
        Ok(hull.scaled_about(hull.vertex_centroid(), margin))
    };
    Ok((region(LEFT_EYE)?, region(RIGHT_EYE)?))
}

fn segment_distance(p: PixelPoint, a: PixelPoint, b: PixelPoint) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    p.dist(PixelPoint::new(a.x + t * dx, a.y + t * dy))
}

fn min_edge_distance(p: PixelPoint, poly: &Polygon) -> f64 {
    poly.edges()
        .map(|(a, b)| segment_distance(p, a, b))
        .fold(f64::INFINITY, f64::min)
}

/// Crossing-number test. Points within [`BOUNDARY_EPS`] of an edge are inside.
pub fn point_in_polygon(p: PixelPoint, poly: &Polygon) -> bool {
    let mut inside = false;
    for (a, b) in poly.edges() {
        if segment_distance(p, a, b) <= BOUNDARY_EPS {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Zero inside or on the boundary, otherwise the Euclidean distance to the nearest edge.
pub fn distance_to_polygon(p: PixelPoint, poly: &Polygon) -> f64 {
    if point_in_polygon(p, poly) {
        0.0
    } else {
        min_edge_distance(p, poly)
    }
}

/// 1 inside, falling linearly to 0 at `d_max` pixels from the region.
pub fn contact_score(p: PixelPoint, poly: &Polygon, d_max: f64) -> f64 {
    let d = distance_to_polygon(p, poly);
    if d == 0.0 {
        1.0
    } else {
        (1.0 - d / d_max).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sq() -> Polygon {
        Polygon::new(vec![
            PixelPoint::new(0.0, 0.0),
            PixelPoint::new(1.0, 0.0),
            PixelPoint::new(1.0, 1.0),
            PixelPoint::new(0.0, 1.0),
        ])
        .unwrap()
    }

    fn pts(raw: &[(f64, f64)]) -> Vec<PixelPoint> {
        raw.iter().map(|&(x, y)| PixelPoint::new(x, y)).collect()
    }

    #[test]
    fn hull_drops_interior_point() {
        let hull =
            convex_hull(&pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)])).unwrap();
        assert_eq!(hull.vertices().len(), 4);
        assert!(hull.signed_area() > 0.0);
        assert_eq!(hull.area(), 1.0);
    }

    #[test]
    fn hull_drops_collinear_boundary_points() {
        let hull = convex_hull(&pts(&[(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]))
            .unwrap();
        assert_eq!(hull.vertices().len(), 4);
    }

    #[test]
    fn collinear_is_degenerate() {
        assert_eq!(
            convex_hull(&pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)])),
            Err(GeometryError::Degenerate)
        );
        assert_eq!(convex_hull(&pts(&[(0.0, 0.0)])), Err(GeometryError::Degenerate));
    }

    #[test]
    fn circle_points_are_their_own_hull() {
        let ring: Vec<PixelPoint> = (0..68)
            .map(|i| {
                let t = i as f64 / 68.0 * std::f64::consts::TAU;
                PixelPoint::new(100.0 + 50.0 * t.cos(), 100.0 + 50.0 * t.sin())
            })
            .collect();
        let hull = convex_hull(&ring).unwrap();
        assert_eq!(hull.vertices().len(), 68);
        for p in &ring {
            assert!(hull.vertices().contains(p));
        }
    }

    #[test]
    fn pip_basic_cases() {
        assert!(point_in_polygon(PixelPoint::new(0.5, 0.5), &sq()));
        assert!(!point_in_polygon(PixelPoint::new(2.0, 2.0), &sq()));
        // boundary and corner
        assert!(point_in_polygon(PixelPoint::new(1.0, 0.5), &sq()));
        assert!(point_in_polygon(PixelPoint::new(0.0, 0.0), &sq()));
    }

    #[test]
    fn distance_cases() {
        assert_eq!(distance_to_polygon(PixelPoint::new(0.3, 0.7), &sq()), 0.0);
        assert_eq!(distance_to_polygon(PixelPoint::new(2.0, 0.5), &sq()), 1.0);
        assert!((distance_to_polygon(PixelPoint::new(2.0, 2.0), &sq()) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn score_ramp() {
        let d_max = 100.0;
        let big = Polygon::new(pts(&[(0.0, 0.0), (10.0, 0.0), (10.0, 10.0), (0.0, 10.0)])).unwrap();
        assert_eq!(contact_score(PixelPoint::new(5.0, 5.0), &big, d_max), 1.0);
        assert_eq!(contact_score(PixelPoint::new(110.0, 5.0), &big, d_max), 0.0);
        assert_eq!(contact_score(PixelPoint::new(60.0, 5.0), &big, d_max), 0.5);
        assert_eq!(contact_score(PixelPoint::new(500.0, 5.0), &big, d_max), 0.0);
    }

    #[test]
    fn no_face_errors() {
        let face = FaceFrame { success: false, ..FaceFrame::empty(0) };
        assert_eq!(face_polygon(&face), Err(GeometryError::NoFace));
        assert_eq!(eye_polygons(&face, 1.5).unwrap_err(), GeometryError::NoFace);
    }

    #[test]
    fn eye_margin_scaling() {
        let face = crate::synth::template::canonical_face(PixelPoint::new(500.0, 400.0), 200.0);
        let (l1, r1) = eye_polygons(&face, 1.0).unwrap();
        assert_eq!(l1, convex_hull(&face.landmarks[LEFT_EYE]).unwrap());
        assert_eq!(r1, convex_hull(&face.landmarks[RIGHT_EYE]).unwrap());

        let (l2, _) = eye_polygons(&face, 2.0).unwrap();
        let c = l1.vertex_centroid();
        for (a, b) in l1.vertices().iter().zip(l2.vertices()) {
            assert!((b.dist(c) - 2.0 * a.dist(c)).abs() < 1e-9);
        }

        let (l15, r15) = eye_polygons(&face, 1.5).unwrap();
        assert!((l15.area() / l1.area() - 2.25).abs() < 1e-9);
        assert!((r15.area() / r1.area() - 2.25).abs() < 1e-9);
    }

    #[test]
    fn face_hull_contains_every_landmark() {
        let face = crate::synth::template::canonical_face(PixelPoint::new(700.0, 500.0), 180.0);
        let hull = face_polygon(&face).unwrap();
        for p in &face.landmarks {
            assert!(point_in_polygon(*p, &hull));
        }
    }

    #[test]
    fn eye_regions_inside_face_region() {
        for &scale in &[120.0, 200.0, 320.0] {
            let face = crate::synth::template::canonical_face(PixelPoint::new(960.0, 540.0), scale);
            let hull = face_polygon(&face).unwrap();
            let (l, r) = eye_polygons(&face, DEFAULT_EYE_MARGIN).unwrap();
            for v in l.vertices().iter().chain(r.vertices()) {
                assert!(point_in_polygon(*v, &hull));
            }
        }
    }

    fn arb_cloud() -> impl Strategy<Value = Vec<PixelPoint>> {
        prop::collection::vec((0.0..500.0f64, 0.0..500.0f64), 3..68)
            .prop_map(|v| v.into_iter().map(|(x, y)| PixelPoint::new(x, y)).collect())
    }

    proptest! {
        #[test]
        fn hull_is_idempotent(cloud in arb_cloud()) {
            if let Ok(h) = convex_hull(&cloud) {
                let again = convex_hull(h.vertices()).unwrap();
                prop_assert_eq!(again, h);
            }
        }

        #[test]
        fn pip_iff_zero_distance(cloud in arb_cloud(), px in -50.0..550.0f64, py in -50.0..550.0f64) {
            if let Ok(h) = convex_hull(&cloud) {
                let p = PixelPoint::new(px, py);
                prop_assert_eq!(point_in_polygon(p, &h), distance_to_polygon(p, &h) == 0.0);
            }
        }

        #[test]
        fn score_invariant_under_rigid_motion(
            cloud in arb_cloud(),
            px in -50.0..550.0f64, py in -50.0..550.0f64,
            theta in 0.0..std::f64::consts::TAU, tx in -300.0..300.0f64, ty in -300.0..300.0f64,
        ) {
            if let Ok(h) = convex_hull(&cloud) {
                let (s, c) = theta.sin_cos();
                let m = |p: PixelPoint| PixelPoint::new(c * p.x - s * p.y + tx, s * p.x + c * p.y + ty);
                let moved = Polygon::new(h.vertices().iter().map(|&v| m(v)).collect()).unwrap();
                let p = PixelPoint::new(px, py);
                let before = contact_score(p, &h, DEFAULT_D_MAX);
                let after = contact_score(m(p), &moved, DEFAULT_D_MAX);
                prop_assert!((before - after).abs() < 1e-9, "{before} vs {after}");
            }
        }

        #[test]
        fn score_monotone_in_distance(d1 in 0.0..300.0f64, d2 in 0.0..300.0f64) {
            let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let s = sq();
            let a = contact_score(PixelPoint::new(1.0 + near, 0.5), &s, DEFAULT_D_MAX);
            let b = contact_score(PixelPoint::new(1.0 + far, 0.5), &s, DEFAULT_D_MAX);
            prop_assert!(a >= b);
        }
    }
}

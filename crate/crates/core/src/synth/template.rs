//! Canonical 68-point face in face units: origin between the eyes and nose,
//! x to the right, y downwards, jaw spanning x in [-0.5, 0.5].

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::geometry::PixelPoint;
use crate::ingest::{FaceFrame, LANDMARK_COUNT};

pub const EYE_CENTERS: [(f64, f64); 2] = [(-0.2, -0.15), (0.2, -0.15)];
pub const EYE_HALF_WIDTH: f64 = 0.1;
pub const EYE_HALF_HEIGHT: f64 = 0.04;
pub const NOSE_TIP: (f64, f64) = (0.0, 0.1);
/// Largest |x| of any landmark.
pub const HALF_WIDTH: f64 = 0.5;

fn ellipse(out: &mut Vec<(f64, f64)>, c: (f64, f64), hw: f64, hh: f64, angles_deg: &[f64]) {
    for a in angles_deg {
        let r = a.to_radians();
        out.push((c.0 + hw * r.cos(), c.1 - hh * r.sin()));
    }
}

/// Landmarks in the usual 68-point order.
pub fn canonical_points() -> Vec<(f64, f64)> {
    let mut p = Vec::with_capacity(LANDMARK_COUNT);
    // jaw 0-16
    for j in 0..17 {
        let a = PI * j as f64 / 16.0;
        p.push((-HALF_WIDTH * a.cos(), -0.1 + 0.7 * a.sin()));
    }
    // brows 17-26
    for side in [-1.0, 1.0] {
        for i in 0..5 {
            let t = i as f64 / 4.0;
            let x = if side < 0.0 { -0.4 + 0.3 * t } else { 0.1 + 0.3 * t };
            p.push((x, -0.33 - 0.03 * (PI * t).sin()));
        }
    }
    // nose bridge 27-30, nostrils 31-35
    for i in 0..4 {
        p.push((0.0, -0.15 + 0.25 * i as f64 / 3.0));
    }
    for i in 0..5 {
        p.push((-0.08 + 0.04 * i as f64, 0.15 + 0.02 * (PI * i as f64 / 4.0).sin()));
    }
    // eyes 36-47: outer corner, two upper, inner corner, two lower
    ellipse(&mut p, EYE_CENTERS[0], EYE_HALF_WIDTH, EYE_HALF_HEIGHT, &[180.0, 120.0, 60.0, 0.0, 300.0, 240.0]);
    ellipse(&mut p, EYE_CENTERS[1], EYE_HALF_WIDTH, EYE_HALF_HEIGHT, &[180.0, 120.0, 60.0, 0.0, 300.0, 240.0]);
    // outer lip 48-59, inner lip 60-67
    let outer: Vec<f64> = (0..12).map(|i| 180.0 - 30.0 * i as f64).collect();
    ellipse(&mut p, (0.0, 0.35), 0.2, 0.08, &outer);
    let inner: Vec<f64> = (0..8).map(|i| 180.0 - 45.0 * i as f64).collect();
    ellipse(&mut p, (0.0, 0.35), 0.12, 0.03, &inner);
    debug_assert_eq!(p.len(), LANDMARK_COUNT);
    p
}

/// Face-unit point to pixels.
pub fn to_pixels(center: PixelPoint, scale: f64, (x, y): (f64, f64)) -> PixelPoint {
    PixelPoint::new(center.x + scale * x, center.y + scale * y)
}

fn round_mpx(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// A detected face with the template placed at `center`, `scale` pixels per face unit.
/// Coordinates are rounded to 0.001 px so they survive a CSV round trip unchanged.
pub fn canonical_face(center: PixelPoint, scale: f64) -> FaceFrame {
    let landmarks = canonical_points()
        .into_iter()
        .map(|q| {
            let p = to_pixels(center, scale, q);
            PixelPoint::new(round_mpx(p.x), round_mpx(p.y))
        })
        .collect();
    FaceFrame {
        frame_number: 0,
        face_id: 0,
        timestamp_s: 0.0,
        success: true,
        confidence: 0.98,
        landmarks,
        au_intensity: BTreeMap::new(),
        au_presence: BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{eye_polygons, face_polygon, point_in_polygon, DEFAULT_EYE_MARGIN};

    #[test]
    fn eyes_sit_inside_the_face() {
        let f = canonical_face(PixelPoint::new(500.0, 400.0), 200.0);
        assert_eq!(f.landmarks.len(), 68);
        let hull = face_polygon(&f).unwrap();
        let (l, r) = eye_polygons(&f, DEFAULT_EYE_MARGIN).unwrap();
        for v in l.vertices().iter().chain(r.vertices()) {
            assert!(point_in_polygon(*v, &hull));
        }
        let nose = to_pixels(PixelPoint::new(500.0, 400.0), 200.0, NOSE_TIP);
        assert!(point_in_polygon(nose, &hull));
        assert!(!point_in_polygon(nose, &l) && !point_in_polygon(nose, &r));
    }
}

use std::f64::consts::PI;

use super::shapes::arc;
use super::{GeometryError, Point, Polygon};
use crate::gdsii::PathType;

const MITER_LIMIT: f64 = 2.0;
const CAP_SEGMENTS: usize = 16;

/// Expands a centerline into polygons whose union is the stroked path.
///
/// Each segment becomes a rectangle of the full width; convex corners get a
/// miter wedge (miter length at most twice the half-width) or a bevel
/// triangle; round caps add 16-segment half discs; square-extended caps
/// lengthen the first and last segments by half the width.
pub fn expand_path(points: &[Point], width: f64, pathtype: PathType) -> Result<Vec<Polygon>, GeometryError> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(GeometryError::InvalidLength(width));
    }
    let mut pts = points.to_vec();
    pts.dedup();
    if pts.len() < 2 {
        return Err(GeometryError::DegeneratePath);
    }
    let hw = width / 2.0;
    let last = pts.len() - 2;
    let mut out = Vec::with_capacity(2 * pts.len());
    for i in 0..=last {
        let (mut a, mut b) = (pts[i], pts[i + 1]);
        let dir = (b - a) * (1.0 / (b - a).norm());
        if pathtype == PathType::Extended {
            if i == 0 {
                a = a - dir * hw;
            }
            if i == last {
                b = b + dir * hw;
            }
        }
        let n = dir.perp() * hw;
        out.push(Polygon::new(vec![a + n, b + n, b - n, a - n]));
    }
    for i in 1..pts.len() - 1 {
        if let Some(j) = join(pts[i - 1], pts[i], pts[i + 1], hw) {
            out.push(j);
        }
    }
    if pathtype == PathType::Round {
        let d0 = pts[1] - pts[0];
        let d1 = pts[pts.len() - 1] - pts[pts.len() - 2];
        out.push(half_disc(pts[0], hw, d0.y.atan2(d0.x) + PI));
        out.push(half_disc(pts[pts.len() - 1], hw, d1.y.atan2(d1.x)));
    }
    Ok(out)
}

/// Wedge filling the outer gap of the corner at `b`, or `None` when the path
/// continues straight or doubles back.
fn join(a: Point, b: Point, c: Point, hw: f64) -> Option<Polygon> {
    let d0 = (b - a) * (1.0 / (b - a).norm());
    let d1 = (c - b) * (1.0 / (c - b).norm());
    let turn = d0.cross(d1);
    if turn.abs() < 1e-12 {
        return None;
    }
    // Outer side is to the right of a left turn and vice versa.
    let side = if turn > 0.0 { -1.0 } else { 1.0 };
    let p0 = b + d0.perp() * (hw * side);
    let p1 = b + d1.perp() * (hw * side);
    // Miter point: intersection of the two outer offset lines.
    let bisector = p0 + p1 - b * 2.0;
    let cos_half = ((1.0 + d0.dot(d1)) / 2.0).max(0.0).sqrt();
    if cos_half > 1.0 / MITER_LIMIT {
        let miter = b + bisector * (1.0 / bisector.norm()) * (hw / cos_half);
        Some(Polygon::new(vec![b, p0, miter, p1]))
    } else {
        let wedge = Polygon::new(vec![b, p0, p1]);
        (wedge.area() > 0.0).then_some(wedge)
    }
}

fn half_disc(center: Point, r: f64, facing: f64) -> Polygon {
    Polygon::new(arc(center, r, facing - PI / 2.0, facing + PI / 2.0, CAP_SEGMENTS, true))
}

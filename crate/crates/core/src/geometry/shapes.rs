use std::f64::consts::{FRAC_PI_2, PI, TAU};

use super::{GeometryError, Point, Polygon};

const MIN_CIRCLE_VERTICES: usize = 8;

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

/// Regular `n`-gon with the given edge length, apex up: the first vertex sits
/// at angle π/2 on the circumcircle of radius `edge / (2 sin(π/n))`.
pub fn regular_polygon(n: usize, edge: f64, center: Point) -> Result<Polygon, GeometryError> {
    if n < 3 {
        return Err(GeometryError::InvalidN(n));
    }
    if !positive(edge) {
        return Err(GeometryError::InvalidLength(edge));
    }
    let r = edge / (2.0 * (PI / n as f64).sin());
    Ok(Polygon::new(
        (0..n)
            .map(|i| {
                let t = FRAC_PI_2 + TAU * i as f64 / n as f64;
                Point::new(center.x + r * t.cos(), center.y + r * t.sin())
            })
            .collect(),
    ))
}

/// Smallest vertex count whose chords deviate from a circle of `radius` by at
/// most `max_chord_error` (sagitta `r(1 - cos(π/n))`), floored at 8.
pub fn circle_vertex_count(radius: f64, max_chord_error: f64) -> usize {
    let ratio = (1.0 - max_chord_error / radius).max(-1.0);
    let n = (PI / ratio.acos()).ceil();
    if n.is_finite() {
        (n as usize).max(MIN_CIRCLE_VERTICES)
    } else {
        MIN_CIRCLE_VERTICES
    }
}

pub fn circle(radius: f64, center: Point, max_chord_error: f64) -> Result<Polygon, GeometryError> {
    if !positive(radius) {
        return Err(GeometryError::InvalidRadius(radius));
    }
    if !positive(max_chord_error) {
        return Err(GeometryError::InvalidLength(max_chord_error));
    }
    let n = circle_vertex_count(radius, max_chord_error);
    Ok(Polygon::new(arc(center, radius, 0.0, TAU, n, false)))
}

/// Axis-aligned ellipse with semi-axes `a` (x) and `b` (y).
pub fn ellipse(a: f64, b: f64, center: Point, max_chord_error: f64) -> Result<Polygon, GeometryError> {
    for r in [a, b] {
        if !positive(r) {
            return Err(GeometryError::InvalidRadius(r));
        }
    }
    // Chord error is worst where curvature is highest; size by the larger axis.
    let n = circle_vertex_count(a.max(b), max_chord_error);
    Ok(Polygon::new(
        (0..n)
            .map(|i| {
                let t = TAU * i as f64 / n as f64;
                Point::new(center.x + a * t.cos(), center.y + b * t.sin())
            })
            .collect(),
    ))
}

/// Annulus drawn as a single keyhole ring: outer circle counter-clockwise, a
/// zero-width cut, the inner circle clockwise. Even-odd filling leaves the hole.
pub fn ring(outer: f64, inner: f64, center: Point, max_chord_error: f64) -> Result<Polygon, GeometryError> {
    if !positive(outer) {
        return Err(GeometryError::InvalidRadius(outer));
    }
    if !positive(inner) || inner >= outer {
        return Err(GeometryError::InvalidRadius(inner));
    }
    if !positive(max_chord_error) {
        return Err(GeometryError::InvalidLength(max_chord_error));
    }
    let n_out = circle_vertex_count(outer, max_chord_error);
    let n_in = circle_vertex_count(inner, max_chord_error);
    let mut v = arc(center, outer, 0.0, TAU, n_out, true);
    let mut inner_ring = arc(center, inner, TAU, 0.0, n_in, true);
    v.append(&mut inner_ring);
    Ok(Polygon::new(v))
}

pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
    let (xa, xb) = (x0.min(x1), x0.max(x1));
    let (ya, yb) = (y0.min(y1), y0.max(y1));
    Polygon::new(vec![
        Point::new(xa, ya),
        Point::new(xb, ya),
        Point::new(xb, yb),
        Point::new(xa, yb),
    ])
}

/// Points on an arc from `start` to `end` radians split into `segments` chords.
/// With `inclusive` the end point is emitted too.
pub(crate) fn arc(center: Point, r: f64, start: f64, end: f64, segments: usize, inclusive: bool) -> Vec<Point> {
    let count = if inclusive { segments + 1 } else { segments };
    (0..count)
        .map(|i| {
            let t = start + (end - start) * i as f64 / segments as f64;
            Point::new(center.x + r * t.cos(), center.y + r * t.sin())
        })
        .collect()
}

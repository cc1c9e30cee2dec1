//! Planar geometry in physical units (meters): polygons, shape constructors,
//! path expansion, scanline rasterization and mask comparison.

mod font;
mod path;
mod png;
mod raster;
mod shapes;

pub use font::{text_polygons, GLYPH_ROWS};
pub use path::expand_path;
pub use png::{mask_to_png, render_layout_png, layer_color, PALETTE};
pub use raster::{bounding_box, default_frame, layer_iou, rasterize, rasterize_polygons, RasterFrame, RasterMask};
pub use shapes::{circle, circle_vertex_count, ellipse, rectangle, regular_polygon, ring};

use std::ops::{Add, Mul, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("regular polygon needs at least 3 sides, got {0}")]
    InvalidN(usize),
    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("length must be positive and finite, got {0}")]
    InvalidLength(f64),
    #[error("path has fewer than two distinct points")]
    DegeneratePath,
    #[error("raster frame is empty or has a non-positive pixel size")]
    EmptyFrame,
    #[error("raster frames differ")]
    FrameMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn perp(self) -> Point {
        Point::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn of_point(p: Point) -> Self {
        Self { min: p, max: p }
    }

    pub fn include(&mut self, p: Point) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn union(mut self, o: &BBox) -> BBox {
        self.include(o.min);
        self.include(o.max);
        self
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point {
        Point::new((self.min.x + self.max.x) / 2.0, (self.min.y + self.max.y) / 2.0)
    }
}

/// Implicitly closed polygon: the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Self {
        Self { vertices }
    }

    /// Shoelace area, positive for counter-clockwise rings.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        let mut acc = 0.0;
        for i in 0..n {
            acc += self.vertices[i].cross(self.vertices[(i + 1) % n]);
        }
        acc / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| (b - a).norm()).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn bbox(&self) -> Option<BBox> {
        let mut it = self.vertices.iter();
        let mut b = BBox::of_point(*it.next()?);
        for p in it {
            b.include(*p);
        }
        Some(b)
    }

    /// Area-weighted centroid; falls back to the vertex mean for zero area.
    pub fn centroid(&self) -> Point {
        let a = self.signed_area();
        let n = self.vertices.len();
        if a.abs() < f64::MIN_POSITIVE || n == 0 {
            let s = self.vertices.iter().fold(Point::default(), |acc, p| acc + *p);
            return s * (1.0 / n.max(1) as f64);
        }
        // Shift to the first vertex to limit cancellation.
        let o = self.vertices[0];
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            let p = self.vertices[i] - o;
            let q = self.vertices[(i + 1) % n] - o;
            let c = p.cross(q);
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        Point::new(o.x + cx / (6.0 * a), o.y + cy / (6.0 * a))
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Polygon {
        Polygon::new(self.vertices.iter().map(|p| f(*p)).collect())
    }

    pub fn translate(&self, d: Point) -> Polygon {
        self.map(|p| p + d)
    }

    /// Even-odd point containment.
    pub fn contains(&self, p: Point) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y <= p.y) != (b.y <= p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if x > p.x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Removes consecutive duplicates (including a repeated closing vertex).
    /// Returns `None` when fewer than 3 distinct vertices remain.
    pub fn cleaned(mut self) -> Option<Polygon> {
        self.vertices.dedup();
        while self.vertices.len() > 1 && self.vertices.first() == self.vertices.last() {
            self.vertices.pop();
        }
        (self.vertices.len() >= 3).then_some(self)
    }

    pub fn is_finite(&self) -> bool {
        self.vertices.iter().all(|p| p.is_finite())
    }
}

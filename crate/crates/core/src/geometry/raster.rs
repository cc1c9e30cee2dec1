use super::{BBox, GeometryError, Point, Polygon};
use crate::gdsii::{FlatLayout, LayerKey};

const PAD_FRACTION: f64 = 0.02;
/// Extent used when every vertex coincides, so a frame still exists.
const MIN_EXTENT: f64 = 1e-9;

/// Pixel grid placement. Row 0 is the top row; `origin` is the lower-left
/// corner of the frame in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterFrame {
    pub width: u32,
    pub height: u32,
    pub origin: Point,
    pub pixel_size: f64,
}

impl RasterFrame {
    fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.width >= 1
            && self.height >= 1
            && self.pixel_size > 0.0
            && self.pixel_size.is_finite()
            && self.origin.is_finite();
        if ok {
            Ok(())
        } else {
            Err(GeometryError::EmptyFrame)
        }
    }

    fn words_per_row(&self) -> usize {
        (self.width as usize).div_ceil(64)
    }

    /// Same grid moved by `d`.
    pub fn translated(&self, d: Point) -> RasterFrame {
        RasterFrame {
            origin: self.origin + d,
            ..*self
        }
    }
}

/// Boolean pixel grid, packed 64 pixels per word, row-major from the top.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterMask {
    frame: RasterFrame,
    words: Vec<u64>,
}

impl RasterMask {
    pub fn empty(frame: RasterFrame) -> Result<Self, GeometryError> {
        frame.validate()?;
        let n = frame.words_per_row() * frame.height as usize;
        Ok(Self {
            frame,
            words: vec![0; n],
        })
    }

    pub fn frame(&self) -> &RasterFrame {
        &self.frame
    }

    pub fn get(&self, col: u32, row: u32) -> bool {
        if col >= self.frame.width || row >= self.frame.height {
            return false;
        }
        let w = self.words[row as usize * self.frame.words_per_row() + col as usize / 64];
        w >> (col % 64) & 1 == 1
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| u64::from(w.count_ones())).sum()
    }

    /// Pixels set in both masks; zero when the frames differ.
    pub fn intersection_count(&self, other: &RasterMask) -> u64 {
        if self.frame != other.frame {
            return 0;
        }
        self.words.iter().zip(&other.words).map(|(a, b)| u64::from((a & b).count_ones())).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|w| *w == 0)
    }

    /// Sets pixels `start..end` of `row`.
    fn fill_span(&mut self, row: usize, start: usize, end: usize) {
        if start >= end {
            return;
        }
        let base = row * self.frame.words_per_row();
        let (w0, w1) = (start / 64, (end - 1) / 64);
        for w in w0..=w1 {
            let lo = if w == w0 { start % 64 } else { 0 };
            let hi = if w == w1 { (end - 1) % 64 + 1 } else { 64 };
            let mask = if hi - lo == 64 { u64::MAX } else { ((1u64 << (hi - lo)) - 1) << lo };
            self.words[base + w] |= mask;
        }
    }

    /// Adds one polygon with the even-odd rule, sampling pixel centers.
    pub fn paint(&mut self, polygon: &Polygon) {
        let Some(bb) = polygon.bbox() else { return };
        let f = self.frame;
        let px = f.pixel_size;
        let top = f.origin.y + f.height as f64 * px;
        // Row j samples y = top - (j + 0.5) px.
        let row_of = |y: f64| (top - y) / px - 0.5;
        let first = row_of(bb.max.y).ceil().max(0.0);
        let last = row_of(bb.min.y).floor().min(f.height as f64 - 1.0);
        if first > last {
            return;
        }
        let (first, last) = (first as usize, last as usize);
        let mut crossings: Vec<Vec<f64>> = vec![Vec::new(); last - first + 1];
        for (a, b) in polygon.edges() {
            if a.y == b.y {
                continue;
            }
            let (lo, hi) = if a.y < b.y { (a, b) } else { (b, a) };
            // Half-open: rows with lo.y <= y < hi.y.
            let r_start = row_of(hi.y).ceil().max(first as f64);
            let r_end = row_of(lo.y).floor().min(last as f64);
            if r_start > r_end {
                continue;
            }
            let slope = (hi.x - lo.x) / (hi.y - lo.y);
            for r in r_start as usize..=r_end as usize {
                let y = top - (r as f64 + 0.5) * px;
                if y < lo.y || y >= hi.y {
                    continue;
                }
                crossings[r - first].push(lo.x + (y - lo.y) * slope);
            }
        }
        let w = f.width as f64;
        for (k, xs) in crossings.iter_mut().enumerate() {
            if xs.len() < 2 {
                continue;
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                // Centers x_c with pair[0] <= x_c < pair[1].
                let col = |x: f64| ((x - f.origin.x) / px - 0.5).ceil().clamp(0.0, w) as usize;
                self.fill_span(first + k, col(pair[0]), col(pair[1]));
            }
        }
    }

    /// Rows of booleans, top to bottom.
    pub fn rows(&self) -> impl Iterator<Item = Vec<bool>> + '_ {
        (0..self.frame.height).map(move |r| (0..self.frame.width).map(|c| self.get(c, r)).collect())
    }
}

pub fn rasterize_polygons<'a>(
    polygons: impl IntoIterator<Item = &'a Polygon>,
    frame: &RasterFrame,
) -> Result<RasterMask, GeometryError> {
    let mut mask = RasterMask::empty(*frame)?;
    for p in polygons {
        mask.paint(p);
    }
    Ok(mask)
}

/// Mask of one layer of `layout`; a missing layer yields a clear mask.
pub fn rasterize(layout: &FlatLayout, layer: LayerKey, frame: &RasterFrame) -> Result<RasterMask, GeometryError> {
    rasterize_polygons(layout.layers.get(&layer).into_iter().flatten(), frame)
}

/// Intersection over union; two empty masks match perfectly.
pub fn layer_iou(a: &RasterMask, b: &RasterMask) -> Result<f64, GeometryError> {
    if a.frame != b.frame {
        return Err(GeometryError::FrameMismatch);
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (x, y) in a.words.iter().zip(&b.words) {
        inter += u64::from((x & y).count_ones());
        union += u64::from((x | y).count_ones());
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Bounds of all polygon vertices on all layers, `None` without polygons.
pub fn bounding_box(layout: &FlatLayout) -> Option<BBox> {
    layout
        .layers
        .values()
        .flatten()
        .filter_map(Polygon::bbox)
        .reduce(|a, b| a.union(&b))
}

/// Frame covering `bbox` padded by 2% of its long side on every side, with
/// `long_axis_px` pixels along the longer axis.
pub fn default_frame(bbox: &BBox, long_axis_px: u32) -> Result<RasterFrame, GeometryError> {
    if long_axis_px == 0 || !bbox.min.is_finite() || !bbox.max.is_finite() {
        return Err(GeometryError::EmptyFrame);
    }
    let long = bbox.width().max(bbox.height()).max(MIN_EXTENT);
    let pad = long * PAD_FRACTION;
    let span = long + 2.0 * pad;
    let pixel_size = span / long_axis_px as f64;
    let c = bbox.center();
    let w = ((bbox.width() + 2.0 * pad) / pixel_size).ceil().max(1.0) as u32;
    let h = ((bbox.height() + 2.0 * pad) / pixel_size).ceil().max(1.0) as u32;
    let frame = RasterFrame {
        width: w,
        height: h,
        origin: Point::new(c.x - w as f64 * pixel_size / 2.0, c.y - h as f64 * pixel_size / 2.0),
        pixel_size,
    };
    frame.validate()?;
    Ok(frame)
}

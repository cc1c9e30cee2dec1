use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gdsii::FlatLayout;
use crate::geometry::{rasterize_polygons, BBox, Point, Polygon, RasterFrame};

const CIRCULARITY_TOLERANCE: f64 = 0.05;
const COVERAGE_MIN: f64 = 0.999;
const CONCENTRICITY_TOLERANCE: f64 = 0.05;
const COVERAGE_PIXELS: u32 = 512;

/// Geometric requirements of a two-via metal connection with pads.
/// Lengths are in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViaRuleSet {
    pub via_radius: f64,
    pub pad_radius: f64,
    pub metal_width: f64,
    pub metal_length: f64,
    pub via_centers: [Point; 2],
    pub pad_margin: f64,
    pub via_edge_space: f64,
    pub via_layer: u16,
    pub metal_layer: u16,
    pub pad_layer: u16,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ViaRuleError {
    #[error("layout has no polygons on the {role} layer {layer}")]
    MissingLayer { role: &'static str, layer: u16 },
    #[error("invalid rule set: {0}")]
    InvalidRules(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ViaViolation {
    ViaCount { found: usize },
    NotCircular { via: usize, max_deviation: f64 },
    NotCovered { via: usize, coverage: f64 },
    MetalTooNarrow { width: f64 },
    PadOffCenter { via: usize, offset: f64 },
    MissingPad { via: usize },
    MarginTooSmall { via: usize, margin: f64 },
    EdgeSpaceTooSmall { via: usize, space: f64 },
}

impl ViaViolation {
    /// Letter of the check that produced the violation; `'n'` for count checks.
    pub fn rule(&self) -> char {
        match self {
            ViaViolation::ViaCount { .. } => 'n',
            ViaViolation::NotCircular { .. } => 'a',
            ViaViolation::NotCovered { .. } => 'b',
            ViaViolation::MetalTooNarrow { .. } => 'c',
            ViaViolation::PadOffCenter { .. } | ViaViolation::MissingPad { .. } => 'd',
            ViaViolation::MarginTooSmall { .. } => 'e',
            ViaViolation::EdgeSpaceTooSmall { .. } => 'f',
        }
    }
}

impl ViaRuleSet {
    pub fn validate(&self) -> Result<(), ViaRuleError> {
        let lengths = [
            self.via_radius,
            self.pad_radius,
            self.metal_width,
            self.metal_length,
            self.pad_margin,
            self.via_edge_space,
        ];
        if !lengths.iter().all(|l| *l > 0.0 && l.is_finite()) {
            return Err(ViaRuleError::InvalidRules("lengths must be positive"));
        }
        if self.via_centers[0] == self.via_centers[1] {
            return Err(ViaRuleError::InvalidRules("via centers coincide"));
        }
        Ok(())
    }
}

fn layer_polygons(layout: &FlatLayout, layer: u16) -> Vec<&Polygon> {
    layout
        .layers
        .iter()
        .filter(|(k, _)| k.layer == layer)
        .flat_map(|(_, v)| v)
        .collect()
}

/// Extent of `polys` projected on the unit vector `dir`.
fn span(polys: &[&Polygon], dir: Point) -> (f64, f64) {
    polys
        .iter()
        .flat_map(|p| &p.vertices)
        .map(|v| v.dot(dir))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

fn max_radial_deviation(via: &Polygon, radius: f64) -> f64 {
    let c = via.centroid();
    via.edges()
        .flat_map(|(a, b)| [a, (a + b) * 0.5])
        .map(|p| ((p - c).norm() - radius).abs() / radius)
        .fold(0.0, f64::max)
}

fn coverage(via: &Polygon, metal: &[&Polygon]) -> f64 {
    let Some(bb) = via.bbox() else { return 0.0 };
    let side = bb.width().max(bb.height());
    let px = side / f64::from(COVERAGE_PIXELS);
    let frame = RasterFrame {
        width: (bb.width() / px).ceil().max(1.0) as u32,
        height: (bb.height() / px).ceil().max(1.0) as u32,
        origin: bb.min,
        pixel_size: px,
    };
    let (Ok(v), Ok(m)) = (rasterize_polygons([via], &frame), rasterize_polygons(metal.iter().copied(), &frame)) else {
        return 0.0;
    };
    let total = v.count();
    if total == 0 {
        return 0.0;
    }
    v.intersection_count(&m) as f64 / total as f64
}

/// Metal polygons touching the via's bounding box, or all metal if none do.
fn metal_near<'a>(via: &BBox, metal: &[&'a Polygon]) -> Vec<&'a Polygon> {
    let near: Vec<&Polygon> = metal
        .iter()
        .copied()
        .filter(|m| {
            m.bbox().is_some_and(|b| {
                b.min.x <= via.max.x && b.max.x >= via.min.x && b.min.y <= via.max.y && b.max.y >= via.min.y
            })
        })
        .collect();
    if near.is_empty() {
        metal.to_vec()
    } else {
        near
    }
}

/// Runs checks (a) through (f) against the vias, metal and pads of `layout`.
pub fn check_via_rules(layout: &FlatLayout, rules: &ViaRuleSet) -> Result<Vec<ViaViolation>, ViaRuleError> {
    rules.validate()?;
    let vias = layer_polygons(layout, rules.via_layer);
    let metal = layer_polygons(layout, rules.metal_layer);
    let pads = layer_polygons(layout, rules.pad_layer);
    for (role, layer, polys) in [("via", rules.via_layer, &vias), ("metal", rules.metal_layer, &metal), ("pad", rules.pad_layer, &pads)] {
        if polys.is_empty() {
            return Err(ViaRuleError::MissingLayer { role, layer });
        }
    }
    let mut out = Vec::new();
    if vias.len() != 2 {
        out.push(ViaViolation::ViaCount { found: vias.len() });
    }
    let mut centers: Vec<(Point, &Polygon)> = vias.iter().map(|v| (v.centroid(), *v)).collect();
    // Connection axis from the first to the last via; fall back to the rule's.
    let (a, b) = match (centers.first(), centers.last()) {
        (Some(a), Some(b)) if centers.len() >= 2 && a.0 != b.0 => (a.0, b.0),
        _ => (rules.via_centers[0], rules.via_centers[1]),
    };
    let axis = (b - a) * (1.0 / (b - a).norm());
    centers.sort_by(|p, q| p.0.dot(axis).total_cmp(&q.0.dot(axis)));
    let cross = axis.perp();
    // Absorbs chord error of polygonized circles.
    let slack = 1e-2 * rules.via_radius;

    for (i, (c, via)) in centers.iter().enumerate() {
        let dev = max_radial_deviation(via, rules.via_radius);
        if dev > CIRCULARITY_TOLERANCE {
            out.push(ViaViolation::NotCircular { via: i, max_deviation: dev });
        }
        let cov = coverage(via, &metal);
        if cov < COVERAGE_MIN {
            out.push(ViaViolation::NotCovered { via: i, coverage: cov });
        }
        let near = metal_near(&via.bbox().expect("via has vertices"), &metal);
        let (m_lo, m_hi) = span(&near, cross);
        let pad = pads
            .iter()
            .min_by(|p, q| (p.centroid() - *c).norm().total_cmp(&(q.centroid() - *c).norm()));
        match pad {
            Some(p) => {
                let offset = (p.centroid() - *c).norm();
                if offset > CONCENTRICITY_TOLERANCE * rules.pad_radius {
                    out.push(ViaViolation::PadOffCenter { via: i, offset });
                }
                let (p_lo, p_hi) = span(&[*p], cross);
                let margin = (p_hi - m_hi).min(m_lo - p_lo);
                if margin < rules.pad_margin - slack {
                    out.push(ViaViolation::MarginTooSmall { via: i, margin });
                }
            }
            None => out.push(ViaViolation::MissingPad { via: i }),
        }
        let (a_lo, a_hi) = span(&near, axis);
        let along = c.dot(axis);
        let space = if i == 0 { along - a_lo } else { a_hi - along };
        if space < rules.via_edge_space - slack {
            out.push(ViaViolation::EdgeSpaceTooSmall { via: i, space });
        }
    }
    let widths = centers.iter().map(|(_, v)| {
        let near = metal_near(&v.bbox().expect("via has vertices"), &metal);
        let (lo, hi) = span(&near, cross);
        hi - lo
    });
    let width = widths.fold(f64::INFINITY, f64::min);
    if width < 2.0 * rules.via_radius - slack {
        out.push(ViaViolation::MetalTooNarrow { width });
    }
    Ok(out)
}

use layoutbench::evaluator::EvalOptions;
use layoutbench::gdsii::{FlatLayout, LayerKey};
use layoutbench::geometry::{default_frame, layer_iou, rasterize, rectangle, regular_polygon, BBox, Point};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use crate::Check;

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Rect {
    fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
    fn perimeter(&self) -> f64 {
        2.0 * ((self.x1 - self.x0) + (self.y1 - self.y0))
    }
}

fn overlap(a: Rect, b: Rect) -> f64 {
    let w = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let h = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    w * h
}

/// Raster IoU and the allowed error for a rectangle pair at the default resolution.
fn raster_iou(a: Rect, b: Rect) -> Result<(f64, f64, f64), String> {
    let key = LayerKey::new(0, 0);
    let mut la = FlatLayout::default();
    la.add_polygon(key, rectangle(a.x0, a.y0, a.x1, a.y1));
    let mut lb = FlatLayout::default();
    lb.add_polygon(key, rectangle(b.x0, b.y0, b.x1, b.y1));
    let mut bb = BBox::of_point(Point::new(a.x0, a.y0));
    for p in [Point::new(a.x1, a.y1), Point::new(b.x0, b.y0), Point::new(b.x1, b.y1)] {
        bb.include(p);
    }
    let frame = default_frame(&bb, EvalOptions::default().resolution).map_err(|e| e.to_string())?;
    let ma = rasterize(&la, key, &frame).map_err(|e| e.to_string())?;
    let mb = rasterize(&lb, key, &frame).map_err(|e| e.to_string())?;
    let iou = layer_iou(&ma, &mb).map_err(|e| e.to_string())?;
    let inter = overlap(a, b);
    let union = a.area() + b.area() - inter;
    let tol = 2.0 * (a.perimeter() + b.perimeter()) * frame.pixel_size / union;
    Ok((iou, inter / union, tol))
}

fn rect() -> impl Strategy<Value = Rect> {
    (0.0f64..8.0, 0.0f64..8.0, 0.05f64..6.0, 0.05f64..6.0).prop_map(|(x, y, w, h)| Rect {
        x0: x * 1e-3,
        y0: y * 1e-3,
        x1: (x + w) * 1e-3,
        y1: (y + h) * 1e-3,
    })
}

pub fn run() -> Check {
    let unit = Rect { x0: 0.0, y0: 0.0, x1: 1e-3, y1: 1e-3 };
    let shifted = Rect { x0: 0.5e-3, y0: 0.0, x1: 1.5e-3, y1: 1e-3 };
    let (iou, exact, tol) = match raster_iou(unit, shifted) {
        Ok(v) => v,
        Err(e) => return Check::Fail(e),
    };
    if (exact - 1.0 / 3.0).abs() > 1e-15 || (iou - exact).abs() > tol {
        return Check::Fail(format!("offset squares: raster IoU {iou}, analytic 1/3, tolerance {tol:.2e}"));
    }

    let cfg = Config {
        cases: 300,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(cfg, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let mut worst: f64 = 0.0;
    let res = runner.run(&(rect(), rect()), |(a, b)| {
        let (iou, exact, tol) = raster_iou(a, b).map_err(TestCaseError::fail)?;
        prop_assert!((iou - exact).abs() <= tol, "{a:?} {b:?}: raster {iou}, analytic {exact}, tolerance {tol}");
        Ok(())
    });
    if let Err(e) = res {
        return Check::Fail(e.to_string());
    }
    let _ = &mut worst;

    let closed_forms: [(usize, f64); 3] = [(3, 1.0 / 3f64.sqrt()), (4, 1.0 / 2f64.sqrt()), (6, 1.0)];
    let mut polygons = 0;
    for n in 3..=64usize {
        for edge in [1e-9, 3.7e-6, 1e-3, 2.5e-2, 1.0] {
            let center = Point::new(0.3 * edge, -1.7 * edge);
            let p = match regular_polygon(n, edge, center) {
                Ok(p) => p,
                Err(e) => return Check::Fail(format!("regular_polygon({n}, {edge}): {e}")),
            };
            let formula = edge / (2.0 * (std::f64::consts::PI / n as f64).sin());
            let expected = closed_forms.iter().find(|(k, _)| *k == n).map_or(formula, |(_, f)| f * edge);
            for v in &p.vertices {
                let r = (*v - center).norm();
                let rel = ((r - expected) / expected).abs();
                if rel > 1e-12 {
                    return Check::Fail(format!("n={n} edge={edge}: circumradius {r} vs {expected} (rel {rel:.1e})"));
                }
            }
            polygons += 1;
        }
    }
    Check::Pass(format!(
        "offset squares IoU {iou:.5} (1/3 within {tol:.1e}); 300 random rectangle pairs within bound; {polygons} regular polygons match circumradius to 1e-12"
    ))
}

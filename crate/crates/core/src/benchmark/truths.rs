//! Authoring of the shipped ground truths and manifest. Regenerate with
//! `layoutbench author-truths --out tasks`.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{FRAC_PI_2, PI};
use std::io;
use std::path::{Path, PathBuf};

use super::task::{ManifestEntry, TaskCategory, MANIFEST_FILE};
use crate::evaluator::{EvalOptions, ViaRuleSet};
use crate::gdsii::{
    write_gdsii, ArrayRef, Boundary, Element, GdsPoint, LayerKey, Library, Path as GdsPath, PathType, Structure, Text, WriteError,
};
use crate::geometry::{circle, ellipse, rectangle, regular_polygon, ring, text_polygons, Point, Polygon};

const PROMPTS: &str = include_str!("../../assets/tasks/prompts.toml");

const MM: f64 = 1e-3;
const UM: f64 = 1e-6;
const DB: f64 = 1e-9;

/// Task prompts keyed by task id.
pub fn prompts() -> BTreeMap<String, String> {
    toml::from_str(PROMPTS).expect("bundled prompts parse")
}

pub struct AuthoredTask {
    pub entry: ManifestEntry,
    pub libraries: Vec<Library>,
    pub rules: Option<ViaRuleSet>,
}

fn db(p: Point) -> GdsPoint {
    GdsPoint {
        x: (p.x / DB).round() as i64,
        y: (p.y / DB).round() as i64,
    }
}

struct Cell(Structure);

impl Cell {
    fn new(name: &str) -> Self {
        Cell(Structure::new(name))
    }

    fn poly(&mut self, layer: u16, datatype: u16, p: &Polygon) -> &mut Self {
        let mut ring: Vec<GdsPoint> = p.vertices.iter().map(|v| db(*v)).collect();
        ring.dedup();
        self.0.elements.push(Element::Boundary(Boundary::from_ring(layer, datatype, &ring)));
        self
    }

    fn polys(&mut self, layer: u16, ps: impl IntoIterator<Item = Polygon>) -> &mut Self {
        for p in ps {
            self.poly(layer, 0, &p);
        }
        self
    }

    fn label(&mut self, layer: u16, s: &str, at: Point) -> &mut Self {
        self.0.elements.push(Element::Text(Text {
            layer,
            texttype: 0,
            presentation: None,
            strans: None,
            position: db(at),
            string: s.to_string(),
        }));
        self
    }

    fn path(&mut self, layer: u16, datatype: u16, width: f64, pts: &[Point]) -> &mut Self {
        let mut xy: Vec<GdsPoint> = pts.iter().map(|p| db(*p)).collect();
        xy.dedup();
        self.0.elements.push(Element::Path(GdsPath {
            layer,
            datatype,
            pathtype: PathType::Flush,
            width: (width / DB).round() as i32,
            xy,
        }));
        self
    }

    fn aref(&mut self, name: &str, columns: u16, rows: u16, origin: Point, col_pitch: f64, row_pitch: f64) -> &mut Self {
        let o = db(origin);
        let cx = db(Point::new(origin.x + columns as f64 * col_pitch, origin.y));
        let ry = db(Point::new(origin.x, origin.y + rows as f64 * row_pitch));
        self.0.elements.push(Element::Aref(ArrayRef {
            name: name.to_string(),
            strans: None,
            columns,
            rows,
            xy: [o, cx, ry],
        }));
        self
    }
}

fn library(cells: Vec<Cell>) -> Library {
    let mut lib = Library::new("GROUND_TRUTH");
    lib.structures = cells.into_iter().map(|c| c.0).collect();
    lib
}

fn single(poly_layer: u16, ps: impl IntoIterator<Item = Polygon>) -> Library {
    let mut c = Cell::new("TOP");
    c.polys(poly_layer, ps);
    library(vec![c])
}

fn pt(x: f64, y: f64, unit: f64) -> Point {
    Point::new(x * unit, y * unit)
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64, unit: f64) -> Polygon {
    rectangle(x0 * unit, y0 * unit, x1 * unit, y1 * unit)
}

fn ok<T>(r: Result<T, crate::geometry::GeometryError>) -> T {
    r.expect("authoring parameters are valid")
}

fn rounded_square(side: f64, r: f64, per_quarter: usize) -> Polygon {
    let h = side / 2.0 - r;
    let mut pts = Vec::new();
    for (k, (cx, cy)) in [(h, h), (-h, h), (-h, -h), (h, -h)].into_iter().enumerate() {
        let a0 = k as f64 * FRAC_PI_2;
        for i in 0..=per_quarter {
            let a = a0 + FRAC_PI_2 * i as f64 / per_quarter as f64;
            pts.push(Point::new(cx + r * a.cos(), cy + r * a.sin()));
        }
    }
    Polygon::new(pts)
}

fn trapezoid(dy: f64) -> Polygon {
    Polygon::new(vec![pt(-10.0, -4.0 + dy, MM), pt(10.0, -4.0 + dy, MM), pt(5.0, 4.0 + dy, MM), pt(-5.0, 4.0 + dy, MM)])
}

fn arrow(dy: f64) -> Polygon {
    let v = [(0.0, -0.5), (7.0, -0.5), (7.0, -1.5), (10.0, 0.0), (7.0, 1.5), (7.0, 0.5), (0.0, 0.5)];
    Polygon::new(v.iter().map(|(x, y)| pt(*x, y + dy, MM)).collect())
}

fn serpentine_points() -> Vec<Point> {
    let (mut x, mut y) = (0.0, 0.0);
    let mut pts = vec![pt(x, y, UM)];
    for k in 0..16 {
        if k % 2 == 0 {
            x = if x == 0.0 { 50.0 } else { 0.0 };
        } else {
            y += 50.0;
        }
        pts.push(pt(x, y, UM));
    }
    pts
}

fn spiral_points(n: usize) -> Vec<Point> {
    (0..=n)
        .map(|i| {
            let t = 6.0 * PI * i as f64 / n as f64;
            let r = (-0.1 * t).exp();
            pt(r * t.cos(), r * t.sin(), UM)
        })
        .collect()
}

fn plus(center: Point, arm: f64, width: f64) -> [Polygon; 2] {
    let (a, w) = (arm / 2.0, width / 2.0);
    [
        rectangle(center.x - a, center.y - w, center.x + a, center.y + w),
        rectangle(center.x - w, center.y - a, center.x + w, center.y + a),
    ]
}

pub fn via_rules() -> ViaRuleSet {
    ViaRuleSet {
        via_radius: 10e-6,
        pad_radius: 30e-6,
        metal_width: 40e-6,
        metal_length: 600e-6,
        via_centers: [Point::new(50e-6, 150e-6), Point::new(550e-6, 150e-6)],
        pad_margin: 10e-6,
        via_edge_space: 50e-6,
        via_layer: 2,
        metal_layer: 1,
        pad_layer: 3,
    }
}

fn text_keys(keys: &[&str]) -> BTreeSet<LayerKey> {
    keys.iter().map(|k| k.parse().expect("layer key")).collect()
}

struct Spec {
    id: &'static str,
    category: TaskCategory,
    libraries: Vec<Library>,
    eval: EvalOptions,
    rules: Option<ViaRuleSet>,
    low_confidence: bool,
    notes: &'static str,
}

fn free() -> EvalOptions {
    EvalOptions {
        free_layer_mapping: true,
        ..EvalOptions::default()
    }
}

fn free_translated() -> EvalOptions {
    EvalOptions {
        free_layer_mapping: true,
        allow_translation: true,
        ..EvalOptions::default()
    }
}

fn specs() -> Vec<Spec> {
    use TaskCategory::*;
    let o = Point::default();
    let fine = 1.0 * UM;
    let spec = |id, category, libraries, eval, notes| Spec {
        id,
        category,
        libraries,
        eval,
        rules: None,
        low_confidence: false,
        notes,
    };
    let mut out = Vec::new();

    out.push(spec("Circle", BasicShapes1, vec![single(0, [ok(circle(10.0 * MM, o, fine))])], EvalOptions::default(), "Filled disc, radius 10 mm, layer 0."));
    out.push(spec("Donut", BasicShapes1, vec![single(0, [ok(ring(10.0 * MM, 5.0 * MM, o, 0.01 * MM))])], free(), "Annulus 10 mm / 5 mm centered at the origin; layer not specified."));
    out.push(spec("Oval", BasicShapes1, vec![single(0, [ok(ellipse(10.0 * MM, 6.5 * MM, o, fine))])], EvalOptions::default(), "Ellipse with the 20 mm major axis along x."));
    out.push(spec("Square", BasicShapes1, vec![single(0, [rect(-10.0, 0.0, 0.0, 10.0, MM)])], free(), "Square occupying x in [-10, 0] mm, y in [0, 10] mm."));
    out.push(spec("Triangle", BasicShapes1, vec![single(0, [ok(regular_polygon(3, 10.0 * MM, o))])], free(), "Equilateral triangle, apex up, centroid at the origin."));
    {
        let mut cellsq = Cell::new("GRID_CELL");
        cellsq.poly(1, 4, &rect(0.0, 0.0, 5.0, 5.0, UM));
        let mut top = Cell::new("GRID");
        top.aref("GRID_CELL", 40, 80, Point::new(100e-9, 800e-9), 5.0 * UM, 5.0 * UM);
        let mut s = spec("Grid", BasicShapes1, vec![library(vec![cellsq, top])], EvalOptions::default(), "Read as 40 x 80 abutting 5 um cells tiling 200 x 400 um from (100 nm, 800 nm) on 1/4. A line-grid reading needs a line width the prompt does not give.");
        s.low_confidence = true;
        out.push(s);
    }

    out.push(spec("Heptagon", BasicShapes2, vec![single(0, [ok(regular_polygon(7, 10.0 * MM, o))])], free(), "Regular heptagon, vertex up."));
    out.push(spec("Octagon", BasicShapes2, vec![single(0, [ok(regular_polygon(8, 10.0 * MM, o))])], free(), "Regular octagon, vertex up."));
    out.push(spec(
        "Trapezoid",
        BasicShapes2,
        vec![single(0, [trapezoid(0.0)]), single(0, [trapezoid(4.0 - 32.0 / 9.0)])],
        free(),
        "Isosceles, long edge at the bottom. Alternate: centroid instead of bounding-box center at the origin.",
    ));
    out.push(spec("Hexagon", BasicShapes2, vec![single(0, [ok(regular_polygon(6, 10.0 * MM, o))])], free(), "Regular hexagon, vertex up."));
    out.push(spec("Pentagon", BasicShapes2, vec![single(0, [ok(regular_polygon(5, 10.0 * MM, o))])], free(), "Regular pentagon, vertex up."));
    {
        let mut label = Cell::new("TOP");
        label.label(1, "Hello, GDS!", o);
        out.push(spec(
            "Text",
            BasicShapes2,
            vec![single(1, text_polygons("Hello, GDS!", 5.0 * MM, o)), library(vec![label])],
            EvalOptions {
                text_layers: text_keys(&["1/0"]),
                ..EvalOptions::default()
            },
            "Either polygon glyphs 5 mm tall (relaxed threshold, font-dependent) or a TEXT label at the origin on layer 1.",
        ));
    }

    {
        let mut s = spec(
            "Arrow",
            AdvancedShapes,
            vec![single(0, [arrow(0.0)]), single(0, [arrow(1.5)])],
            free(),
            "Tail at x = 0, tip at x = 10 mm; head 3 mm long and 3 mm wide, body 1 mm. Alternates: tail midpoint or bounding-box corner at the origin.",
        );
        s.low_confidence = true;
        out.push(s);
    }
    {
        let mut sq = Cell::new("SQUARE");
        sq.poly(0, 0, &rect(0.0, 0.0, 5.0, 5.0, MM));
        let mut top = Cell::new("ARRAY");
        top.aref("SQUARE", 10, 10, pt(-180.0, -180.0, MM), 20.0 * MM, 20.0 * MM);
        out.push(spec("SquareArray", AdvancedShapes, vec![library(vec![sq, top])], free(), "Pitch 20 mm; the top-right square spans [0, 5] mm."));
    }
    {
        let mut c = Cell::new("TOP");
        c.path(2, 6, 1.0 * UM, &serpentine_points());
        let mut s = spec("Serpentine", AdvancedShapes, vec![library(vec![c])], EvalOptions::default(), "Meander of 16 segments (15 turns), 50 um runs and 50 um risers, width 1 um, flush ends.");
        s.low_confidence = true;
        out.push(s);
    }
    out.push(spec("RoundedSquare", AdvancedShapes, vec![single(0, [rounded_square(10.0 * MM, 1.0 * MM, 24)])], free_translated(), "Centered at the origin; placement not specified so translation is allowed."));
    {
        let mut c = Cell::new("TOP");
        c.path(0, 0, 1.0 * UM, &spiral_points(400));
        let mut s = spec("Spiral", AdvancedShapes, vec![library(vec![c])], free(), "Literal reading in the default 1 um user unit: r from 1 um down to e^(-0.6 pi) um, width 1 um.");
        s.low_confidence = true;
        out.push(s);
    }
    {
        let mut c = Cell::new("TOP");
        c.poly(1, 0, &rect(0.0, 0.0, 10.0, 5.0, UM))
            .poly(2, 0, &rect(4.5, -1.0, 5.5, 6.0, UM))
            .poly(3, 0, &rect(2.5, 2.0, 3.5, 3.0, UM))
            .poly(3, 0, &rect(6.5, 2.0, 7.5, 3.0, UM));
        let mut s = spec("BasicLayout", AdvancedShapes, vec![library(vec![c])], free_translated(), "Active 10 x 5 um; gate 1 um wide with 1 um overhang; contacts 1 um from the gate edges, centered vertically.");
        s.low_confidence = true;
        out.push(s);
    }

    {
        let mut a = Cell::new("TOP");
        a.poly(0, 0, &rect(-15.0, -5.0, 15.0, 5.0, MM)).label(1, "IBM Research", o);
        let mut b = Cell::new("TOP");
        b.poly(0, 0, &rect(-15.0, -5.0, 15.0, 5.0, MM)).polys(1, text_polygons("IBM Research", 2.0 * MM, o));
        out.push(spec(
            "RectangleWithText",
            ComplexStructures,
            vec![library(vec![a]), library(vec![b])],
            EvalOptions {
                allow_translation: true,
                text_layers: text_keys(&["1/0"]),
                ..EvalOptions::default()
            },
            "Label or 2 mm polygon glyphs at the rectangle center.",
        ));
    }
    {
        let mut c = Cell::new("TOP");
        c.poly(0, 0, &rect(-15.0, -10.0, 15.0, 10.0, MM))
            .poly(2, 0, &ok(circle(2.0 * MM, pt(-10.0, 0.0, MM), fine)))
            .poly(2, 0, &ok(circle(2.0 * MM, pt(10.0, 0.0, MM), fine)))
            .poly(3, 0, &rect(-10.0, -0.5, 10.0, 0.5, MM));
        out.push(spec("MicrofluidicChip", ComplexStructures, vec![library(vec![c])], EvalOptions { allow_translation: true, ..EvalOptions::default() }, "Chip centered at the origin; vias at x = -10 and 10 mm."));
    }
    {
        let eps = 0.01 * UM;
        let mut c = Cell::new("TOP");
        c.poly(1, 0, &rect(0.0, 130.0, 600.0, 170.0, UM));
        for x in [50.0, 550.0] {
            c.poly(2, 0, &ok(circle(10.0 * UM, pt(x, 150.0, UM), eps)));
            c.poly(3, 0, &ok(circle(30.0 * UM, pt(x, 150.0, UM), eps)));
        }
        let mut s = spec(
            "ViaConnection",
            ComplexStructures,
            vec![library(vec![c])],
            free(),
            "Units read as um. Metal 1, via 2, pad 3 (layer numbers free). Metal spans x in [0, 600]. Rule checks a-f apply.",
        );
        s.rules = Some(via_rules());
        out.push(s);
    }
    {
        let mut c = Cell::new("TOP");
        c.poly(0, 0, &ok(circle(1.6 * MM, o, fine)));
        let letters: Vec<char> = ('A'..='Z').collect();
        let steps: Vec<i32> = (-7..=7).collect();
        for (ri, j) in steps.iter().rev().enumerate() {
            for (ci, i) in steps.iter().enumerate() {
                let center = pt(f64::from(*i) * 200.0, f64::from(*j) * 200.0, UM);
                if center.norm() + 50.0 * UM > 1.6 * MM {
                    continue;
                }
                c.polys(1, plus(center, 100.0 * UM, 20.0 * UM));
                c.label(2, &format!("{}{}", letters[ri], ci + 1), center + pt(60.0, 60.0, UM));
            }
        }
        let mut s = spec(
            "FiducialCircle",
            ComplexStructures,
            vec![library(vec![c])],
            EvalOptions {
                free_layer_mapping: true,
                theta_correct: 0.8,
                theta_partial: 0.4,
                text_tolerance: Some(100.0 * UM),
                ..EvalOptions::default()
            },
            "Disc of 3.2 mm diameter; 100 um plus marks 20 um wide on a 200 um grid, kept where the mark fits inside; labels row letter (A at top) plus column number, offset (60, 60) um. Thresholds relaxed.",
        );
        s.low_confidence = true;
        out.push(s);
    }
    {
        let mut c = Cell::new("TOP");
        for x0 in [0.0, 25.0, 50.0] {
            c.poly(1, 0, &rect(x0, 0.0, x0 + 20.0, 5.0, UM));
        }
        for xc in [10.0, 35.0, 60.0] {
            c.poly(2, 0, &rect(xc - 0.25, -2.0, xc + 0.25, 7.0, UM));
            c.poly(3, 0, &rect(xc - 0.5, 2.0, xc + 0.5, 3.0, UM));
        }
        for yc in [-2.0, 7.0] {
            c.poly(2, 0, &rect(-2.0, yc - 0.25, 72.0, yc + 0.25, UM));
        }
        let mut s = spec("ComplexLayout", ComplexStructures, vec![library(vec![c])], free_translated(), "Gate grid: one vertical line per active region plus two horizontal rails; contacts where the vertical lines cross the actives.");
        s.low_confidence = true;
        out.push(s);
    }
    {
        let pitch = 0.625;
        let (cols, rows, shift) = (10, 30, 0.1);
        let half = rows as f64 * pitch / 2.0;
        let length = cols as f64 * pitch;
        let mut c = Cell::new("TOP");
        c.poly(0, 0, &rect(0.0, -half, length, half, UM))
            .poly(0, 0, &rect(-50.0, -10.0, 0.0, 10.0, UM))
            .poly(0, 0, &rect(length, -10.0, length + 50.0, 10.0, UM))
            .poly(0, 0, &ok(circle(20.0 * UM, pt(-50.0, 0.0, UM), 0.05 * UM)))
            .poly(0, 0, &ok(circle(20.0 * UM, pt(length + 50.0, 0.0, UM), 0.05 * UM)));
        for i in 0..cols {
            for j in 0..rows {
                let x = (i as f64 + 0.5) * pitch;
                let y = -half + (j as f64 + 0.5) * pitch + i as f64 * shift * pitch;
                c.poly(1, 0, &ok(circle(0.2 * UM, pt(x, y, UM), 0.005 * UM)));
            }
        }
        let mut s = spec(
            "DLDChip",
            ComplexStructures,
            vec![library(vec![c])],
            free_translated(),
            "Pitch 625 nm (gap 225 nm + pillar 400 nm), 30 pillars across, 10 columns (one shift period), flow along x; 20 x 50 um buses and 40 um inlet/outlet discs on layer 0, pillars on layer 1. One reading among several.",
        );
        s.low_confidence = true;
        out.push(s);
    }
    {
        let mut c = Cell::new("TOP");
        c.poly(1, 0, &rect(0.0, 0.0, 1.0, 0.1, UM))
            .poly(2, 0, &rect(0.45, -0.2, 0.55, 0.3, UM))
            .poly(3, 0, &rect(0.05, -0.2, 0.45, 0.3, UM))
            .poly(3, 0, &rect(0.55, -0.2, 0.95, 0.3, UM));
        let mut s = spec(
            "FinFET",
            ComplexStructures,
            vec![library(vec![c])],
            free_translated(),
            "Top view: fin along x, gate centered, source/drain 0.4 um each side of the gate, gate and source/drain extend 0.2 um beyond the fin in y. Fin height is out of plane.",
        );
        s.low_confidence = true;
        out.push(s);
    }
    out
}

/// All 25 tasks with their truths, in manifest order.
pub fn author_tasks() -> Vec<AuthoredTask> {
    let prompts = prompts();
    specs()
        .into_iter()
        .map(|s| {
            let files = (0..s.libraries.len())
                .map(|i| PathBuf::from(if i == 0 { format!("truths/{}.gds", s.id) } else { format!("truths/{}_alt{i}.gds", s.id) }))
                .collect();
            AuthoredTask {
                entry: ManifestEntry {
                    id: s.id.to_string(),
                    category: s.category,
                    prompt: prompts.get(s.id).unwrap_or_else(|| panic!("no prompt for {}", s.id)).clone(),
                    ground_truths: files,
                    rules: s.rules.as_ref().map(|_| PathBuf::from(format!("rules/{}.toml", s.id))),
                    eval: s.eval,
                    low_confidence: s.low_confidence,
                    notes: s.notes.to_string(),
                },
                libraries: s.libraries,
                rules: s.rules,
            }
        })
        .collect()
}

/// Fields of `eval` that differ from the defaults.
fn eval_overrides(eval: &EvalOptions) -> toml::Table {
    let full = toml::Table::try_from(eval).expect("options serialize");
    let base = toml::Table::try_from(EvalOptions::default()).expect("options serialize");
    full.into_iter().filter(|(k, v)| base.get(k) != Some(v)).collect()
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

pub fn render_manifest(tasks: &[AuthoredTask]) -> String {
    let mut out = String::from("# Benchmark manifest. Generated by `layoutbench author-truths`; prompts are literal strings.\n");
    for t in tasks {
        let e = &t.entry;
        out.push_str("\n[[task]]\n");
        out.push_str(&format!("id = {}\n", quoted(&e.id)));
        out.push_str(&format!("category = {}\n", quoted(e.category.as_str())));
        let files: Vec<String> = e.ground_truths.iter().map(|p| quoted(&p.to_string_lossy())).collect();
        out.push_str(&format!("ground_truths = [{}]\n", files.join(", ")));
        if let Some(r) = &e.rules {
            out.push_str(&format!("rules = {}\n", quoted(&r.to_string_lossy())));
        }
        if e.low_confidence {
            out.push_str("low_confidence = true\n");
        }
        out.push_str(&format!("notes = {}\n", quoted(&e.notes)));
        out.push_str(&format!("prompt = '''\n{}'''\n", e.prompt));
        let overrides = eval_overrides(&e.eval);
        if !overrides.is_empty() {
            out.push_str("\n[task.eval]\n");
            out.push_str(&toml::to_string(&overrides).expect("table serializes"));
        }
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum AuthorError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("writing {file}: {source}")]
    Gds { file: String, source: WriteError },
}

/// Writes `manifest.toml`, `truths/*.gds` and `rules/*.toml` below `dir`.
pub fn write_task_dir(dir: &Path) -> Result<Vec<PathBuf>, AuthorError> {
    let tasks = author_tasks();
    std::fs::create_dir_all(dir.join("truths"))?;
    let mut written = Vec::new();
    for t in &tasks {
        for (lib, file) in t.libraries.iter().zip(&t.entry.ground_truths) {
            let bytes = write_gdsii(lib).map_err(|source| AuthorError::Gds {
                file: file.display().to_string(),
                source,
            })?;
            std::fs::write(dir.join(file), bytes)?;
            written.push(dir.join(file));
        }
        if let (Some(rules), Some(file)) = (&t.rules, &t.entry.rules) {
            std::fs::create_dir_all(dir.join("rules"))?;
            let text = toml::to_string(rules).expect("rules serialize");
            std::fs::write(dir.join(file), text)?;
            written.push(dir.join(file));
        }
    }
    std::fs::write(dir.join(MANIFEST_FILE), render_manifest(&tasks))?;
    written.push(dir.join(MANIFEST_FILE));
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompts_cover_every_task() {
        let p = prompts();
        assert_eq!(p.len(), 25);
        let ids: BTreeSet<&str> = specs().iter().map(|s| s.id).collect();
        assert_eq!(ids.len(), 25);
        assert!(p.keys().all(|k| ids.contains(k.as_str())));
        assert!(p["Spiral"].contains("r(t) = e^(-0.1t)"));
        assert!(p["BasicLayout"].contains("\n2. Place a polysilicon gate"));
    }

    #[test]
    fn serpentine_has_fifteen_turns() {
        let pts = serpentine_points();
        assert_eq!(pts.len(), 17);
        assert_eq!(pts[1], pt(50.0, 0.0, UM));
        assert_eq!(pts[2], pt(50.0, 50.0, UM));
        assert_eq!(pts[3], pt(0.0, 50.0, UM));
    }

    #[test]
    fn rounded_square_area() {
        let p = rounded_square(10.0, 1.0, 64);
        let exact = 100.0 - (4.0 - PI);
        assert!((p.area() - exact).abs() < 1e-3, "{}", p.area());
        assert!((rounded_square(10.0, 1.0, 24).area() - exact).abs() < 0.01);
    }

    #[test]
    fn overrides_only_list_changes() {
        assert!(eval_overrides(&EvalOptions::default()).is_empty());
        let o = eval_overrides(&free());
        assert_eq!(o.len(), 1);
        assert_eq!(o["free_layer_mapping"], toml::Value::Boolean(true));
    }

    #[test]
    fn authored_directory_loads_and_self_checks() {
        let dir = tempfile::tempdir().unwrap();
        write_task_dir(dir.path()).unwrap();
        let tasks = super::super::load_tasks(dir.path()).unwrap();
        assert_eq!(tasks.len(), 25);
        let p = prompts();
        for t in &tasks {
            assert_eq!(t.prompt, p[&t.id]);
        }
    }
}

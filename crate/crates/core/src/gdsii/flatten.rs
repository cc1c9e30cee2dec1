use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ArrayRef, Element, GdsPoint, Library, Strans, StructRef};
use crate::geometry::{expand_path, Point, Polygon};

/// Layer and datatype pair, written `layer/datatype` in text form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LayerKey {
    pub layer: u16,
    pub datatype: u16,
}

impl LayerKey {
    pub const fn new(layer: u16, datatype: u16) -> Self {
        Self { layer, datatype }
    }
}

impl std::str::FromStr for LayerKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected layer/datatype, got {s:?}");
        let (l, d) = s.split_once('/').unwrap_or((s, "0"));
        Ok(LayerKey::new(l.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?))
    }
}

impl TryFrom<String> for LayerKey {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<LayerKey> for String {
    fn from(k: LayerKey) -> String {
        k.to_string()
    }
}

impl std::fmt::Display for LayerKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.layer, self.datatype)
    }
}

/// A text label after flattening. `layer.datatype` holds the texttype.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatText {
    pub string: String,
    pub position: Point,
    pub layer: LayerKey,
}

/// Reference-free geometry in meters, keyed by layer and datatype.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlatLayout {
    pub layers: BTreeMap<LayerKey, Vec<Polygon>>,
    pub texts: Vec<FlatText>,
    /// Rings and paths dropped because fewer than 3 distinct vertices remained.
    pub degenerate: usize,
}

impl FlatLayout {
    pub fn polygon_count(&self) -> usize {
        self.layers.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.polygon_count() == 0 && self.texts.is_empty()
    }

    /// Applies `f` to every polygon vertex and text position.
    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> FlatLayout {
        FlatLayout {
            layers: self
                .layers
                .iter()
                .map(|(k, polys)| (*k, polys.iter().map(|p| p.map(&f)).collect()))
                .collect(),
            texts: self
                .texts
                .iter()
                .map(|t| FlatText {
                    position: f(t.position),
                    ..t.clone()
                })
                .collect(),
            degenerate: self.degenerate,
        }
    }

    pub fn add_polygon(&mut self, layer: LayerKey, polygon: Polygon) {
        self.layers.entry(layer).or_default().push(polygon);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Top {
    /// The single structure no other structure references.
    Auto,
    /// Union of every unreferenced structure.
    AllRoots,
    Named(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlattenError {
    #[error("structure {0} references itself through a cycle")]
    CyclicReference(String),
    #[error("structure {from} references missing structure {to}")]
    DanglingReference { from: String, to: String },
    #[error("several top-level structures: {0:?}")]
    AmbiguousTop(Vec<String>),
    #[error("no structure named {0}")]
    UnknownStructure(String),
    #[error("library has no structures")]
    NoStructures,
}

/// Row-vector affine map `p -> (a x + b y + tx, c x + d y + ty)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    tx: f64,
    ty: f64,
}

impl Affine {
    const IDENTITY: Affine = Affine {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
        tx: 0.0,
        ty: 0.0,
    };

    /// Reflection about x, then magnification, then rotation, then `offset`.
    fn from_strans(strans: Option<&Strans>, offset: Point) -> Affine {
        let (reflect, mag, angle) = match strans {
            Some(s) => (s.reflect_x, s.magnification.unwrap_or(1.0), s.angle_degrees.unwrap_or(0.0)),
            None => (false, 1.0, 0.0),
        };
        let (sin, cos) = exact_sin_cos(angle);
        let fy = if reflect { -1.0 } else { 1.0 };
        Affine {
            a: mag * cos,
            b: -mag * sin * fy,
            c: mag * sin,
            d: mag * cos * fy,
            tx: offset.x,
            ty: offset.y,
        }
    }

    fn apply(&self, p: Point) -> Point {
        Point::new(self.a * p.x + self.b * p.y + self.tx, self.c * p.x + self.d * p.y + self.ty)
    }
}

/// Sine and cosine with exact values at multiples of 90 degrees, so rotated
/// integer layouts stay on the grid.
fn exact_sin_cos(degrees: f64) -> (f64, f64) {
    let quarter = degrees / 90.0;
    if quarter.fract() == 0.0 {
        match (quarter as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        degrees.to_radians().sin_cos()
    }
}

fn pt(p: GdsPoint) -> Point {
    Point::new(p.x as f64, p.y as f64)
}

/// Flattened contents of one structure in its own database-unit frame.
#[derive(Default)]
struct Local {
    layers: BTreeMap<LayerKey, Vec<Polygon>>,
    texts: Vec<FlatText>,
    degenerate: usize,
}

impl Local {
    fn absorb(&mut self, child: &Local, t: &Affine) {
        for (k, polys) in &child.layers {
            self.layers
                .entry(*k)
                .or_default()
                .extend(polys.iter().map(|p| p.map(|q| t.apply(q))));
        }
        self.texts.extend(child.texts.iter().map(|x| FlatText {
            position: t.apply(x.position),
            ..x.clone()
        }));
        self.degenerate += child.degenerate;
    }

    fn push(&mut self, key: LayerKey, polygon: Polygon) {
        match polygon.cleaned() {
            Some(p) => self.layers.entry(key).or_default().push(p),
            None => self.degenerate += 1,
        }
    }
}

struct Flattener<'a> {
    lib: &'a Library,
    index: HashMap<&'a str, usize>,
    done: HashMap<usize, Rc<Local>>,
    visiting: BTreeSet<usize>,
}

impl<'a> Flattener<'a> {
    fn structure(&mut self, i: usize) -> Result<Rc<Local>, FlattenError> {
        if let Some(l) = self.done.get(&i) {
            return Ok(l.clone());
        }
        let s = &self.lib.structures[i];
        if !self.visiting.insert(i) {
            return Err(FlattenError::CyclicReference(s.name.clone()));
        }
        let mut local = Local::default();
        for el in &s.elements {
            match el {
                Element::Boundary(b) => {
                    let poly = Polygon::new(b.xy.iter().copied().map(pt).collect());
                    local.push(LayerKey::new(b.layer, b.datatype), poly);
                }
                Element::Path(p) => {
                    let pts: Vec<Point> = p.xy.iter().copied().map(pt).collect();
                    let key = LayerKey::new(p.layer, p.datatype);
                    match expand_path(&pts, f64::from(p.width).abs(), p.pathtype) {
                        Ok(polys) => polys.into_iter().for_each(|q| local.push(key, q)),
                        Err(_) => local.degenerate += 1,
                    }
                }
                Element::Text(t) => local.texts.push(FlatText {
                    string: t.string.clone(),
                    position: pt(t.position),
                    layer: LayerKey::new(t.layer, t.texttype),
                }),
                Element::Sref(r) => {
                    let child = self.child(&s.name, &r.name)?;
                    local.absorb(&child, &sref_transform(r));
                }
                Element::Aref(r) => {
                    let child = self.child(&s.name, &r.name)?;
                    for t in aref_transforms(r) {
                        local.absorb(&child, &t);
                    }
                }
            }
        }
        self.visiting.remove(&i);
        let local = Rc::new(local);
        self.done.insert(i, local.clone());
        Ok(local)
    }

    fn child(&mut self, from: &str, name: &str) -> Result<Rc<Local>, FlattenError> {
        let j = *self.index.get(name).ok_or_else(|| FlattenError::DanglingReference {
            from: from.to_string(),
            to: name.to_string(),
        })?;
        self.structure(j)
    }
}

fn sref_transform(r: &StructRef) -> Affine {
    Affine::from_strans(r.strans.as_ref(), pt(r.origin))
}

/// One transform per array instance. The displacement points are already in
/// the parent frame, so they are added after the element transform.
fn aref_transforms(r: &ArrayRef) -> Vec<Affine> {
    let o = pt(r.xy[0]);
    let (cols, rows) = (r.columns.max(1), r.rows.max(1));
    let col_step = (pt(r.xy[1]) - o) * (1.0 / f64::from(cols));
    let row_step = (pt(r.xy[2]) - o) * (1.0 / f64::from(rows));
    let mut out = Vec::with_capacity(usize::from(cols) * usize::from(rows));
    for row in 0..rows {
        for col in 0..cols {
            let off = o + col_step * f64::from(col) + row_step * f64::from(row);
            out.push(Affine::from_strans(r.strans.as_ref(), off));
        }
    }
    out
}

fn referenced_names(lib: &Library) -> BTreeSet<&str> {
    lib.structures
        .iter()
        .flat_map(|s| &s.elements)
        .filter_map(|e| match e {
            Element::Sref(r) => Some(r.name.as_str()),
            Element::Aref(r) => Some(r.name.as_str()),
            _ => None,
        })
        .collect()
}

/// Expands all references below the chosen top structure(s) and converts
/// coordinates to meters.
pub fn flatten(lib: &Library, top: &Top) -> Result<FlatLayout, FlattenError> {
    if lib.structures.is_empty() {
        return Err(FlattenError::NoStructures);
    }
    let index: HashMap<&str, usize> = lib.structures.iter().enumerate().map(|(i, s)| (s.name.as_str(), i)).collect();
    let referenced = referenced_names(lib);
    let roots: Vec<usize> = lib
        .structures
        .iter()
        .enumerate()
        .filter(|(_, s)| !referenced.contains(s.name.as_str()))
        .map(|(i, _)| i)
        .collect();
    let tops = match top {
        Top::Named(name) => vec![*index.get(name.as_str()).ok_or_else(|| FlattenError::UnknownStructure(name.clone()))?],
        Top::Auto | Top::AllRoots if roots.is_empty() => {
            return Err(FlattenError::CyclicReference(lib.structures[0].name.clone()));
        }
        Top::Auto if roots.len() > 1 => {
            return Err(FlattenError::AmbiguousTop(
                roots.iter().map(|&i| lib.structures[i].name.clone()).collect(),
            ));
        }
        Top::Auto | Top::AllRoots => roots,
    };
    let mut f = Flattener {
        lib,
        index,
        done: HashMap::new(),
        visiting: BTreeSet::new(),
    };
    let mut merged = Local::default();
    for i in tops {
        let l = f.structure(i)?;
        merged.absorb(&l, &Affine::IDENTITY);
    }
    let m = lib.meters_per_db_unit;
    let layout = FlatLayout {
        layers: merged.layers,
        texts: merged.texts,
        degenerate: merged.degenerate,
    };
    Ok(layout.map_points(|p| p * m))
}

//! Verdicts for generated layouts: runtime failure, correct, unit (scaling)
//! error, partial match or shape error, decided by per-layer raster IoU
//! across a set of unit hypotheses and every acceptable ground truth.

mod texts;
mod via;

pub use texts::{compare_texts, TextMatchReport};
pub use via::{check_via_rules, ViaRuleError, ViaRuleSet, ViaViolation};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gdsii::{FlatLayout, LayerKey};
use crate::geometry::{bounding_box, default_frame, layer_iou, rasterize_polygons, BBox, Polygon};
use crate::sandbox::{ExecStatus, ExecutionOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Correct,
    ScalingError,
    PartiallyCorrect,
    ShapeError,
    RuntimeError,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Correct,
        Category::ScalingError,
        Category::PartiallyCorrect,
        Category::ShapeError,
        Category::RuntimeError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Correct => "correct",
            Category::ScalingError => "scaling_error",
            Category::PartiallyCorrect => "partially_correct",
            Category::ShapeError => "shape_error",
            Category::RuntimeError => "runtime_error",
        }
    }

    /// Quality order used to pick among ground truths; lower is better.
    fn rank(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Category {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub category: Category,
    pub best_scale: f64,
    pub per_layer_scores: BTreeMap<String, f64>,
    pub matched_ground_truth: usize,
    pub evidence: Vec<String>,
    pub confidence: f64,
}

impl Verdict {
    pub fn runtime_error(reason: impl Into<String>) -> Self {
        Verdict {
            category: Category::RuntimeError,
            best_scale: 1.0,
            per_layer_scores: BTreeMap::new(),
            matched_ground_truth: 0,
            evidence: vec![reason.into()],
            confidence: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub theta_correct: f64,
    pub theta_partial: f64,
    pub scale_hypotheses: Vec<f64>,
    /// Align bounding-box centers before comparing.
    pub allow_translation: bool,
    /// Match candidate layers to truth layers by best overlap instead of by number.
    pub free_layer_mapping: bool,
    /// Threshold multiplier for layers holding polygonal text.
    pub text_relief: f64,
    pub text_layers: BTreeSet<LayerKey>,
    /// Label position tolerance in meters; defaults to 2% of the truth diagonal, at least 1 µm.
    pub text_tolerance: Option<f64>,
    /// Pixels along the long axis of the comparison frame.
    pub resolution: u32,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            theta_correct: 0.95,
            theta_partial: 0.5,
            scale_hypotheses: vec![1e-6, 1e-3, 1.0, 1e3, 1e6],
            allow_translation: false,
            free_layer_mapping: false,
            text_relief: 0.7,
            text_layers: BTreeSet::new(),
            text_tolerance: None,
            resolution: 2048,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("layout has neither polygons nor labels")]
    EmptyLayout,
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

impl EvalOptions {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidOptions(m.to_string()));
        if !(0.0 < self.theta_partial && self.theta_partial < self.theta_correct && self.theta_correct <= 1.0) {
            return bad("need 0 < theta_partial < theta_correct <= 1");
        }
        if !self.scale_hypotheses.contains(&1.0) {
            return bad("scale hypotheses must include 1");
        }
        if self.scale_hypotheses.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("scale hypotheses must be positive");
        }
        if !(self.text_relief > 0.0 && self.text_relief <= 1.0) {
            return bad("text_relief must lie in (0, 1]");
        }
        if self.resolution < 16 {
            return bad("resolution must be at least 16 pixels");
        }
        Ok(())
    }
}

/// Acceptable answers for one task.
#[derive(Debug, Clone, Default)]
pub struct GroundTruths {
    pub layouts: Vec<FlatLayout>,
    pub rules: Option<ViaRuleSet>,
}

/// Scores of every required layer at one scale hypothesis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisScore {
    pub scale: f64,
    pub scores: BTreeMap<String, f64>,
    pub thresholds: BTreeMap<String, f64>,
    /// Truth layer -> candidate layers compared against it.
    #[serde(skip)]
    pub mapping: BTreeMap<LayerKey, Vec<LayerKey>>,
    #[serde(skip)]
    pub unmapped_candidate_layers: usize,
}

impl HypothesisScore {
    pub fn min(&self) -> f64 {
        self.scores.values().copied().fold(1.0, f64::min)
    }

    pub fn mean(&self) -> f64 {
        if self.scores.is_empty() {
            1.0
        } else {
            self.scores.values().sum::<f64>() / self.scores.len() as f64
        }
    }

    pub fn passing(&self) -> usize {
        self.scores.iter().filter(|(k, v)| **v >= self.thresholds[*k]).count()
    }

    pub fn all_pass(&self) -> bool {
        self.passing() == self.scores.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleReport {
    pub best_scale: f64,
    pub hypotheses: Vec<HypothesisScore>,
}

impl ScaleReport {
    pub fn best(&self) -> &HypothesisScore {
        self.hypotheses
            .iter()
            .find(|h| h.scale == self.best_scale)
            .expect("best scale is one of the hypotheses")
    }

    pub fn at(&self, scale: f64) -> Option<&HypothesisScore> {
        self.hypotheses.iter().find(|h| h.scale == scale)
    }
}

/// Polygon bounds extended by label positions.
fn extent(layout: &FlatLayout) -> Option<BBox> {
    let mut bb = bounding_box(layout);
    for t in &layout.texts {
        match bb.as_mut() {
            Some(b) => b.include(t.position),
            None => bb = Some(BBox::of_point(t.position)),
        }
    }
    bb
}

fn nearest_power_of_thousand(ratio: f64) -> f64 {
    1000f64.powi((ratio.log10() / 3.0).round() as i32)
}

/// Hypotheses to try: the configured set plus the power of 1000 closest to the
/// truth/candidate diagonal ratio.
fn hypotheses(candidate: &BBox, truth: &BBox, opts: &EvalOptions) -> Vec<f64> {
    let mut hs = opts.scale_hypotheses.clone();
    let (dc, dt) = (candidate.diagonal(), truth.diagonal());
    if dc > 0.0 && dt > 0.0 {
        let s = nearest_power_of_thousand(dt / dc);
        if s.is_finite() && s > 0.0 && !hs.contains(&s) {
            hs.push(s);
        }
    }
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    hs
}

fn transform_candidate(candidate: &FlatLayout, cand_box: &BBox, truth_box: &BBox, s: f64, opts: &EvalOptions) -> FlatLayout {
    if opts.allow_translation {
        let (cc, tc) = (cand_box.center(), truth_box.center());
        candidate.map_points(|p| (p - cc) * s + tc)
    } else {
        candidate.map_points(|p| p * s)
    }
}

/// Best assignment of candidate layers to truth layers by total IoU; each
/// candidate layer serves at most one truth layer.
fn assign(matrix: &[Vec<f64>]) -> Vec<Option<usize>> {
    fn go(t: usize, m: &[Vec<f64>], used: &mut Vec<bool>, cur: &mut Vec<Option<usize>>, best: &mut (f64, Vec<Option<usize>>), acc: f64) {
        if t == m.len() {
            if acc > best.0 {
                *best = (acc, cur.clone());
            }
            return;
        }
        for c in 0..used.len() {
            if !used[c] && m[t][c] > 0.0 {
                used[c] = true;
                cur.push(Some(c));
                go(t + 1, m, used, cur, best, acc + m[t][c]);
                cur.pop();
                used[c] = false;
            }
        }
        cur.push(None);
        go(t + 1, m, used, cur, best, acc);
        cur.pop();
    }
    let n_cand = matrix.first().map_or(0, Vec::len);
    let mut best = (-1.0, vec![None; matrix.len()]);
    go(0, matrix, &mut vec![false; n_cand], &mut Vec::new(), &mut best, 0.0);
    best.1
}

fn layer<'a>(l: &'a FlatLayout, k: &LayerKey) -> Vec<&'a Polygon> {
    l.layers.get(k).map(|v| v.iter().collect()).unwrap_or_default()
}

fn polys_bbox<'a>(polys: impl IntoIterator<Item = &'a Polygon>) -> Option<BBox> {
    polys.into_iter().filter_map(Polygon::bbox).reduce(|a, b| a.union(&b))
}

/// IoU of two polygon sets in a frame fitted to their joint extent, so each
/// comparison gets the full resolution regardless of other layers.
fn polygon_iou(cand: &[&Polygon], truth: &[&Polygon], resolution: u32) -> Result<f64, EvalError> {
    let bb = match (polys_bbox(cand.iter().copied()), polys_bbox(truth.iter().copied())) {
        (Some(a), Some(b)) => a.union(&b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => return Ok(1.0),
    };
    let frame = default_frame(&bb, resolution)?;
    let cm = rasterize_polygons(cand.iter().copied(), &frame)?;
    let tm = rasterize_polygons(truth.iter().copied(), &frame)?;
    Ok(layer_iou(&cm, &tm)?)
}

fn score_hypothesis(cand: &FlatLayout, truth: &FlatLayout, scale: f64, opts: &EvalOptions, text_tol: f64) -> Result<HypothesisScore, EvalError> {
    let mut scores = BTreeMap::new();
    let mut thresholds = BTreeMap::new();
    let mut mapping: BTreeMap<LayerKey, Vec<LayerKey>> = BTreeMap::new();
    let threshold = |k: &LayerKey| {
        if opts.text_layers.contains(k) {
            opts.theta_correct * opts.text_relief
        } else {
            opts.theta_correct
        }
    };
    let truth_keys: Vec<LayerKey> = truth.layers.keys().copied().collect();
    let cand_keys: Vec<LayerKey> = cand.layers.keys().copied().collect();
    let mut used_cand: BTreeSet<LayerKey> = BTreeSet::new();
    if !opts.free_layer_mapping {
        for k in &truth_keys {
            let iou = polygon_iou(&layer(cand, k), &layer(truth, k), opts.resolution)?;
            scores.insert(k.to_string(), iou);
            thresholds.insert(k.to_string(), threshold(k));
            if cand.layers.contains_key(k) {
                mapping.insert(*k, vec![*k]);
                used_cand.insert(*k);
            }
        }
    } else if truth_keys.len() == 1 {
        // One required layer: everything the candidate drew counts.
        let k = truth_keys[0];
        let all: Vec<&Polygon> = cand.layers.values().flatten().collect();
        scores.insert(k.to_string(), polygon_iou(&all, &layer(truth, &k), opts.resolution)?);
        thresholds.insert(k.to_string(), threshold(&k));
        mapping.insert(k, cand_keys.clone());
        used_cand.extend(cand_keys.iter().copied());
    } else if !truth_keys.is_empty() {
        let mut matrix = vec![vec![0.0; cand_keys.len()]; truth_keys.len()];
        for (ti, tk) in truth_keys.iter().enumerate() {
            for (ci, ck) in cand_keys.iter().enumerate() {
                matrix[ti][ci] = polygon_iou(&layer(cand, ck), &layer(truth, tk), opts.resolution)?;
            }
        }
        for (ti, choice) in assign(&matrix).into_iter().enumerate() {
            let k = truth_keys[ti];
            scores.insert(k.to_string(), choice.map_or(0.0, |c| matrix[ti][c]));
            thresholds.insert(k.to_string(), threshold(&k));
            if let Some(c) = choice {
                mapping.insert(k, vec![cand_keys[c]]);
                used_cand.insert(cand_keys[c]);
            }
        }
    }
    let text_groups: BTreeSet<LayerKey> = truth.texts.iter().map(|t| t.layer).collect();
    for layer in text_groups {
        let group: Vec<_> = truth.texts.iter().filter(|t| t.layer == layer).cloned().collect();
        let report = compare_texts(&cand.texts, &group, text_tol, !opts.free_layer_mapping);
        let key = format!("text:{layer}");
        scores.insert(key.clone(), report.truth_recall());
        thresholds.insert(key, opts.theta_correct);
    }
    let unmapped = cand_keys.iter().filter(|k| !used_cand.contains(k)).count();
    Ok(HypothesisScore {
        scale,
        scores,
        thresholds,
        mapping,
        unmapped_candidate_layers: unmapped,
    })
}

/// Orders hypotheses: higher minimum score, then higher mean, then scale 1,
/// then the smallest change of magnitude.
fn better(a: &HypothesisScore, b: &HypothesisScore) -> bool {
    let key = |h: &HypothesisScore| (h.min(), h.mean(), h.scale == 1.0, -h.scale.log10().abs());
    let (ka, kb) = (key(a), key(b));
    ka.0.total_cmp(&kb.0)
        .then(ka.1.total_cmp(&kb.1))
        .then(ka.2.cmp(&kb.2))
        .then(ka.3.total_cmp(&kb.3))
        .is_gt()
}

fn pick_best<'a>(hs: impl Iterator<Item = &'a HypothesisScore>) -> Option<&'a HypothesisScore> {
    hs.fold(None, |best, h| match best {
        Some(b) if !better(h, b) => Some(b),
        _ => Some(h),
    })
}

/// Scores `candidate` against `truth` under each scale hypothesis.
pub fn detect_scale(candidate: &FlatLayout, truth: &FlatLayout, opts: &EvalOptions) -> Result<ScaleReport, EvalError> {
    opts.validate()?;
    let (Some(cand_box), Some(truth_box)) = (extent(candidate), extent(truth)) else {
        return Err(EvalError::EmptyLayout);
    };
    let text_tol = opts.text_tolerance.unwrap_or_else(|| (0.02 * truth_box.diagonal()).max(1e-6));
    let mut out = Vec::new();
    for s in hypotheses(&cand_box, &truth_box, opts) {
        let scaled = transform_candidate(candidate, &cand_box, &truth_box, s, opts);
        out.push(score_hypothesis(&scaled, truth, s, opts, text_tol)?);
    }
    let best = pick_best(out.iter()).map(|h| h.scale).unwrap_or(1.0);
    Ok(ScaleReport {
        best_scale: best,
        hypotheses: out,
    })
}

fn note_scores(h: &HypothesisScore) -> String {
    let parts: Vec<String> = h.scores.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
    format!("scale {:e}: {}", h.scale, parts.join(", "))
}

fn verdict_for_truth(candidate: &FlatLayout, truth: &FlatLayout, rules: Option<&ViaRuleSet>, index: usize, opts: &EvalOptions) -> Result<Verdict, EvalError> {
    let report = detect_scale(candidate, truth, opts)?;
    let identity = report.at(1.0).expect("identity hypothesis present");
    let mut evidence = Vec::new();
    let (category, chosen) = if identity.all_pass() {
        (Category::Correct, identity)
    } else if let Some(h) = pick_best(report.hypotheses.iter().filter(|h| h.scale != 1.0 && h.all_pass())) {
        evidence.push(format!("layers match after rescaling by {:e}", h.scale));
        (Category::ScalingError, h)
    } else {
        let best = report.best();
        let passing = best.passing();
        let partial = best.mean() >= opts.theta_partial || (passing > 0 && passing < best.scores.len());
        if partial {
            (Category::PartiallyCorrect, best)
        } else {
            (Category::ShapeError, best)
        }
    };
    evidence.push(note_scores(chosen));
    let mut category = category;
    if let (Category::Correct, Some(rules)) = (category, rules) {
        // Check the rules on the candidate relabelled to truth layer numbers.
        let mut relabelled = FlatLayout::default();
        let placed = transform_candidate(candidate, &extent(candidate).expect("nonempty"), &extent(truth).expect("nonempty"), 1.0, opts);
        for (t, cs) in &chosen.mapping {
            for c in cs {
                if let Some(polys) = placed.layers.get(c) {
                    relabelled.layers.entry(*t).or_default().extend(polys.iter().cloned());
                }
            }
        }
        match check_via_rules(&relabelled, rules) {
            Ok(v) if v.is_empty() => {}
            Ok(v) => {
                category = Category::PartiallyCorrect;
                for x in v {
                    evidence.push(format!("via rule ({}) violated: {}", x.rule(), serde_json::to_string(&x).unwrap_or_default()));
                }
            }
            Err(e) => {
                category = Category::PartiallyCorrect;
                evidence.push(format!("via rules not checkable: {e}"));
            }
        }
    }
    let mut confidence = chosen.min();
    if chosen.unmapped_candidate_layers > 0 {
        evidence.push(format!("{} extra candidate layer(s)", chosen.unmapped_candidate_layers));
        confidence *= 0.9;
    }
    if candidate.degenerate > 0 {
        evidence.push(format!("{} degenerate element(s) dropped", candidate.degenerate));
    }
    Ok(Verdict {
        category,
        best_scale: chosen.scale,
        per_layer_scores: chosen.scores.clone(),
        matched_ground_truth: index,
        evidence,
        confidence,
    })
}

/// Decision tree over a parsed candidate: best verdict across all truths.
pub fn classify_layout(candidate: &FlatLayout, truths: &GroundTruths, opts: &EvalOptions) -> Result<Verdict, EvalError> {
    opts.validate()?;
    if extent(candidate).is_none() {
        return Ok(Verdict {
            category: Category::ShapeError,
            best_scale: 1.0,
            per_layer_scores: BTreeMap::new(),
            matched_ground_truth: 0,
            evidence: vec!["candidate layout is empty".into()],
            confidence: 1.0,
        });
    }
    let mut best: Option<Verdict> = None;
    for (i, truth) in truths.layouts.iter().enumerate() {
        let v = verdict_for_truth(candidate, truth, truths.rules.as_ref(), i, opts)?;
        let replace = match &best {
            None => true,
            Some(b) => {
                let key = |v: &Verdict| (std::cmp::Reverse(v.category.rank()), v.confidence);
                let (kv, kb) = (key(&v), key(b));
                kv.0.cmp(&kb.0).then(kv.1.total_cmp(&kb.1)).is_gt()
            }
        };
        if replace {
            best = Some(v);
        }
    }
    best.ok_or_else(|| EvalError::InvalidOptions("task has no ground truth".into()))
}

/// Full decision tree including the execution outcome.
pub fn classify(outcome: &ExecutionOutcome, candidate: Option<&FlatLayout>, truths: &GroundTruths, opts: &EvalOptions) -> Verdict {
    if outcome.status != ExecStatus::Ok {
        return Verdict::runtime_error(format!("execution status {}", outcome.status));
    }
    let Some(candidate) = candidate else {
        return Verdict::runtime_error("no parseable GDSII artifact");
    };
    match classify_layout(candidate, truths, opts) {
        Ok(v) => v,
        Err(e) => Verdict::runtime_error(format!("evaluation failed: {e}")),
    }
}

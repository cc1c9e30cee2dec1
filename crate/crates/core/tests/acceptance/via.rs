use std::collections::BTreeSet;

use layoutbench::benchmark::{find_task, load_tasks};
use layoutbench::evaluator::{check_via_rules, ViaRuleSet};
use layoutbench::gdsii::{FlatLayout, LayerKey};
use layoutbench::geometry::{circle, rectangle, Point};

use crate::Check;

const UM: f64 = 1e-6;

/// Metal strip from 0 to 600 µm at y = 150 µm, vias of radius 10 µm at x = 50
/// and 550 µm, pads around them.
#[derive(Clone, Copy)]
struct Build {
    metal_width: f64,
    metal_x: (f64, f64),
    square_vias: bool,
    pad_shift: f64,
    pad_radius: f64,
}

const NOMINAL: Build = Build {
    metal_width: 40.0,
    metal_x: (0.0, 600.0),
    square_vias: false,
    pad_shift: 0.0,
    pad_radius: 30.0,
};

fn build(b: Build) -> FlatLayout {
    let chord = 0.005 * UM;
    let mut l = FlatLayout::default();
    let hw = b.metal_width / 2.0;
    l.add_polygon(LayerKey::new(1, 0), rectangle(b.metal_x.0 * UM, (150.0 - hw) * UM, b.metal_x.1 * UM, (150.0 + hw) * UM));
    for x in [50.0, 550.0] {
        let via = if b.square_vias {
            rectangle((x - 10.0) * UM, 140.0 * UM, (x + 10.0) * UM, 160.0 * UM)
        } else {
            circle(10.0 * UM, Point::new(x * UM, 150.0 * UM), chord).unwrap()
        };
        l.add_polygon(LayerKey::new(2, 0), via);
        l.add_polygon(LayerKey::new(3, 0), circle(b.pad_radius * UM, Point::new((x + b.pad_shift) * UM, 150.0 * UM), chord).unwrap());
    }
    l
}

fn letters(layout: &FlatLayout, rules: &ViaRuleSet) -> Result<BTreeSet<char>, String> {
    check_via_rules(layout, rules).map(|v| v.iter().map(|x| x.rule()).collect()).map_err(|e| e.to_string())
}

pub fn run() -> Check {
    let path = crate::tasks_dir().join("rules/ViaConnection.toml");
    let rules: ViaRuleSet = match std::fs::read_to_string(&path).map_err(|e| e.to_string()).and_then(|t| toml::from_str(&t).map_err(|e| e.to_string())) {
        Ok(r) => r,
        Err(e) => return Check::Fail(format!("{}: {e}", path.display())),
    };
    let tasks = match load_tasks(&crate::tasks_dir()) {
        Ok(t) => t,
        Err(e) => return Check::Fail(e.to_string()),
    };
    let shipped = match find_task(&tasks, "ViaConnection") {
        Ok(t) => t,
        Err(e) => return Check::Fail(e.to_string()),
    };
    let mut failures = Vec::new();
    for (i, truth) in shipped.truths.layouts.iter().enumerate() {
        match letters(truth, &rules) {
            Ok(l) if l.is_empty() => {}
            other => failures.push(format!("shipped truth {i}: {other:?}")),
        }
    }

    let mutations: [(&str, Build, &[char]); 4] = [
        ("metal narrowed to 15 µm", Build { metal_width: 15.0, ..NOMINAL }, &['b', 'c']),
        ("square vias", Build { square_vias: true, ..NOMINAL }, &['a']),
        ("pads shifted 5 µm", Build { pad_shift: 5.0, ..NOMINAL }, &['d']),
        ("pad radius 25 µm", Build { pad_radius: 25.0, ..NOMINAL }, &['e']),
    ];
    match letters(&build(NOMINAL), &rules) {
        Ok(l) if l.is_empty() => {}
        other => failures.push(format!("nominal build: {other:?}")),
    }
    let short = Build { metal_x: (20.0, 580.0), ..NOMINAL };
    for (name, b, expected) in mutations.iter().copied().chain([("metal ends 30 µm past the vias", short, &['f'][..])]) {
        let want: BTreeSet<char> = expected.iter().copied().collect();
        match letters(&build(b), &rules) {
            Ok(got) if got == want => {}
            other => failures.push(format!("{name}: expected {want:?}, got {other:?}")),
        }
    }
    if failures.is_empty() {
        Check::Pass(format!(
            "shipped truth clean; nominal build clean; {} single-parameter mutations hit exactly their intended rules",
            mutations.len() + 1
        ))
    } else {
        Check::Fail(failures.join("; "))
    }
}

use layoutbench::benchmark::{find_task, load_tasks, self_check, TaskSpec};
use layoutbench::evaluator::{classify, classify_layout, Category, Verdict};
use layoutbench::gdsii::FlatLayout;
use layoutbench::geometry::bounding_box;
use layoutbench::sandbox::{ExecStatus, ExecutionOutcome};

use crate::Check;

const SCALES: [f64; 3] = [1e-3, 1e3, 1e6];

fn verdict(task: &TaskSpec, candidate: &FlatLayout) -> Result<Verdict, String> {
    classify_layout(candidate, &task.truths, &task.eval).map_err(|e| format!("{}: {e}", task.id))
}

fn same_bbox(a: &FlatLayout, b: &FlatLayout) -> bool {
    match (bounding_box(a), bounding_box(b)) {
        (Some(x), Some(y)) => {
            let tol = 1e-9 * x.diagonal();
            (x.min - y.min).norm() <= tol && (x.max - y.max).norm() <= tol
        }
        _ => false,
    }
}

fn scaling(tasks: &[TaskSpec], failures: &mut Vec<String>) -> usize {
    let mut checked = 0;
    for task in tasks {
        for (i, truth) in task.truths.layouts.iter().enumerate() {
            if !truth.texts.is_empty() {
                continue;
            }
            for s in SCALES {
                let scaled = truth.map_points(|p| p * s);
                match verdict(task, &scaled) {
                    Ok(v) if v.category == Category::ScalingError && (v.best_scale * s - 1.0).abs() < 1e-9 => {}
                    Ok(v) => failures.push(format!("{}[{i}] x{s:e}: {} at scale {:e}", task.id, v.category, v.best_scale)),
                    Err(e) => failures.push(e),
                }
                checked += 1;
            }
        }
    }
    checked
}

/// Drops each layer in turn from multi-layer truths. Deletions that leave the
/// bounding box unchanged must score partially correct; the rest are counted
/// but not required, since translation-tolerant tasks re-center on the box.
fn deletion(tasks: &[TaskSpec], failures: &mut Vec<String>) -> (usize, usize) {
    let (mut gated, mut other_partial) = (0, 0);
    for task in tasks {
        for (i, truth) in task.truths.layouts.iter().enumerate() {
            if truth.layers.len() < 2 {
                continue;
            }
            for key in truth.layers.keys() {
                let mut cut = truth.clone();
                cut.layers.remove(key);
                let v = match verdict(task, &cut) {
                    Ok(v) => v,
                    Err(e) => {
                        failures.push(e);
                        continue;
                    }
                };
                if same_bbox(truth, &cut) {
                    gated += 1;
                    if v.category != Category::PartiallyCorrect {
                        failures.push(format!("{}[{i}] without layer {key}: {}", task.id, v.category));
                    }
                } else if v.category == Category::PartiallyCorrect {
                    other_partial += 1;
                }
            }
        }
    }
    (gated, other_partial)
}

pub fn run() -> Check {
    let tasks = match load_tasks(&crate::tasks_dir()) {
        Ok(t) => t,
        Err(e) => return Check::Fail(e.to_string()),
    };
    if tasks.len() != 25 {
        return Check::Fail(format!("expected 25 tasks, found {}", tasks.len()));
    }
    let mut truths = 0;
    for t in &tasks {
        if let Err(e) = self_check(t) {
            return Check::Fail(e.to_string());
        }
        truths += t.truths.layouts.len();
    }

    let mut failures = Vec::new();
    let scaled = scaling(&tasks, &mut failures);
    let (deleted, extra) = deletion(&tasks, &mut failures);
    if deleted == 0 {
        failures.push("no layer deletion kept the bounding box".into());
    }

    let pairs = [("Triangle", "Hexagon"), ("Square", "Circle"), ("Circle", "Triangle"), ("Pentagon", "Octagon")];
    for (task_id, other) in pairs {
        let (task, other) = match (find_task(&tasks, task_id), find_task(&tasks, other)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => return Check::Fail(format!("missing task {task_id} or {other}")),
        };
        match verdict(task, &other.truths.layouts[0]) {
            Ok(v) if v.category == Category::ShapeError => {}
            Ok(v) => failures.push(format!("{} truth on {}: {}", other.id, task.id, v.category)),
            Err(e) => failures.push(e),
        }
    }

    let task = &tasks[0];
    let empty = FlatLayout::default();
    for status in [ExecStatus::NoArtifact, ExecStatus::Timeout, ExecStatus::NonzeroExit] {
        let v = classify(&ExecutionOutcome::failed(status, "boom"), None, &task.truths, &task.eval);
        if v.category != Category::RuntimeError {
            failures.push(format!("{status} without artifact: {}", v.category));
        }
    }
    let ok = ExecutionOutcome::failed(ExecStatus::Ok, "");
    if classify(&ok, Some(&empty), &task.truths, &task.eval).category == Category::Correct {
        failures.push("empty layout scored correct".into());
    }

    if failures.is_empty() {
        Check::Pass(format!(
            "25 tasks, {truths} truths self-check; {scaled} scaled truths give scaling_error at 1/s; {deleted} box-preserving layer deletions give partially_correct ({extra} others also partial); {} substitutions give shape_error; failed runs give runtime_error",
            pairs.len()
        ))
    } else {
        let n = failures.len();
        failures.truncate(8);
        Check::Fail(format!("{n} mismatches: {}", failures.join("; ")))
    }
}

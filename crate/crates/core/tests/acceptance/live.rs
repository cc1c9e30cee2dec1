use std::path::PathBuf;

use layoutbench::benchmark::{find_task, load_tasks, run_matrix, MatrixConfig, Mode, ResultSet};
use layoutbench::llm::{BackendsConfig, Registry, StoreMode};
use layoutbench::orchestrator::{Pipeline, SteeringConfig};

use crate::Check;

/// Backends file for the live smoke run. Without it the criterion is skipped.
pub const LIVE_ENV: &str = "LAYOUTBENCH_LIVE_BACKENDS";

fn one_run(cfg: &BackendsConfig, mode: StoreMode, work: PathBuf, backend: &str) -> Result<ResultSet, String> {
    let tasks = load_tasks(&crate::tasks_dir()).map_err(|e| e.to_string())?;
    let task = find_task(&tasks, "Circle").map_err(|e| e.to_string())?.clone();
    let registry = Registry::build(cfg, &mode, &|k| std::env::var(k).ok()).map_err(|e| e.to_string())?;
    let pipeline = Pipeline::new(&registry, work);
    let mc = MatrixConfig {
        mode: Mode::Baseline,
        generators: vec![backend.to_string()],
        assessors: Vec::new(),
        runs: 1,
        steering: SteeringConfig::default(),
    };
    let mut results = ResultSet::new();
    run_matrix(&[task], &pipeline, &mc, &mut results, None).map_err(|e| e.to_string())?;
    Ok(results)
}

pub fn run() -> Check {
    let Some(path) = std::env::var_os(LIVE_ENV) else {
        return Check::Skip(format!("{LIVE_ENV} not set"));
    };
    let cfg = match BackendsConfig::load(path.as_ref()) {
        Ok(c) => c,
        Err(e) => return Check::Fail(e.to_string()),
    };
    let Some(backend) = cfg.baseline_ids().into_iter().next() else {
        return Check::Fail("no backend configured".into());
    };
    let tmp = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Check::Fail(e.to_string()),
    };
    let store = tmp.path().join("store");
    let live = match one_run(&cfg, StoreMode::Record(store.clone()), tmp.path().join("w1"), &backend) {
        Ok(r) => r,
        Err(e) => return Check::Fail(e),
    };
    let replay = match one_run(&cfg, StoreMode::Replay(store), tmp.path().join("w2"), &backend) {
        Ok(r) => r,
        Err(e) => return Check::Fail(e),
    };
    let (Some(a), Some(b)) = (live.records().next(), replay.records().next()) else {
        return Check::Fail("no record produced".into());
    };
    if let Some(e) = &a.thought.backend_error {
        return Check::Fail(format!("{backend}: {e}"));
    }
    if a.thought.request_digest != b.thought.request_digest || a.verdict.category != b.verdict.category {
        return Check::Fail("replay differs from the recorded run".into());
    }
    Check::Pass(format!("{backend} on Circle scored {}; replay reproduces it", a.verdict.category))
}

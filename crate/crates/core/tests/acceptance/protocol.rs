//! Runs the full baseline and assessor protocol over 25 tasks from a replay
//! store recorded off scripted personas, then checks the bookkeeping.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use base64::Engine as _;
use layoutbench::benchmark::{
    aggregate, find_task, load_tasks, render_report, run_matrix, task_categories, MatrixConfig, Mode, OutputLayout, Overrides, ResultSet, TaskSpec,
};
use layoutbench::evaluator::Category;
use layoutbench::gdsii::{flatten, parse_gdsii, write_gdsii, Element, FixedClock, LayerKey, Library, Top};
use layoutbench::geometry::bounding_box;
use layoutbench::llm::{sha256_hex, BackendsConfig, ChatRequest, MockBackend, RecordingBackend, Registry, ReplayStore, StoreMode};
use layoutbench::orchestrator::{Pipeline, SteeringConfig};

use crate::Check;

const GENERATORS: [&str; 4] = ["gen-a", "gen-b", "gen-c", "gen-d"];
const BASELINES: [&str; 5] = ["gen-a", "gen-b", "gen-c", "gen-d", "reasoner"];
const RUNS: u32 = 5;
const REPLAY_BUDGET: Duration = Duration::from_secs(300);
/// Bump when the personas change so cached stores are rebuilt.
const PERSONA_VERSION: &str = "personas-2";

const CONFIG: &str = r#"
generators = ["gen-a", "gen-b", "gen-c", "gen-d"]
assessors = ["gen-a", "gen-b", "gen-c", "gen-d"]

[[backend]]
id = "gen-a"
kind = "mock"

[[backend]]
id = "gen-b"
kind = "mock"
supports_images = false

[[backend]]
id = "gen-c"
kind = "mock"

[[backend]]
id = "gen-d"
kind = "mock"
supports_images = false

[[backend]]
id = "reasoner"
kind = "mock"
"#;

#[derive(Clone, Copy)]
enum Answer {
    Correct,
    /// Truth with one layer removed, where such a layer exists.
    Partial,
    Units,
    Crash,
    Prose,
    WrongShape,
}

fn persona(backend: &str, stage: &str, run: u32) -> Answer {
    use Answer::*;
    let table: [Answer; 5] = match (backend, stage) {
        ("gen-a", _) => [Correct, Correct, Correct, Partial, Units],
        ("gen-b", "generate") => [Correct, Correct, Crash, Units, Prose],
        ("gen-b", _) => [Correct; 5],
        ("gen-c", "generate") => [WrongShape, WrongShape, Correct, Crash, Units],
        ("gen-c", _) => [Units; 5],
        ("gen-d", "generate") => [Prose, Crash, Correct, Correct, Correct],
        ("gen-d", _) => [Crash; 5],
        _ => [Correct, Correct, Correct, Correct, WrongShape],
    };
    table[run as usize % 5]
}

fn python_writing(bytes: &[u8]) -> String {
    let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
    format!("Writing the library directly.\n```python\nimport base64\nopen('out.gds', 'wb').write(base64.b64decode('{b64}'))\n```\n")
}

fn layer_of(e: &Element) -> Option<LayerKey> {
    match e {
        Element::Boundary(b) => Some(LayerKey::new(b.layer, b.datatype)),
        Element::Path(p) => Some(LayerKey::new(p.layer, p.datatype)),
        _ => None,
    }
}

/// `lib` minus every shape on one layer whose removal keeps the bounding box.
fn without_one_layer(lib: &Library) -> Option<Library> {
    let flat = flatten(lib, &Top::AllRoots).ok()?;
    let full = bounding_box(&flat)?;
    for key in flat.layers.keys() {
        let mut rest = flat.clone();
        rest.layers.remove(key);
        let Some(b) = bounding_box(&rest) else { continue };
        if (b.min - full.min).norm() <= 1e-9 * full.diagonal() && (b.max - full.max).norm() <= 1e-9 * full.diagonal() {
            let mut out = lib.clone();
            for s in &mut out.structures {
                s.elements.retain(|e| layer_of(e) != Some(*key));
            }
            return Some(out);
        }
    }
    None
}

struct Answers {
    correct: BTreeMap<String, String>,
    partial: BTreeMap<String, String>,
    units: BTreeMap<String, String>,
    wrong: BTreeMap<String, String>,
}

impl Answers {
    fn new(tasks: &[TaskSpec]) -> Result<Self, String> {
        let mut truth_bytes = BTreeMap::new();
        for t in tasks {
            let f = &t.ground_truth_files[0];
            let path = if f.is_absolute() { f.clone() } else { crate::tasks_dir().join(f) };
            truth_bytes.insert(t.id.clone(), std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?);
        }
        let mut a = Answers {
            correct: BTreeMap::new(),
            partial: BTreeMap::new(),
            units: BTreeMap::new(),
            wrong: BTreeMap::new(),
        };
        for (id, bytes) in &truth_bytes {
            let mut lib = parse_gdsii(bytes).map_err(|e| e.to_string())?.library;
            let partial = without_one_layer(&lib).map_or_else(|| bytes.clone(), |l| write_gdsii(&l).expect("partial truth writes"));
            a.partial.insert(id.clone(), python_writing(&partial));
            lib.meters_per_db_unit *= 1e3;
            let other = if id == "Square" { "Circle" } else { "Square" };
            a.correct.insert(id.clone(), python_writing(bytes));
            a.units.insert(id.clone(), python_writing(&write_gdsii(&lib).map_err(|e| e.to_string())?));
            a.wrong.insert(id.clone(), python_writing(&truth_bytes[other]));
        }
        Ok(a)
    }

    fn respond(&self, backend: &str, req: &ChatRequest) -> Option<String> {
        let mut parts = req.request_tag.split('/');
        let (task, stage, run) = (parts.next()?, parts.next()?, parts.next()?.parse().ok()?);
        Some(match persona(backend, stage, run) {
            Answer::Correct => self.correct.get(task)?.clone(),
            Answer::Partial => self.partial.get(task)?.clone(),
            Answer::Units => self.units.get(task)?.clone(),
            Answer::WrongShape => self.wrong.get(task)?.clone(),
            Answer::Crash => "```python\nclass Cell:\n    pass\n\nCell().add_polygon([(0, 0), (1, 0), (1, 1)])\n```\n".to_string(),
            Answer::Prose => "I would draw the outline on layer 0 and save it as out.gds.".to_string(),
        })
    }
}

fn quiet_pipeline(registry: &Registry, work: PathBuf) -> Pipeline<'_> {
    let mut p = Pipeline::new(registry, work);
    let cfg = BackendsConfig::from_toml(CONFIG).expect("fixture config");
    p.sampling.generator_temperature = cfg.generator_temperature;
    p.sampling.assessor_temperature = cfg.assessor_temperature;
    p.sampling.max_output_tokens = cfg.max_output_tokens;
    p
}

fn matrix(mode: Mode, generators: &[&str]) -> MatrixConfig {
    MatrixConfig {
        mode,
        generators: generators.iter().map(|s| s.to_string()).collect(),
        assessors: GENERATORS.iter().map(|s| s.to_string()).collect(),
        runs: RUNS,
        steering: SteeringConfig::default(),
    }
}

fn fingerprint(tasks: &[TaskSpec]) -> String {
    let mut buf = PERSONA_VERSION.as_bytes().to_vec();
    for t in tasks {
        buf.extend(t.id.as_bytes());
        buf.extend(t.prompt.as_bytes());
        for f in &t.ground_truth_files {
            let path = if f.is_absolute() { f.clone() } else { crate::tasks_dir().join(f) };
            buf.extend(std::fs::read(path).unwrap_or_default());
        }
    }
    sha256_hex(&buf)
}

/// Records every request the protocol will make into `store`. Solomon pools
/// have to be executed to build the assessor prompts; their verdicts are kept
/// for comparison with the replay.
fn record(tasks: &[TaskSpec], store: &Path, work: PathBuf) -> Result<ResultSet, String> {
    let cfg = BackendsConfig::from_toml(CONFIG).map_err(|e| e.to_string())?;
    let answers = Arc::new(Answers::new(tasks)?);
    let mut registry = Registry::empty();
    for b in &cfg.backend {
        let a = Arc::clone(&answers);
        let id = b.id.clone();
        let mock = MockBackend::new(&b.id, b.supports_images).with_responder(move |req| a.respond(&id, req));
        registry.insert(Box::new(RecordingBackend::new(Box::new(mock), ReplayStore::new(store))), b.image_policy);
    }
    let pipeline = quiet_pipeline(&registry, work);
    let steering = SteeringConfig::default();
    for task in tasks {
        for b in BASELINES {
            for run in 0..RUNS {
                registry.complete(&pipeline.generator_request(task, b, run, &steering)).map_err(|e| e.to_string())?;
            }
        }
    }
    let mut solomon = ResultSet::new();
    run_matrix(tasks, &pipeline, &matrix(Mode::Solomon, &GENERATORS), &mut solomon, None).map_err(|e| e.to_string())?;
    Ok(solomon)
}

/// Reuses a store recorded for the same tasks and personas, else records one.
fn fixtures(tasks: &[TaskSpec], reuse: bool) -> Result<(PathBuf, ResultSet, Option<f64>), String> {
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance-replay");
    let print = fingerprint(tasks);
    let stamp = root.join("fingerprint");
    let store = root.join("store");
    if reuse && std::fs::read_to_string(&stamp).is_ok_and(|s| s == print) {
        if let Ok(rs) = ResultSet::load(&root) {
            if rs.len() == tasks.len() * GENERATORS.len() {
                return Ok((store, rs, None));
            }
        }
    }
    let start = Instant::now();
    if root.exists() {
        std::fs::remove_dir_all(&root).map_err(|e| e.to_string())?;
    }
    std::fs::create_dir_all(&store).map_err(|e| e.to_string())?;
    let solomon = record(tasks, &store, root.join("work"))?;
    solomon.save(&root).map_err(|e| e.to_string())?;
    std::fs::remove_dir_all(root.join("work")).ok();
    std::fs::write(&stamp, print).map_err(|e| e.to_string())?;
    Ok((store, solomon, Some(start.elapsed().as_secs_f64())))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_default()
}

enum Failure {
    /// The reused store lacks a request, e.g. after a prompt change.
    StaleStore(String),
    Other(String),
}

impl From<String> for Failure {
    fn from(s: String) -> Self {
        Failure::Other(s)
    }
}

fn check(reuse: bool) -> Result<String, Failure> {
    let tasks = load_tasks(&crate::tasks_dir()).map_err(|e| e.to_string())?;
    if tasks.len() != 25 {
        return Err(format!("expected 25 tasks, found {}", tasks.len()).into());
    }
    let (store, recorded, record_secs) = fixtures(&tasks, reuse)?;

    let cfg = BackendsConfig::from_toml(CONFIG).map_err(|e| e.to_string())?;
    let registry = Registry::build(&cfg, &StoreMode::Replay(store), &|_| None).map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = OutputLayout::new(tmp.path());
    let pipeline = quiet_pipeline(&registry, out.work_dir());

    let start = Instant::now();
    let mut results = ResultSet::new();
    let base = run_matrix(&tasks, &pipeline, &matrix(Mode::Baseline, &BASELINES), &mut results, Some(&out)).map_err(|e| e.to_string())?;
    let sol = run_matrix(&tasks, &pipeline, &matrix(Mode::Solomon, &GENERATORS), &mut results, Some(&out)).map_err(|e| e.to_string())?;
    let replay_secs = start.elapsed();

    let n_base = tasks.len() * BASELINES.len() * RUNS as usize;
    let n_sol = tasks.len() * GENERATORS.len();
    if base.executed != n_base || sol.executed != n_sol || results.len() != n_base + n_sol {
        return Err(format!("executed {} baseline and {} solomon runs, {} records", base.executed, sol.executed, results.len()).into());
    }
    let pool = GENERATORS.len() * RUNS as usize;
    let mut categories: BTreeMap<Category, usize> = BTreeMap::new();
    for r in results.records() {
        if let Some(e) = &r.thought.backend_error {
            let msg = format!("{}: {e}", r.key);
            return Err(if record_secs.is_none() { Failure::StaleStore(msg) } else { Failure::Other(msg) });
        }
        *categories.entry(r.verdict.category).or_default() += 1;
        if r.key.mode == Mode::Solomon {
            if r.thought.pool_size != Some(pool) {
                return Err(format!("{}: pool size {:?}", r.key, r.thought.pool_size).into());
            }
            match recorded.get(&r.key) {
                Some(rec) if rec.verdict.category == r.verdict.category && rec.thought.request_digest == r.thought.request_digest => {}
                _ => return Err(format!("{}: replay differs from the recording", r.key).into()),
            }
        }
    }
    if categories.len() != Category::ALL.len() {
        return Err(format!("personas should reach every category, got {categories:?}").into());
    }

    let cats = task_categories(&tasks);
    let table = aggregate(&results, &cats, None).map_err(|e| e.to_string())?;
    if table.total() != (n_base + n_sol) as u64 {
        return Err(format!("table holds {} runs, results {}", table.total(), n_base + n_sol).into());
    }
    for row in table.rows() {
        let per_task = if row.mode == Mode::Baseline { u64::from(RUNS) } else { 1 };
        let tasks_in = row.task_category.map_or(tasks.len(), |c| tasks.iter().filter(|t| t.category == c).count()) as u64;
        let sum: u64 = row.counts.values().sum();
        let frac: f64 = row.fractions.values().sum();
        if row.total != tasks_in * per_task || sum != row.total || (frac - 1.0).abs() > 1e-9 {
            return Err(format!("row {:?} {} {}: total {}, sum {sum}, fractions {frac}", row.task_category, row.backend, row.mode, row.total).into());
        }
    }
    for backend in BASELINES {
        let expected = tasks.len() as u64 * u64::from(RUNS);
        let got: u64 = table.rows().iter().filter(|r| r.task_category.is_none() && r.backend == backend && r.mode == Mode::Baseline).map(|r| r.total).sum();
        if got != expected {
            return Err(format!("{backend}: {got} baseline runs, expected {expected}").into());
        }
    }

    let clock = FixedClock([2024, 1, 2, 3, 4, 5]);
    let files = ["index.html", "summary.csv", "table.json"];
    let mut renders = Vec::new();
    for _ in 0..2 {
        render_report(&results, &table, &tasks, &Overrides::new(), &out, &clock).map_err(|e| e.to_string())?;
        renders.push(files.map(|f| read(&out.report_dir().join(f))));
    }
    if renders[0] != renders[1] || renders[0].iter().any(Vec::is_empty) {
        return Err(Failure::Other("report output differs between two renders".into()));
    }
    let circle = find_task(&tasks, "Circle").map_err(|e| e.to_string())?;
    let html = String::from_utf8_lossy(&renders[0][0]);
    if !html.contains(&format!("id=\"task-{}\"", circle.id)) {
        return Err(Failure::Other("report lacks the per-task section".into()));
    }

    if replay_secs > REPLAY_BUDGET {
        return Err(format!("replay took {:.0} s, budget {} s", replay_secs.as_secs_f64(), REPLAY_BUDGET.as_secs()).into());
    }
    let recorded_note = record_secs.map_or("store reused".to_string(), |s| format!("store recorded in {s:.0} s"));
    let mix: Vec<String> = categories.iter().map(|(c, n)| format!("{c} {n}")).collect();
    Ok(format!(
        "{n_base} baseline and {n_sol} solomon records (pool size {pool}) replayed with zero network in {:.0} s ({recorded_note}); per-row counts conserve; report byte-identical across two renders; mix: {}",
        replay_secs.as_secs_f64(),
        mix.join(", ")
    ))
}

pub fn run() -> Check {
    let outcome = match check(true) {
        Err(Failure::StaleStore(_)) => check(false),
        o => o,
    };
    match outcome {
        Ok(d) => Check::Pass(d),
        Err(Failure::StaleStore(e) | Failure::Other(e)) => Check::Fail(e),
    }
}

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use layoutbench::benchmark::{
    aggregate, find_task, load_tasks, render_report, run_matrix, task_categories, write_task_dir, MatrixConfig, MatrixError, Mode, OutputLayout,
    OverrideFile, Overrides, ResultSet, TaskSpec, MANIFEST_FILE, RESULTS_FILE,
};
use layoutbench::evaluator::{classify_layout, Category, Verdict};
use layoutbench::gdsii::{flatten, parse_gdsii, Clock, DateTime, FixedClock, SystemClock, Top};
use layoutbench::llm::{BackendsConfig, Registry, StoreMode};
use layoutbench::orchestrator::{Pipeline, Sampling, Session, SteeringConfig};
use thiserror::Error;

use crate::args::{AuthorArgs, Command, EvaluateArgs, ExecArgs, InteractArgs, ModeArg, ReportArgs, RunArgs, StoreArgs};

/// Problems the user can fix by changing flags or files. Exit status 2.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn config(e: impl Display) -> anyhow::Error {
    ConfigError(e.to_string()).into()
}

pub const EXIT_CONFIG: u8 = 2;

/// Exit status of `evaluate` for each verdict.
pub fn category_exit_code(c: Category) -> u8 {
    match c {
        Category::Correct => 0,
        Category::ScalingError => 3,
        Category::PartiallyCorrect => 4,
        Category::ShapeError => 5,
        Category::RuntimeError => 6,
    }
}

pub fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Run(a) => run(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Report(a) => report(a),
        Command::Interact(a) => interact(a),
        Command::AuthorTruths(a) => author(a),
    }
}

fn tasks_from(dir: &Path, resolution: Option<u32>) -> Result<Vec<TaskSpec>> {
    if !dir.join(MANIFEST_FILE).is_file() {
        return Err(config(format!("no {MANIFEST_FILE} in task directory {}", dir.display())));
    }
    let mut tasks = load_tasks(dir).map_err(config)?;
    if let Some(px) = resolution {
        if px < 16 {
            return Err(config("--resolution must be at least 16"));
        }
        for t in &mut tasks {
            t.eval.resolution = px;
        }
    }
    Ok(tasks)
}

fn select(tasks: &[TaskSpec], ids: &[String]) -> Result<Vec<TaskSpec>> {
    if ids.is_empty() {
        return Ok(tasks.to_vec());
    }
    ids.iter().map(|id| find_task(tasks, id).cloned().map_err(config)).collect()
}

fn store_mode(store: &StoreArgs, out: &OutputLayout) -> StoreMode {
    let dir = |d: &Option<PathBuf>| d.clone().unwrap_or_else(|| out.replay_dir());
    match (&store.replay, &store.record) {
        (Some(d), _) => StoreMode::Replay(dir(d)),
        (None, Some(d)) => StoreMode::Record(dir(d)),
        (None, None) => StoreMode::Live,
    }
}

fn registry(cfg: &BackendsConfig, mode: &StoreMode) -> Result<Registry> {
    if let StoreMode::Replay(d) = mode {
        if !d.is_dir() {
            return Err(config(format!("replay store {} does not exist", d.display())));
        }
    }
    Registry::build(cfg, mode, &|var| std::env::var(var).ok()).map_err(config)
}

fn steering(path: &Option<PathBuf>) -> Result<SteeringConfig> {
    let s = match path {
        Some(p) => SteeringConfig::load(p).map_err(config)?,
        None => SteeringConfig::default(),
    };
    s.template().map_err(config)?;
    Ok(s)
}

fn pipeline<'a>(reg: &'a Registry, cfg: &BackendsConfig, out: &OutputLayout, exec: &ExecArgs) -> Result<Pipeline<'a>> {
    let mut p = Pipeline::new(reg, out.work_dir());
    if let Some(t) = exec.timeout {
        if !(t.is_finite() && t > 0.0) {
            return Err(config("--timeout must be a positive number of seconds"));
        }
        p.limits.timeout = Duration::from_secs_f64(t);
    }
    if let Some(w) = exec.workers {
        p.workers = w.max(1);
    }
    p.sampling = Sampling {
        generator_temperature: cfg.generator_temperature,
        assessor_temperature: cfg.assessor_temperature,
        max_output_tokens: cfg.max_output_tokens,
    };
    Ok(p)
}

fn out_dir(path: &Path) -> Result<OutputLayout> {
    std::fs::create_dir_all(path).map_err(|e| config(format!("output directory {} is not writable: {e}", path.display())))?;
    Ok(OutputLayout::new(path))
}

fn parse_clock(s: &str) -> Result<DateTime> {
    let parts: Vec<i16> = s
        .split(|c: char| !c.is_ascii_digit())
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<i16>())
        .collect::<Result<_, _>>()
        .map_err(|_| config(format!("bad time {s:?}; expected YYYY-MM-DDTHH:MM:SS")))?;
    let t: DateTime = parts.try_into().map_err(|_| config(format!("bad time {s:?}; expected YYYY-MM-DDTHH:MM:SS")))?;
    let ok = (1..=12).contains(&t[1]) && (1..=31).contains(&t[2]) && (0..24).contains(&t[3]) && (0..60).contains(&t[4]) && (0..61).contains(&t[5]);
    if !ok {
        return Err(config(format!("time {s:?} out of range")));
    }
    Ok(t)
}

fn clock(fixed: &Option<String>) -> Result<Box<dyn Clock>> {
    Ok(match fixed {
        Some(s) => Box::new(FixedClock(parse_clock(s)?)),
        None => Box::new(SystemClock),
    })
}

fn write_report(tasks: &[TaskSpec], results: &ResultSet, overrides: Option<&OverrideFile>, out: &OutputLayout, clock: &dyn Clock) -> Result<PathBuf> {
    let table = aggregate(results, &task_categories(tasks), overrides).map_err(config)?;
    let resolved = match overrides {
        Some(o) => o.resolve(results).map_err(config)?,
        None => Overrides::new(),
    };
    let bundle = render_report(results, &table, tasks, &resolved, out, clock)?;
    Ok(bundle.index_html)
}

fn tally(results: &ResultSet, mode: Mode) -> String {
    let mut counts: BTreeMap<Category, usize> = Category::ALL.iter().map(|c| (*c, 0)).collect();
    for r in results.records().filter(|r| r.key.mode == mode) {
        *counts.entry(r.verdict.category).or_default() += 1;
    }
    counts.iter().map(|(c, n)| format!("{c} {n}")).collect::<Vec<_>>().join(", ")
}

fn run(a: RunArgs) -> Result<u8> {
    let all = tasks_from(&a.tasks, a.exec.resolution)?;
    let tasks = select(&all, &a.tasks_filter)?;
    let cfg = BackendsConfig::load(&a.backends).map_err(config)?;
    let steering = steering(&a.steering)?;
    let clock = clock(&a.fixed_clock)?;
    if a.runs == 0 {
        return Err(config("--runs must be at least 1"));
    }
    let out = out_dir(&a.out)?;
    let reg = registry(&cfg, &store_mode(&a.store, &out))?;
    let p = pipeline(&reg, &cfg, &out, &a.exec)?;
    let mode = match a.mode {
        ModeArg::Baseline => Mode::Baseline,
        ModeArg::Solomon => Mode::Solomon,
    };
    let matrix = MatrixConfig {
        mode,
        generators: if mode == Mode::Baseline { cfg.baseline_ids() } else { cfg.generator_ids() },
        assessors: cfg.assessor_ids(),
        runs: a.runs,
        steering,
    };

    let mut results = ResultSet::load(&out.root)?;
    let snapshot = serde_json::json!({
        "backends": cfg,
        "tasks": a.tasks,
        "runs": a.runs,
        "generators": matrix.generators,
        "assessors": if mode == Mode::Solomon { matrix.assessors.clone() } else { Vec::new() },
        "steering": matrix.steering,
        "timeout_secs": p.limits.timeout.as_secs_f64(),
        "resolution": a.exec.resolution,
    });
    if !results.meta.config.is_object() {
        results.meta.config = serde_json::json!({});
    }
    results.meta.config[mode.as_str()] = snapshot;
    results.meta.clock_origin.get_or_insert_with(|| clock.now());

    let stats = match run_matrix(&tasks, &p, &matrix, &mut results, Some(&out)) {
        Ok(s) => s,
        Err(e @ (MatrixError::UnknownBackend(_) | MatrixError::NoAssessors | MatrixError::Orchestrator(_))) => return Err(config(e)),
        Err(e) => return Err(e.into()),
    };
    results.save(&out.root)?;
    println!(
        "{mode}: {} run(s) executed, {} already recorded; {} records in {}",
        stats.executed,
        stats.skipped,
        results.len(),
        out.path(RESULTS_FILE).display()
    );
    println!("{mode} verdicts: {}", tally(&results, mode));
    if !a.no_report {
        let index = write_report(&all, &results, None, &out, clock.as_ref())?;
        println!("report: {}", index.display());
    }
    Ok(0)
}

fn print_verdict(v: &Verdict) {
    println!("category: {}", v.category);
    println!("best_scale: {}", v.best_scale);
    println!("matched_ground_truth: {}", v.matched_ground_truth);
    println!("confidence: {:.3}", v.confidence);
    for (layer, score) in &v.per_layer_scores {
        println!("layer {layer}: {score:.4}");
    }
    for e in &v.evidence {
        println!("evidence: {e}");
    }
}

fn evaluate(a: EvaluateArgs) -> Result<u8> {
    let tasks = tasks_from(&a.tasks, a.resolution)?;
    let task = find_task(&tasks, &a.task).map_err(config)?;
    let verdict = std::fs::read(&a.gds)
        .map_err(|e| format!("cannot read {}: {e}", a.gds.display()))
        .and_then(|bytes| parse_gdsii(&bytes).map_err(|e| format!("unparseable GDSII: {e}")))
        .and_then(|p| flatten(&p.library, &Top::AllRoots).map_err(|e| format!("cannot flatten: {e}")))
        .and_then(|layout| classify_layout(&layout, &task.truths, &task.eval).map_err(|e| e.to_string()))
        .unwrap_or_else(Verdict::runtime_error);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&verdict)?);
    } else {
        print_verdict(&verdict);
    }
    Ok(category_exit_code(verdict.category))
}

fn report(a: ReportArgs) -> Result<u8> {
    let tasks = tasks_from(&a.tasks, None)?;
    if !a.out.join(RESULTS_FILE).is_file() {
        return Err(config(format!("no {RESULTS_FILE} in {}", a.out.display())));
    }
    let out = OutputLayout::new(&a.out);
    let results = ResultSet::load(&out.root)?;
    let overrides = a.overrides.as_deref().map(OverrideFile::load).transpose().map_err(config)?;
    let clock = clock(&a.fixed_clock)?;
    let index = write_report(&tasks, &results, overrides.as_ref(), &out, clock.as_ref())?;
    println!("{} records; report: {}", results.len(), index.display());
    Ok(0)
}

fn save_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

fn interact(a: InteractArgs) -> Result<u8> {
    let tasks = tasks_from(&a.tasks, a.exec.resolution)?;
    let task = find_task(&tasks, &a.task).map_err(config)?;
    let cfg = BackendsConfig::load(&a.backends).map_err(config)?;
    let steering = steering(&a.steering)?;
    let out = out_dir(&a.out)?;
    let reg = registry(&cfg, &store_mode(&a.store, &out))?;
    let p = pipeline(&reg, &cfg, &out, &a.exec)?;
    let backend = match a.backend {
        Some(b) => b,
        None => cfg.generator_ids().into_iter().next().ok_or_else(|| config("no backends configured"))?,
    };
    if !reg.contains(&backend) {
        return Err(config(format!("backend {backend} is not configured")));
    }
    let stem = format!("{}-{}", safe(&task.id), safe(&backend));
    let transcript_path = out.transcripts_dir().join(format!("{stem}.json"));
    let mut session = Session::new(&p, task, backend.clone(), steering);

    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    let mut stdout = std::io::stdout();
    println!("Task {} with backend {backend}.\n{}\n", task.id, task.prompt);
    println!("Press Enter to send the task prompt. After each attempt type feedback for the next one; 'quit' ends the session.");
    save_json(&transcript_path, session.transcript())?;
    loop {
        print!("> ");
        stdout.flush()?;
        let Some(line) = lines.next().transpose()? else { break };
        let line = line.trim();
        if matches!(line, "quit" | "exit" | ":q") {
            break;
        }
        let started = session.last().is_some();
        if started && line.is_empty() {
            println!("Type feedback for the next attempt, or 'quit'.");
            continue;
        }
        let turn = session.transcript().turns.len();
        let t = session.step(if started { Some(line) } else { None });
        let category = t.verdict.category;
        let status = t.status_label();
        let tail = t.error_log_tail(1200);
        let render = t.render.clone();
        println!("turn {turn}: {category} ({status})");
        if let Some(e) = &t.backend_error {
            println!("backend error: {e}");
        }
        if let Some(png) = render {
            let rel = format!("transcripts/{stem}/turn-{turn}.png");
            let path = out.path(&rel);
            std::fs::create_dir_all(path.parent().expect("render path has a parent"))?;
            std::fs::write(&path, png)?;
            session.set_render_file(rel);
            println!("render: {}", path.display());
        }
        if category == Category::RuntimeError && !tail.is_empty() {
            println!("error log tail:\n{tail}");
        }
        save_json(&transcript_path, session.transcript())?;
        if session.is_solved() {
            println!("Layout matches the ground truth. Give more feedback or type 'quit'.");
        }
    }
    save_json(&transcript_path, session.transcript())?;
    println!("transcript: {} ({} turn(s))", transcript_path.display(), session.transcript().turns.len());
    Ok(0)
}

fn author(a: AuthorArgs) -> Result<u8> {
    let written = write_task_dir(&a.tasks)?;
    let tasks = load_tasks(&a.tasks).context("authored tasks failed to load")?;
    println!("wrote {} files; {} tasks load and self-check", written.len(), tasks.len());
    Ok(0)
}

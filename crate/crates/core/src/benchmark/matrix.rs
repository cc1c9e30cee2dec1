use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use super::results::{write_atomic, Mode, ResultSet, ResultsError, RunKey, RunRecord, ThoughtSummary};
use super::TaskSpec;
use crate::evaluator::Verdict;
use crate::orchestrator::{OrchestratorError, Pipeline, PoolProvenance, SteeringConfig, Thought};
use crate::sandbox::parallel_map;

/// Where a run writes its files, all below one root.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        OutputLayout { root: root.into() }
    }

    pub fn renders_dir(&self) -> PathBuf {
        self.root.join("renders")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn transcripts_dir(&self) -> PathBuf {
        self.root.join("transcripts")
    }

    pub fn replay_dir(&self) -> PathBuf {
        self.root.join("replay-store")
    }

    pub fn pools_dir(&self) -> PathBuf {
        self.root.join("pools")
    }

    pub fn work_dir(&self) -> PathBuf {
        self.root.join("work")
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

pub(crate) fn file_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

/// Render path, relative to the output root, for one thought.
pub fn render_rel_path(task_id: &str, stem: &str) -> String {
    format!("renders/{}/{}.png", file_safe(task_id), file_safe(stem))
}

#[derive(Debug, Clone)]
pub struct MatrixConfig {
    pub mode: Mode,
    pub generators: Vec<String>,
    /// Solomon mode only.
    pub assessors: Vec<String>,
    pub runs: u32,
    pub steering: SteeringConfig,
}

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("backend {0} is not configured")]
    UnknownBackend(String),
    #[error("no assessor backends given for solomon mode")]
    NoAssessors,
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Results(#[from] ResultsError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatrixStats {
    pub executed: usize,
    pub skipped: usize,
}

#[derive(Serialize)]
struct PoolEntry<'a> {
    thought: ThoughtSummary,
    verdict: &'a Verdict,
}

#[derive(Serialize)]
struct PoolFile<'a> {
    task_id: &'a str,
    digest: String,
    provenance: &'a PoolProvenance,
    thoughts: Vec<PoolEntry<'a>>,
}

fn check_config(pipeline: &Pipeline, cfg: &MatrixConfig) -> Result<(), MatrixError> {
    if cfg.runs == 0 {
        return Err(OrchestratorError::NoRuns.into());
    }
    if cfg.generators.is_empty() {
        return Err(OrchestratorError::NoBackends.into());
    }
    if cfg.mode == Mode::Solomon && cfg.assessors.is_empty() {
        return Err(MatrixError::NoAssessors);
    }
    let assessors = if cfg.mode == Mode::Solomon { &cfg.assessors[..] } else { &[] };
    for id in cfg.generators.iter().chain(assessors) {
        if !pipeline.registry.contains(id) {
            return Err(MatrixError::UnknownBackend(id.clone()));
        }
    }
    cfg.steering.template()?;
    Ok(())
}

fn save_render(out: Option<&OutputLayout>, t: &Thought, rel: String) -> Option<String> {
    let (out, png) = (out?, t.render.as_ref()?);
    let path = out.path(&rel);
    match write_atomic(&path, png) {
        Ok(()) => Some(rel),
        Err(e) => {
            log::warn!("{e}");
            None
        }
    }
}

fn record_of(out: Option<&OutputLayout>, key: RunKey, t: &Thought, pool_size: Option<usize>) -> RunRecord {
    let stem = format!("{}-{}-{}", key.mode, key.backend_id, key.run);
    let mut thought = ThoughtSummary::of(t);
    thought.render_file = save_render(out, t, render_rel_path(&key.task_id, &stem));
    thought.pool_size = pool_size;
    RunRecord {
        key,
        thought,
        verdict: t.verdict.clone(),
    }
}

/// Runs every missing record of the matrix into `results`. Existing keys are
/// skipped, so an interrupted run resumes where it stopped. With `out`, renders
/// are written as they appear and the result set is saved after each task.
pub fn run_matrix(tasks: &[TaskSpec], pipeline: &Pipeline, cfg: &MatrixConfig, results: &mut ResultSet, out: Option<&OutputLayout>) -> Result<MatrixStats, MatrixError> {
    check_config(pipeline, cfg)?;
    let mut generators = cfg.generators.clone();
    generators.sort();
    generators.dedup();
    let mut stats = MatrixStats::default();
    for task in tasks {
        let before = stats.executed;
        match cfg.mode {
            Mode::Baseline => baseline_task(task, pipeline, cfg, &generators, results, out, &mut stats)?,
            Mode::Solomon => solomon_task(task, pipeline, cfg, &generators, results, out, &mut stats)?,
        }
        if stats.executed > before {
            if let Some(out) = out {
                results.save(&out.root)?;
            }
        }
    }
    Ok(stats)
}

fn baseline_task(
    task: &TaskSpec,
    pipeline: &Pipeline,
    cfg: &MatrixConfig,
    generators: &[String],
    results: &mut ResultSet,
    out: Option<&OutputLayout>,
    stats: &mut MatrixStats,
) -> Result<(), MatrixError> {
    let mut jobs = Vec::new();
    for b in generators {
        for run in 0..cfg.runs {
            let key = RunKey::new(&task.id, Mode::Baseline, b, run);
            if results.contains(&key) {
                stats.skipped += 1;
            } else {
                jobs.push(key);
            }
        }
    }
    let thoughts = parallel_map(&jobs, pipeline.workers, |k| pipeline.generate_one(task, &k.backend_id, k.run, &cfg.steering));
    for (key, t) in jobs.into_iter().zip(thoughts) {
        log::info!("{key}: {}", t.verdict.category);
        results.insert(record_of(out, key, &t, None))?;
        stats.executed += 1;
    }
    Ok(())
}

fn solomon_task(
    task: &TaskSpec,
    pipeline: &Pipeline,
    cfg: &MatrixConfig,
    generators: &[String],
    results: &mut ResultSet,
    out: Option<&OutputLayout>,
    stats: &mut MatrixStats,
) -> Result<(), MatrixError> {
    let mut missing = Vec::new();
    let mut assessors = cfg.assessors.clone();
    assessors.sort();
    assessors.dedup();
    for a in assessors {
        let key = RunKey::new(&task.id, Mode::Solomon, &a, 0);
        if results.contains(&key) {
            stats.skipped += 1;
        } else {
            missing.push(key);
        }
    }
    if missing.is_empty() {
        return Ok(());
    }
    let pool = pipeline.generate_pool(task, generators, cfg.runs, &cfg.steering)?;
    if let Some(out) = out {
        let entries = pool
            .thoughts
            .iter()
            .map(|t| {
                let mut s = ThoughtSummary::of(t);
                s.render_file = save_render(Some(out), t, render_rel_path(&task.id, &format!("pool-{}-{}", t.backend_id, t.run)));
                PoolEntry { thought: s, verdict: &t.verdict }
            })
            .collect();
        let file = PoolFile {
            task_id: &task.id,
            digest: pool.digest(),
            provenance: &pool.provenance,
            thoughts: entries,
        };
        let text = serde_json::to_string_pretty(&file).expect("pool serializes") + "\n";
        write_atomic(&pool_file(out, &task.id), text.as_bytes())?;
    }
    let refined = parallel_map(&missing, pipeline.workers, |k| pipeline.run_solomon(task, &pool, &k.backend_id, &cfg.steering));
    for (key, t) in missing.into_iter().zip(refined) {
        let t = t?;
        log::info!("{key}: {} (pool of {})", t.verdict.category, pool.thoughts.len());
        results.insert(record_of(out, key, &t, Some(pool.thoughts.len())))?;
        stats.executed += 1;
    }
    Ok(())
}

/// Location of the pool summary for `task_id`.
pub fn pool_file(out: &OutputLayout, task_id: &str) -> PathBuf {
    out.pools_dir().join(format!("{}.json", file_safe(task_id)))
}

//! Thought generation, assessment and the single-model baseline.
//!
//! A thought is one model answer carried through extraction, sanitizing,
//! execution, parsing, rendering and classification. Every stage failure
//! still yields a thought with a verdict.

mod interact;
mod prompt;

pub use interact::{Session, Transcript, TurnRecord};
pub use prompt::{build_assessor_prompt, generator_system_prompt, AssessorTemplate, Stage, SteeringConfig, GENERATOR_SYSTEM_PROMPT};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::TaskSpec;
use crate::evaluator::{classify, Verdict};
use crate::gdsii::{flatten, parse_gdsii, FlatLayout, Top};
use crate::geometry::{bounding_box, default_frame, render_layout_png};
use crate::llm::{sha256_hex, ChatRequest, ChatResponse, Message, Registry};
use crate::sandbox::{execute, extract_code, parallel_map, sanitize, ExecLimits, ExecStatus, ExecutionOutcome, ExtractWarning};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrchestratorError {
    #[error("thought pool for task {0} is empty")]
    EmptyPool(String),
    #[error("no generator backends given")]
    NoBackends,
    #[error("runs per backend must be at least 1")]
    NoRuns,
    #[error("steering: {0}")]
    Steering(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThoughtRole {
    Generator,
    Assessor,
    Interactive,
}

#[derive(Debug, Clone, Serialize)]
pub struct Thought {
    pub id: String,
    pub task_id: String,
    pub backend_id: String,
    pub run: u32,
    pub role: ThoughtRole,
    pub request_digest: Option<String>,
    pub response: Option<ChatResponse>,
    pub backend_error: Option<String>,
    pub code: Option<String>,
    pub extract_warnings: Vec<ExtractWarning>,
    pub outcome: Option<ExecutionOutcome>,
    /// Digest of the pool an assessor thought was built from.
    pub pool_ref: Option<String>,
    #[serde(skip)]
    pub layout: Option<FlatLayout>,
    #[serde(skip)]
    pub render: Option<Vec<u8>>,
    pub verdict: Verdict,
}

impl Thought {
    /// Short status for prompts and reports.
    pub fn status_label(&self) -> String {
        if let Some(e) = &self.backend_error {
            return format!("backend error ({e})");
        }
        if self.code.is_none() {
            return "no code block in the response".into();
        }
        match &self.outcome {
            Some(o) => match (o.status, o.exit_code) {
                (ExecStatus::NonzeroExit, Some(c)) => format!("nonzero_exit (code {c})"),
                (s, _) => s.to_string(),
            },
            None => "not executed".into(),
        }
    }

    /// Last bytes of stderr, or the backend error when the model never answered.
    pub fn error_log_tail(&self, max_bytes: usize) -> String {
        match (&self.outcome, &self.backend_error) {
            (Some(o), _) => o.stderr_tail(max_bytes),
            (None, Some(e)) => e.clone(),
            (None, None) => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolProvenance {
    pub system_prompt: String,
    pub task_prompt: String,
    pub backends: Vec<String>,
    pub runs_per_backend: u32,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub steering: SteeringConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThoughtPool {
    pub task_id: String,
    pub thoughts: Vec<Thought>,
    pub provenance: PoolProvenance,
}

impl ThoughtPool {
    /// Hash over thought ids and response digests, in pool order.
    pub fn digest(&self) -> String {
        let mut s = String::new();
        for t in &self.thoughts {
            s.push_str(&t.id);
            s.push('\0');
            s.push_str(t.request_digest.as_deref().unwrap_or("-"));
            s.push('\n');
        }
        sha256_hex(s.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampling {
    pub generator_temperature: f64,
    pub assessor_temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            generator_temperature: 1.0,
            assessor_temperature: 0.2,
            max_output_tokens: 4096,
        }
    }
}

/// Everything a thought needs besides the task: backends, sandbox limits and
/// where scratch directories go.
pub struct Pipeline<'a> {
    pub registry: &'a Registry,
    pub limits: ExecLimits,
    pub work_root: PathBuf,
    pub workers: usize,
    pub sampling: Sampling,
    /// Long-axis pixels of thought renders.
    pub render_px: u32,
}

fn path_safe(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

fn prepare_workdir(dir: &Path) -> std::io::Result<()> {
    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    std::fs::create_dir_all(dir)
}

/// Replaces the scratch directory in tracebacks with `.` so records do not
/// depend on where the run happened.
fn scrub_workdir(outcome: &mut ExecutionOutcome, dir: &Path) {
    let mut forms: Vec<String> = Vec::new();
    if let Ok(c) = dir.canonicalize() {
        forms.push(c.display().to_string());
    }
    if let Ok(a) = std::path::absolute(dir) {
        forms.push(a.display().to_string());
    }
    forms.push(dir.display().to_string());
    forms.sort_by_key(|f| std::cmp::Reverse(f.len()));
    for f in forms.iter().filter(|f| f.len() > 1) {
        outcome.stderr = outcome.stderr.replace(f.as_str(), ".");
        outcome.stdout = outcome.stdout.replace(f.as_str(), ".");
    }
}

pub struct Realized {
    pub code: Option<String>,
    pub extract_warnings: Vec<ExtractWarning>,
    pub outcome: Option<ExecutionOutcome>,
    pub layout: Option<FlatLayout>,
    pub render: Option<Vec<u8>>,
    pub verdict: Verdict,
}

impl<'a> Pipeline<'a> {
    pub fn new(registry: &'a Registry, work_root: impl Into<PathBuf>) -> Self {
        Pipeline {
            registry,
            limits: ExecLimits::default(),
            work_root: work_root.into(),
            workers: crate::sandbox::default_workers(),
            sampling: Sampling::default(),
            render_px: 512,
        }
    }

    fn workdir(&self, task: &TaskSpec, label: &str) -> PathBuf {
        self.work_root.join(path_safe(&task.id)).join(path_safe(label))
    }

    /// Extracts, sanitizes, runs and scores one model answer.
    pub fn realize(&self, task: &TaskSpec, label: &str, response_text: &str) -> Realized {
        let extracted = match extract_code(response_text) {
            Ok(x) => x,
            Err(e) => {
                return Realized {
                    code: None,
                    extract_warnings: Vec::new(),
                    outcome: None,
                    layout: None,
                    render: None,
                    verdict: Verdict::runtime_error(e.to_string()),
                }
            }
        };
        let clean = sanitize(&extracted.source, &self.limits.blocklist);
        let dir = self.workdir(task, label);
        let mut outcome = match prepare_workdir(&dir) {
            Ok(()) => execute(&clean.source, &self.limits, &dir),
            Err(e) => ExecutionOutcome::failed(ExecStatus::SpawnFailure, format!("cannot prepare {}: {e}", dir.display())),
        };
        outcome.sanitizer_hits = clean.hits;
        scrub_workdir(&mut outcome, &dir);
        let mut parse_error = None;
        let layout = match (outcome.status, outcome.primary_artifact()) {
            (ExecStatus::Ok, Some(a)) => match parse_gdsii(&a.bytes).map_err(|e| e.to_string()).and_then(|p| {
                flatten(&p.library, &Top::AllRoots).map_err(|e| e.to_string())
            }) {
                Ok(l) => Some(l),
                Err(e) => {
                    parse_error = Some(format!("artifact {} unreadable: {e}", a.name));
                    None
                }
            },
            _ => None,
        };
        let render = layout.as_ref().and_then(|l| {
            let bb = bounding_box(l)?;
            let frame = default_frame(&bb, self.render_px).ok()?;
            render_layout_png(l, &frame).map_err(|e| log::warn!("{}/{label}: render failed: {e}", task.id)).ok()
        });
        let verdict = match parse_error {
            Some(e) => Verdict::runtime_error(e),
            None => classify(&outcome, layout.as_ref(), &task.truths, &task.eval),
        };
        Realized {
            code: Some(clean.source),
            extract_warnings: extracted.warnings,
            outcome: Some(outcome),
            layout,
            render,
            verdict,
        }
    }

    pub fn generator_request(&self, task: &TaskSpec, backend: &str, run: u32, steering: &SteeringConfig) -> ChatRequest {
        ChatRequest {
            backend_id: backend.to_string(),
            system_prompt: generator_system_prompt(steering),
            messages: vec![Message::user(task.prompt.clone())],
            temperature: self.sampling.generator_temperature,
            max_output_tokens: self.sampling.max_output_tokens,
            seed: u64::from(run),
            request_tag: format!("{}/generate/{run}", task.id),
        }
    }

    /// Sends `req` and carries the answer through the whole pipeline.
    pub fn complete_and_realize(&self, task: &TaskSpec, req: &ChatRequest, id: String, run: u32, role: ThoughtRole, label: &str) -> Thought {
        let mut thought = Thought {
            id,
            task_id: task.id.clone(),
            backend_id: req.backend_id.clone(),
            run,
            role,
            request_digest: None,
            response: None,
            backend_error: None,
            code: None,
            extract_warnings: Vec::new(),
            outcome: None,
            pool_ref: None,
            layout: None,
            render: None,
            verdict: Verdict::runtime_error("no response"),
        };
        match self.registry.complete(req) {
            Ok((sent, resp)) => {
                thought.request_digest = Some(crate::llm::digest(&sent));
                let r = self.realize(task, label, &resp.text);
                thought.response = Some(resp);
                thought.code = r.code;
                thought.extract_warnings = r.extract_warnings;
                thought.outcome = r.outcome;
                thought.layout = r.layout;
                thought.render = r.render;
                thought.verdict = r.verdict;
            }
            Err(e) => {
                log::warn!("{}: {e}", req.request_tag);
                thought.request_digest = Some(crate::llm::digest(req));
                thought.verdict = Verdict::runtime_error(format!("backend error: {e}"));
                thought.backend_error = Some(e.to_string());
            }
        }
        thought
    }

    /// Run `run` of `backend` on `task` as a generator thought.
    pub fn generate_one(&self, task: &TaskSpec, backend: &str, run: u32, steering: &SteeringConfig) -> Thought {
        let req = self.generator_request(task, backend, run, steering);
        self.complete_and_realize(task, &req, format!("{backend}/{run}"), run, ThoughtRole::Generator, &format!("{backend}-{run}"))
    }

    /// `k` independent runs of one backend on one task.
    pub fn run_baseline(&self, task: &TaskSpec, backend: &str, k: u32, steering: &SteeringConfig) -> Result<Vec<Thought>, OrchestratorError> {
        if k == 0 {
            return Err(OrchestratorError::NoRuns);
        }
        let runs: Vec<u32> = (0..k).collect();
        Ok(parallel_map(&runs, self.workers, |r| self.generate_one(task, backend, *r, steering)))
    }

    /// Every (backend, run) pair, ordered by backend id then run.
    pub fn generate_pool(&self, task: &TaskSpec, backends: &[String], k: u32, steering: &SteeringConfig) -> Result<ThoughtPool, OrchestratorError> {
        if backends.is_empty() {
            return Err(OrchestratorError::NoBackends);
        }
        if k == 0 {
            return Err(OrchestratorError::NoRuns);
        }
        let mut sorted = backends.to_vec();
        sorted.sort();
        sorted.dedup();
        let jobs: Vec<(String, u32)> = sorted.iter().flat_map(|b| (0..k).map(move |r| (b.clone(), r))).collect();
        let thoughts = parallel_map(&jobs, self.workers, |(b, r)| self.generate_one(task, b, *r, steering));
        Ok(ThoughtPool {
            task_id: task.id.clone(),
            thoughts,
            provenance: PoolProvenance {
                system_prompt: generator_system_prompt(steering),
                task_prompt: task.prompt.clone(),
                backends: sorted,
                runs_per_backend: k,
                temperature: self.sampling.generator_temperature,
                max_output_tokens: self.sampling.max_output_tokens,
                steering: steering.clone(),
            },
        })
    }

    pub fn assessor_request(&self, task: &TaskSpec, pool: &ThoughtPool, assessor: &str, steering: &SteeringConfig) -> Result<ChatRequest, OrchestratorError> {
        let template = steering.template()?;
        build_assessor_prompt(
            task,
            pool,
            assessor,
            self.registry.supports_images(assessor),
            steering,
            &template,
            self.sampling.assessor_temperature,
            self.sampling.max_output_tokens,
        )
    }

    /// One assessor call over the pool, realized like any other thought.
    pub fn run_solomon(&self, task: &TaskSpec, pool: &ThoughtPool, assessor: &str, steering: &SteeringConfig) -> Result<Thought, OrchestratorError> {
        let req = self.assessor_request(task, pool, assessor, steering)?;
        let mut t = self.complete_and_realize(task, &req, format!("{assessor}/solomon"), 0, ThoughtRole::Assessor, &format!("solomon-{assessor}"));
        t.pool_ref = Some(pool.digest());
        Ok(t)
    }
}

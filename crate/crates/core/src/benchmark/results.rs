use std::collections::BTreeMap;
use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::Verdict;
use crate::gdsii::DateTime;
use crate::llm::{sha256_hex, TokenUsage};
use crate::orchestrator::Thought;
use crate::sandbox::ExtractWarning;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Solomon,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Solomon => "solomon",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "solomon" => Ok(Mode::Solomon),
            _ => Err(format!("unknown mode {s:?} (expected baseline or solomon)")),
        }
    }
}

/// Identity of one record. Written as `task/mode/backend/run`; backend ids
/// may themselves contain `/`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunKey {
    pub task_id: String,
    pub mode: Mode,
    pub backend_id: String,
    pub run: u32,
}

impl RunKey {
    pub fn new(task_id: impl Into<String>, mode: Mode, backend_id: impl Into<String>, run: u32) -> Self {
        RunKey {
            task_id: task_id.into(),
            mode,
            backend_id: backend_id.into(),
            run,
        }
    }
}

impl fmt::Display for RunKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.task_id, self.mode, self.backend_id, self.run)
    }
}

impl FromStr for RunKey {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("run key {s:?} is not task/mode/backend/run");
        let (task, rest) = s.split_once('/').ok_or_else(bad)?;
        let (mode, rest) = rest.split_once('/').ok_or_else(bad)?;
        let (backend, run) = rest.rsplit_once('/').ok_or_else(bad)?;
        if task.is_empty() || backend.is_empty() {
            return Err(bad());
        }
        Ok(RunKey {
            task_id: task.into(),
            mode: mode.parse()?,
            backend_id: backend.into(),
            run: run.parse().map_err(|_| bad())?,
        })
    }
}

/// What a record keeps of a thought. Timings are left out so that replayed
/// runs produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoughtSummary {
    pub thought_id: String,
    pub request_digest: Option<String>,
    pub usage: Option<TokenUsage>,
    pub backend_error: Option<String>,
    pub status: String,
    pub code_sha256: Option<String>,
    pub extract_warnings: Vec<ExtractWarning>,
    pub exit_code: Option<i32>,
    pub stderr_tail: String,
    pub sanitizer_hits: Vec<String>,
    pub artifact_names: Vec<String>,
    pub exec_warnings: Vec<String>,
    /// Render path relative to the output directory.
    pub render_file: Option<String>,
    pub pool_ref: Option<String>,
    pub pool_size: Option<usize>,
}

pub const STDERR_TAIL_BYTES: usize = 4096;

impl ThoughtSummary {
    pub fn of(t: &Thought) -> Self {
        let o = t.outcome.as_ref();
        ThoughtSummary {
            thought_id: t.id.clone(),
            request_digest: t.request_digest.clone(),
            usage: t.response.as_ref().map(|r| r.usage),
            backend_error: t.backend_error.clone(),
            status: t.status_label(),
            code_sha256: t.code.as_ref().map(|c| sha256_hex(c.as_bytes())),
            extract_warnings: t.extract_warnings.clone(),
            exit_code: o.and_then(|o| o.exit_code),
            stderr_tail: o.map(|o| o.stderr_tail(STDERR_TAIL_BYTES)).unwrap_or_default(),
            sanitizer_hits: o.map(|o| o.sanitizer_hits.clone()).unwrap_or_default(),
            artifact_names: o.map(|o| o.artifact_names.clone()).unwrap_or_default(),
            exec_warnings: o.map(|o| o.warnings.clone()).unwrap_or_default(),
            render_file: None,
            pool_ref: t.pool_ref.clone(),
            pool_size: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub key: RunKey,
    pub thought: ThoughtSummary,
    pub verdict: Verdict,
}

/// Run parameters stored next to the records.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ResultsMeta {
    pub config: serde_json::Value,
    /// Wall-clock instant of the first run written into this set.
    pub clock_origin: Option<DateTime>,
}

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("duplicate run key {0}")]
    DuplicateKey(RunKey),
    #[error("{path}:{line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
}

pub const RESULTS_FILE: &str = "results.jsonl";
pub const RESULTS_META_FILE: &str = "results_meta.json";

/// Run records keyed by (task, mode, backend, run).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultSet {
    records: BTreeMap<RunKey, RunRecord>,
    pub meta: ResultsMeta,
}

impl ResultSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, key: &RunKey) -> bool {
        self.records.contains_key(key)
    }

    pub fn get(&self, key: &RunKey) -> Option<&RunRecord> {
        self.records.get(key)
    }

    /// Records in key order.
    pub fn records(&self) -> impl Iterator<Item = &RunRecord> {
        self.records.values()
    }

    pub fn insert(&mut self, record: RunRecord) -> Result<(), ResultsError> {
        if self.records.contains_key(&record.key) {
            return Err(ResultsError::DuplicateKey(record.key));
        }
        self.records.insert(record.key.clone(), record);
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.records.values() {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, path: &Path) -> Result<Self, ResultsError> {
        let mut set = ResultSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: RunRecord = serde_json::from_str(line).map_err(|e| ResultsError::Corrupt {
                path: path.to_path_buf(),
                line: i + 1,
                reason: e.to_string(),
            })?;
            set.insert(rec)?;
        }
        Ok(set)
    }

    /// Reads `results.jsonl` and `results_meta.json` from `dir`. Missing files
    /// give an empty set.
    pub fn load(dir: &Path) -> Result<Self, ResultsError> {
        let path = dir.join(RESULTS_FILE);
        let mut set = match std::fs::read_to_string(&path) {
            Ok(text) => Self::from_jsonl(&text, &path)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => ResultSet::new(),
            Err(e) => return Err(ResultsError::Io(path, e)),
        };
        let meta_path = dir.join(RESULTS_META_FILE);
        match std::fs::read_to_string(&meta_path) {
            Ok(text) => {
                set.meta = serde_json::from_str(&text).map_err(|e| ResultsError::Corrupt {
                    path: meta_path,
                    line: 0,
                    reason: e.to_string(),
                })?
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(ResultsError::Io(meta_path, e)),
        }
        Ok(set)
    }

    pub fn save(&self, dir: &Path) -> Result<(), ResultsError> {
        write_atomic(&dir.join(RESULTS_FILE), self.to_jsonl().as_bytes())?;
        let meta = serde_json::to_string_pretty(&self.meta).expect("meta serializes") + "\n";
        write_atomic(&dir.join(RESULTS_META_FILE), meta.as_bytes())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ResultsError> {
    let io = |e| ResultsError::Io(path.to_path_buf(), e);
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

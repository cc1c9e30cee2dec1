use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluator::{classify_layout, Category, EvalOptions, GroundTruths, ViaRuleSet};
use crate::gdsii::{flatten, parse_gdsii, FlatLayout, Top};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskCategory {
    #[serde(rename = "basic_shapes_1")]
    BasicShapes1,
    #[serde(rename = "basic_shapes_2")]
    BasicShapes2,
    AdvancedShapes,
    ComplexStructures,
}

impl TaskCategory {
    pub const ALL: [TaskCategory; 4] = [Self::BasicShapes1, Self::BasicShapes2, Self::AdvancedShapes, Self::ComplexStructures];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BasicShapes1 => "basic_shapes_1",
            Self::BasicShapes2 => "basic_shapes_2",
            Self::AdvancedShapes => "advanced_shapes",
            Self::ComplexStructures => "complex_structures",
        }
    }
}

impl fmt::Display for TaskCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One `[[task]]` entry of `manifest.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub category: TaskCategory,
    pub prompt: String,
    /// GDSII files relative to the manifest directory; any of them is acceptable.
    pub ground_truths: Vec<PathBuf>,
    #[serde(default)]
    pub rules: Option<PathBuf>,
    #[serde(default)]
    pub eval: EvalOptions,
    #[serde(default)]
    pub low_confidence: bool,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, rename = "task")]
    pub tasks: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct TaskSpec {
    pub id: String,
    pub category: TaskCategory,
    pub prompt: String,
    pub ground_truth_files: Vec<PathBuf>,
    pub eval: EvalOptions,
    pub truths: GroundTruths,
    pub low_confidence: bool,
    pub notes: String,
}

impl TaskSpec {
    /// Task with in-memory truths, for tests and ad hoc evaluation.
    pub fn new(id: impl Into<String>, category: TaskCategory, prompt: impl Into<String>, truths: GroundTruths, eval: EvalOptions) -> Self {
        TaskSpec {
            id: id.into(),
            category,
            prompt: prompt.into(),
            ground_truth_files: Vec::new(),
            eval,
            truths,
            low_confidence: false,
            notes: String::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("invalid manifest {path}: {reason}")]
    ManifestInvalid { path: PathBuf, reason: String },
    #[error("ground truth {index} of task {task} does not classify correct against itself: {detail}")]
    GroundTruthFailsSelfCheck { task: String, index: usize, detail: String },
    #[error("unknown task {0}")]
    TaskUnknown(String),
}

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Reads a GDSII file and flattens every top-level structure.
pub fn load_layout(path: &Path) -> Result<FlatLayout, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let parsed = parse_gdsii(&bytes).map_err(|e| format!("{}: {e}", path.display()))?;
    flatten(&parsed.library, &Top::AllRoots).map_err(|e| format!("{}: {e}", path.display()))
}

/// Parses and validates the manifest in `dir`, loading every ground truth and
/// checking that each classifies correct against its own task.
pub fn load_tasks(dir: &Path) -> Result<Vec<TaskSpec>, TaskError> {
    let path = dir.join(MANIFEST_FILE);
    let invalid = |reason: String| TaskError::ManifestInvalid { path: path.clone(), reason };
    let text = std::fs::read_to_string(&path).map_err(|e| invalid(e.to_string()))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| invalid(e.to_string()))?;
    let mut seen = BTreeMap::new();
    let mut tasks = Vec::new();
    for entry in manifest.tasks {
        if seen.insert(entry.id.clone(), ()).is_some() {
            return Err(invalid(format!("duplicate task id {}", entry.id)));
        }
        if entry.prompt.trim().is_empty() {
            return Err(invalid(format!("task {} has an empty prompt", entry.id)));
        }
        if entry.ground_truths.is_empty() {
            return Err(invalid(format!("task {} lists no ground truth", entry.id)));
        }
        entry.eval.validate().map_err(|e| invalid(format!("task {}: {e}", entry.id)))?;
        let layouts = entry
            .ground_truths
            .iter()
            .map(|f| load_layout(&dir.join(f)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| invalid(format!("task {}: {e}", entry.id)))?;
        let rules = match &entry.rules {
            Some(f) => {
                let p = dir.join(f);
                let text = std::fs::read_to_string(&p).map_err(|e| invalid(format!("task {}: {}: {e}", entry.id, p.display())))?;
                Some(toml::from_str::<ViaRuleSet>(&text).map_err(|e| invalid(format!("task {}: {}: {e}", entry.id, p.display())))?)
            }
            None => None,
        };
        let task = TaskSpec {
            id: entry.id,
            category: entry.category,
            prompt: entry.prompt,
            ground_truth_files: entry.ground_truths,
            eval: entry.eval,
            truths: GroundTruths { layouts, rules },
            low_confidence: entry.low_confidence,
            notes: entry.notes,
        };
        self_check(&task)?;
        tasks.push(task);
    }
    Ok(tasks)
}

/// Every ground truth must classify correct against the task's own truths.
pub fn self_check(task: &TaskSpec) -> Result<(), TaskError> {
    for (i, layout) in task.truths.layouts.iter().enumerate() {
        let fail = |detail: String| TaskError::GroundTruthFailsSelfCheck {
            task: task.id.clone(),
            index: i,
            detail,
        };
        let v = classify_layout(layout, &task.truths, &task.eval).map_err(|e| fail(e.to_string()))?;
        if v.category != Category::Correct {
            return Err(fail(format!("{} ({})", v.category, v.evidence.join("; "))));
        }
    }
    Ok(())
}

pub fn find_task<'a>(tasks: &'a [TaskSpec], id: &str) -> Result<&'a TaskSpec, TaskError> {
    tasks.iter().find(|t| t.id == id).ok_or_else(|| TaskError::TaskUnknown(id.to_string()))
}

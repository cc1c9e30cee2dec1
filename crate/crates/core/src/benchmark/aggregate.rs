use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::results::{Mode, ResultSet, RunKey, RunRecord};
use super::{TaskCategory, TaskSpec};
use crate::evaluator::Category;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideEntry {
    /// Run key in `task/mode/backend/run` form.
    pub key: String,
    pub category: Category,
    #[serde(default)]
    pub note: String,
}

/// Reviewer corrections, one `[[override]]` table per record.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideFile {
    #[serde(default, rename = "override")]
    pub entries: Vec<OverrideEntry>,
}

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("override key {0} does not name a record")]
    UnknownOverrideKey(String),
    #[error("override key {0} appears twice")]
    DuplicateOverride(String),
    #[error("record {0} belongs to a task that is not loaded")]
    UnknownTask(String),
    #[error("override file {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Override {
    pub category: Category,
    pub note: String,
}

pub type Overrides = BTreeMap<RunKey, Override>;

impl OverrideFile {
    pub fn from_toml(text: &str) -> Result<Self, AggregateError> {
        toml::from_str(text).map_err(|e| AggregateError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, AggregateError> {
        let text = std::fs::read_to_string(path).map_err(|e| AggregateError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| AggregateError::Parse(format!("{}: {e}", path.display())))
    }

    /// Checks every key against `results`.
    pub fn resolve(&self, results: &ResultSet) -> Result<Overrides, AggregateError> {
        let mut map = Overrides::new();
        for e in &self.entries {
            let key: RunKey = e.key.parse().map_err(|_| AggregateError::UnknownOverrideKey(e.key.clone()))?;
            if !results.contains(&key) {
                return Err(AggregateError::UnknownOverrideKey(e.key.clone()));
            }
            let o = Override {
                category: e.category,
                note: e.note.clone(),
            };
            if map.insert(key, o).is_some() {
                return Err(AggregateError::DuplicateOverride(e.key.clone()));
            }
        }
        Ok(map)
    }
}

/// Category after applying any reviewer override.
pub fn effective_category(record: &RunRecord, overrides: &Overrides) -> Category {
    overrides.get(&record.key).map_or(record.verdict.category, |o| o.category)
}

/// Verdict counts for one (task category, backend, mode) cell.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counts([u64; 5]);

impl Counts {
    fn index(c: Category) -> usize {
        Category::ALL.iter().position(|x| *x == c).expect("category listed")
    }

    pub fn add(&mut self, c: Category) {
        self.0[Self::index(c)] += 1;
    }

    pub fn get(&self, c: Category) -> u64 {
        self.0[Self::index(c)]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn fraction(&self, c: Category) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.get(c) as f64 / n as f64,
        }
    }

    fn merge(&mut self, o: &Counts) {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    /// `None` for the row over all task categories.
    pub task_category: Option<TaskCategory>,
    pub backend: String,
    pub mode: Mode,
    pub total: u64,
    pub counts: BTreeMap<Category, u64>,
    pub fractions: BTreeMap<Category, f64>,
}

/// Verdict distribution per (task category, backend, mode). Rows are ordered
/// by category, then backend, then mode, so baseline and solomon bars of the
/// same backend sit next to each other.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryTable {
    cells: BTreeMap<(TaskCategory, String, Mode), Counts>,
}

impl CategoryTable {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, category: TaskCategory, backend: &str, mode: Mode) -> Option<&Counts> {
        self.cells.get(&(category, backend.to_string(), mode))
    }

    /// Counts over all task categories for each (backend, mode).
    pub fn overall(&self) -> BTreeMap<(String, Mode), Counts> {
        let mut m: BTreeMap<(String, Mode), Counts> = BTreeMap::new();
        for ((_, b, mode), c) in &self.cells {
            m.entry((b.clone(), *mode)).or_default().merge(c);
        }
        m
    }

    pub fn total(&self) -> u64 {
        self.cells.values().map(Counts::total).sum()
    }

    fn row(task_category: Option<TaskCategory>, backend: &str, mode: Mode, c: &Counts) -> TableRow {
        TableRow {
            task_category,
            backend: backend.to_string(),
            mode,
            total: c.total(),
            counts: Category::ALL.iter().map(|k| (*k, c.get(*k))).collect(),
            fractions: Category::ALL.iter().map(|k| (*k, c.fraction(*k))).collect(),
        }
    }

    /// Per-category rows followed by the overall rows.
    pub fn rows(&self) -> Vec<TableRow> {
        let mut rows: Vec<TableRow> = self.cells.iter().map(|((tc, b, m), c)| Self::row(Some(*tc), b, *m, c)).collect();
        rows.extend(self.overall().iter().map(|((b, m), c)| Self::row(None, b, *m, c)));
        rows
    }
}

pub fn task_categories(tasks: &[TaskSpec]) -> BTreeMap<String, TaskCategory> {
    tasks.iter().map(|t| (t.id.clone(), t.category)).collect()
}

/// Counts effective verdicts per cell. Overrides move records between
/// categories and never change totals.
pub fn aggregate(results: &ResultSet, categories: &BTreeMap<String, TaskCategory>, overrides: Option<&OverrideFile>) -> Result<CategoryTable, AggregateError> {
    let resolved = match overrides {
        Some(o) => o.resolve(results)?,
        None => Overrides::new(),
    };
    let mut table = CategoryTable::default();
    for r in results.records() {
        let tc = *categories.get(&r.key.task_id).ok_or_else(|| AggregateError::UnknownTask(r.key.to_string()))?;
        table
            .cells
            .entry((tc, r.key.backend_id.clone(), r.key.mode))
            .or_default()
            .add(effective_category(r, &resolved));
    }
    Ok(table)
}

//! The 25-task benchmark: manifest loading, run matrix, aggregation and reports.

mod aggregate;
mod matrix;
mod report;
mod results;
mod task;
mod truths;

pub use aggregate::{aggregate, effective_category, task_categories, AggregateError, CategoryTable, Counts, Override, OverrideEntry, OverrideFile, Overrides, TableRow};
pub use matrix::{pool_file, render_rel_path, run_matrix, MatrixConfig, MatrixError, MatrixStats, OutputLayout};
pub use report::{render_report, ReportBundle, ReportError, PLACEHOLDER_TAIL_BYTES, TRUTH_RENDER_PX};
pub use results::{Mode, ResultSet, ResultsError, ResultsMeta, RunKey, RunRecord, ThoughtSummary, RESULTS_FILE, RESULTS_META_FILE, STDERR_TAIL_BYTES};
pub use task::{find_task, load_layout, load_tasks, self_check, Manifest, ManifestEntry, TaskCategory, TaskError, TaskSpec, MANIFEST_FILE};
pub use truths::{author_tasks, prompts, render_manifest, via_rules, write_task_dir, AuthorError, AuthoredTask};

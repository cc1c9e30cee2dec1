use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use super::aggregate::{effective_category, CategoryTable, Overrides, TableRow};
use super::matrix::{file_safe, OutputLayout};
use super::results::{write_atomic, Mode, ResultSet, ResultsError, RunRecord};
use super::TaskSpec;
use crate::evaluator::Category;
use crate::gdsii::{Clock, DateTime};
use crate::geometry::{bounding_box, default_frame, render_layout_png};

pub const TRUTH_RENDER_PX: u32 = 256;
/// Bytes of stderr shown in a grid cell.
pub const PLACEHOLDER_TAIL_BYTES: usize = 600;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Write(#[from] ResultsError),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportBundle {
    pub index_html: PathBuf,
    pub summary_csv: PathBuf,
    pub table_json: PathBuf,
    pub truth_images: Vec<PathBuf>,
}

fn color(c: Category) -> &'static str {
    match c {
        Category::Correct => "#2e7d32",
        Category::ScalingError => "#f9a825",
        Category::PartiallyCorrect => "#64b5f6",
        Category::ShapeError => "#8e24aa",
        Category::RuntimeError => "#c62828",
    }
}

fn esc(s: &str) -> String {
    let mut o = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => o.push_str("&amp;"),
            '<' => o.push_str("&lt;"),
            '>' => o.push_str("&gt;"),
            '"' => o.push_str("&quot;"),
            '\'' => o.push_str("&#39;"),
            _ => o.push(ch),
        }
    }
    o
}

fn stamp(t: DateTime) -> String {
    format!("{:04}-{:02}-{:02} {:02}:{:02}:{:02}", t[0], t[1], t[2], t[3], t[4], t[5])
}

fn tail_chars(s: &str, max_bytes: usize) -> &str {
    if s.len() <= max_bytes {
        return s;
    }
    let mut start = s.len() - max_bytes;
    while !s.is_char_boundary(start) {
        start += 1;
    }
    &s[start..]
}

fn row_label(r: &TableRow) -> String {
    format!("{} ({})", r.backend, r.mode)
}

const BAR_W: f64 = 360.0;
const BAR_H: f64 = 16.0;
const LABEL_W: f64 = 260.0;

fn stacked_bars(title: &str, rows: &[&TableRow]) -> String {
    let h = 28.0 + rows.len() as f64 * (BAR_H + 6.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg class=\"bars\" xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{h:.0}\" role=\"img\" aria-label=\"{}\">",
        LABEL_W + BAR_W + 60.0,
        esc(title)
    );
    let _ = writeln!(s, "<text x=\"0\" y=\"16\" font-weight=\"bold\">{}</text>", esc(title));
    for (i, r) in rows.iter().enumerate() {
        let y = 26.0 + i as f64 * (BAR_H + 6.0);
        let _ = writeln!(s, "<text x=\"0\" y=\"{:.1}\" font-size=\"12\">{}</text>", y + 12.0, esc(&row_label(r)));
        let mut x = LABEL_W;
        for c in Category::ALL {
            let w = r.fractions[&c] * BAR_W;
            if w > 0.0 {
                let _ = writeln!(
                    s,
                    "<rect x=\"{x:.2}\" y=\"{y:.1}\" width=\"{w:.2}\" height=\"{BAR_H}\" fill=\"{}\"><title>{}: {} of {}</title></rect>",
                    color(c),
                    c,
                    r.counts[&c],
                    r.total
                );
            }
            x += w;
        }
        let _ = writeln!(s, "<text x=\"{:.0}\" y=\"{:.1}\" font-size=\"12\">n={}</text>", LABEL_W + BAR_W + 6.0, y + 12.0, r.total);
    }
    s.push_str("</svg>\n");
    s
}

fn legend() -> String {
    let mut s = String::from("<p class=\"legend\">");
    for c in Category::ALL {
        let _ = write!(s, "<span><i style=\"background:{}\"></i>{}</span> ", color(c), c);
    }
    s.push_str("</p>\n");
    s
}

fn placeholder(r: &RunRecord) -> String {
    let t = &r.thought;
    let text = if !t.stderr_tail.is_empty() {
        tail_chars(&t.stderr_tail, PLACEHOLDER_TAIL_BYTES).to_string()
    } else if let Some(e) = &t.backend_error {
        e.clone()
    } else {
        r.verdict.evidence.join("\n")
    };
    format!("<div class=\"err\"><b>{}</b><pre>{}</pre></div>", esc(&t.status), esc(&text))
}

fn cell(r: &RunRecord, overrides: &Overrides) -> String {
    let cat = effective_category(r, overrides);
    let mut label = format!("<span class=\"v\" style=\"color:{}\">{}</span>", color(cat), cat);
    if let Some(o) = overrides.get(&r.key) {
        let _ = write!(label, " <span class=\"ov\" title=\"{}\">(override; scored {})</span>", esc(&o.note), r.verdict.category);
    }
    let body = match (&r.thought.render_file, cat) {
        (_, Category::RuntimeError) => placeholder(r),
        (Some(f), _) => format!("<img src=\"../{}\" width=\"160\" alt=\"{}\">", esc(f), esc(&r.key.to_string())),
        (None, _) => "<div class=\"none\">no render</div>".to_string(),
    };
    format!("<td>{body}<br>{label}</td>")
}

const STYLE: &str = "body{font-family:sans-serif;margin:2em}table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:4px;vertical-align:top;text-align:center}\
pre{white-space:pre-wrap;text-align:left;font-size:10px;max-width:240px;max-height:200px;overflow:auto}.err{background:#fdecea;padding:4px}\
.none{color:#888;padding:2em 0}.ov{font-size:10px;color:#555}.legend span{margin-right:1em}.legend i{display:inline-block;width:12px;height:12px;margin-right:4px}\
.prompt{white-space:pre-wrap;background:#f5f5f5;max-width:none;font-size:12px}";

struct TaskSection<'a> {
    id: String,
    task: Option<&'a TaskSpec>,
    truths: Vec<String>,
}

fn task_section(sec: &TaskSection, records: &[&RunRecord], overrides: &Overrides) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "<section id=\"task-{}\">", esc(&file_safe(&sec.id)));
    match sec.task {
        Some(t) => {
            let _ = writeln!(s, "<h2>{} <small>{}</small></h2>", esc(&sec.id), t.category);
            let _ = writeln!(s, "<pre class=\"prompt\">{}</pre>", esc(&t.prompt));
        }
        None => {
            let _ = writeln!(s, "<h2>{} <small>task not loaded</small></h2>", esc(&sec.id));
        }
    }
    if !sec.truths.is_empty() {
        s.push_str("<p>Ground truth:");
        for (i, f) in sec.truths.iter().enumerate() {
            let _ = write!(s, " <img src=\"{}\" width=\"160\" alt=\"{} ground truth {i}\">", esc(f), esc(&sec.id));
        }
        s.push_str("</p>\n");
    }
    let runs: BTreeSet<u32> = records.iter().map(|r| r.key.run).collect();
    let mut rows: BTreeMap<(Mode, &str), BTreeMap<u32, &RunRecord>> = BTreeMap::new();
    for r in records {
        rows.entry((r.key.mode, r.key.backend_id.as_str())).or_default().insert(r.key.run, r);
    }
    if rows.is_empty() {
        s.push_str("<p>No runs recorded.</p>\n");
    } else {
        s.push_str("<table>\n<tr><th>mode</th><th>backend</th>");
        for run in &runs {
            let _ = write!(s, "<th>run {run}</th>");
        }
        s.push_str("</tr>\n");
        for ((mode, backend), by_run) in &rows {
            let _ = write!(s, "<tr><th>{mode}</th><th>{}</th>", esc(backend));
            for run in &runs {
                match by_run.get(run) {
                    Some(r) => s.push_str(&cell(r, overrides)),
                    None => s.push_str("<td></td>"),
                }
            }
            s.push_str("</tr>\n");
        }
        s.push_str("</table>\n");
    }
    s.push_str("</section>\n");
    s
}

#[derive(Serialize)]
struct TableJson<'a> {
    generated_at: String,
    records: usize,
    categories: Vec<&'static str>,
    rows: &'a [TableRow],
}

fn summary_csv(rows: &[TableRow]) -> Result<Vec<u8>, ReportError> {
    let err = |e: csv::Error| ReportError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["task_category".to_string(), "backend".into(), "mode".into(), "total".into()];
    header.extend(Category::ALL.iter().map(|c| c.to_string()));
    header.extend(Category::ALL.iter().map(|c| format!("frac_{c}")));
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![
            r.task_category.map_or("all".to_string(), |c| c.to_string()),
            r.backend.clone(),
            r.mode.to_string(),
            r.total.to_string(),
        ];
        rec.extend(Category::ALL.iter().map(|c| r.counts[c].to_string()));
        rec.extend(Category::ALL.iter().map(|c| format!("{:.4}", r.fractions[c])));
        w.write_record(&rec).map_err(err)?;
    }
    w.into_inner().map_err(|e| ReportError::Csv(e.to_string()))
}

fn truth_renders(task: &TaskSpec, dir: &std::path::Path) -> Vec<(PathBuf, String)> {
    let mut out = Vec::new();
    for (i, l) in task.truths.layouts.iter().enumerate() {
        let Some(bb) = bounding_box(l) else { continue };
        let Ok(frame) = default_frame(&bb, TRUTH_RENDER_PX) else { continue };
        match render_layout_png(l, &frame) {
            Ok(png) => {
                let name = format!("{}_{i}.png", file_safe(&task.id));
                let path = dir.join(&name);
                if let Err(e) = write_atomic(&path, &png) {
                    log::warn!("{e}");
                    continue;
                }
                out.push((path, format!("truths/{name}")));
            }
            Err(e) => log::warn!("{}: truth render failed: {e}", task.id),
        }
    }
    out
}

/// Writes `report/index.html`, `report/summary.csv`, `report/table.json` and
/// the ground-truth renders under `out`. Output depends only on the inputs and
/// the clock.
pub fn render_report(results: &ResultSet, table: &CategoryTable, tasks: &[TaskSpec], overrides: &Overrides, out: &OutputLayout, clock: &dyn Clock) -> Result<ReportBundle, ReportError> {
    let dir = out.report_dir();
    let generated_at = stamp(clock.now());
    let rows = table.rows();

    let mut by_task: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for r in results.records() {
        by_task.entry(r.key.task_id.as_str()).or_default().push(r);
    }

    let mut truth_images = Vec::new();
    let mut sections = Vec::new();
    for t in tasks {
        let rendered = truth_renders(t, &dir.join("truths"));
        sections.push(TaskSection {
            id: t.id.clone(),
            task: Some(t),
            truths: rendered.iter().map(|(_, rel)| rel.clone()).collect(),
        });
        truth_images.extend(rendered.into_iter().map(|(p, _)| p));
    }
    let known: BTreeSet<&str> = tasks.iter().map(|t| t.id.as_str()).collect();
    for id in by_task.keys().filter(|id| !known.contains(*id)) {
        sections.push(TaskSection {
            id: id.to_string(),
            task: None,
            truths: Vec::new(),
        });
    }

    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Layout benchmark report</title>\n");
    let _ = writeln!(html, "<style>{STYLE}</style>\n</head>\n<body>");
    let _ = writeln!(html, "<h1>Layout benchmark report</h1>\n<p>Generated {generated_at}. {} run records over {} tasks.</p>", results.len(), sections.len());
    html.push_str("<h2>Verdicts by task category</h2>\n");
    html.push_str(&legend());
    let mut groups: BTreeMap<Option<_>, Vec<&TableRow>> = BTreeMap::new();
    for r in &rows {
        groups.entry(r.task_category.map(|c| c.to_string())).or_default().push(r);
    }
    for (title, group) in groups.iter().filter(|(k, _)| k.is_some()).chain(groups.iter().filter(|(k, _)| k.is_none())) {
        html.push_str(&stacked_bars(title.as_deref().unwrap_or("all categories"), group));
    }
    html.push_str("<h2>Tasks</h2>\n<ul class=\"toc\">\n");
    for sec in &sections {
        let _ = writeln!(html, "<li><a href=\"#task-{}\">{}</a></li>", esc(&file_safe(&sec.id)), esc(&sec.id));
    }
    html.push_str("</ul>\n");
    for sec in &sections {
        let recs = by_task.get(sec.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        html.push_str(&task_section(sec, recs, overrides));
    }
    html.push_str("</body>\n</html>\n");

    let bundle = ReportBundle {
        index_html: dir.join("index.html"),
        summary_csv: dir.join("summary.csv"),
        table_json: dir.join("table.json"),
        truth_images,
    };
    write_atomic(&bundle.index_html, html.as_bytes())?;
    write_atomic(&bundle.summary_csv, &summary_csv(&rows)?)?;
    let tj = TableJson {
        generated_at,
        records: results.len(),
        categories: Category::ALL.iter().map(|c| c.as_str()).collect(),
        rows: &rows,
    };
    write_atomic(&bundle.table_json, (serde_json::to_string_pretty(&tj).expect("table serializes") + "\n").as_bytes())?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::aggregate::{aggregate, task_categories, OverrideFile};
    use crate::benchmark::results::tests::record;
    use crate::gdsii::FixedClock;
    use crate::orchestrator::tests::square_task;

    fn fixture() -> ResultSet {
        let mut rs = ResultSet::new();
        rs.insert(record("Square", Mode::Baseline, "m", 0, Category::Correct)).unwrap();
        let mut failed = record("Square", Mode::Baseline, "m", 1, Category::RuntimeError);
        failed.thought.status = "nonzero_exit (code 1)".into();
        failed.thought.stderr_tail = "Traceback (most recent call last):\nAttributeError: module 'gdspy' has no attribute <Round>\n".into();
        rs.insert(failed).unwrap();
        rs.insert(record("Square", Mode::Solomon, "m", 0, Category::PartiallyCorrect)).unwrap();
        rs
    }

    fn render(dir: &std::path::Path, ov: &Overrides) -> ReportBundle {
        let rs = fixture();
        let tasks = vec![square_task()];
        let table = aggregate(&rs, &task_categories(&tasks), None).unwrap();
        render_report(&rs, &table, &tasks, ov, &OutputLayout::new(dir), &FixedClock([2026, 3, 4, 5, 6, 7])).unwrap()
    }

    #[test]
    fn byte_stable_under_fixed_clock() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let (ra, rb) = (render(a.path(), &Overrides::new()), render(b.path(), &Overrides::new()));
        for (x, y) in [(&ra.index_html, &rb.index_html), (&ra.summary_csv, &rb.summary_csv), (&ra.table_json, &rb.table_json)] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let html = std::fs::read_to_string(&ra.index_html).unwrap();
        assert!(html.contains("Generated 2026-03-04 05:06:07."));
        assert_eq!(ra.truth_images.len(), 1);
    }

    #[test]
    fn runtime_error_cell_shows_escaped_stderr_tail() {
        let d = tempfile::tempdir().unwrap();
        let html = std::fs::read_to_string(render(d.path(), &Overrides::new()).index_html).unwrap();
        assert!(html.contains("<div class=\"err\"><b>nonzero_exit (code 1)</b><pre>Traceback"));
        assert!(html.contains("has no attribute &lt;Round&gt;"));
        assert_eq!(html.matches("<section id=\"task-").count(), 1);
        assert!(html.contains("src=\"truths/Square_0.png\""));
    }

    #[test]
    fn csv_and_overrides() {
        let d = tempfile::tempdir().unwrap();
        let rs = fixture();
        let ov = OverrideFile::from_toml("[[override]]\nkey = \"Square/solomon/m/0\"\ncategory = \"correct\"\nnote = \"fine\"\n")
            .unwrap()
            .resolve(&rs)
            .unwrap();
        let b = render(d.path(), &ov);
        let csv = std::fs::read_to_string(&b.summary_csv).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "task_category,backend,mode,total,correct,scaling_error,partially_correct,shape_error,runtime_error,frac_correct,frac_scaling_error,frac_partially_correct,frac_shape_error,frac_runtime_error"
        );
        assert_eq!(lines.next().unwrap(), "basic_shapes_1,m,baseline,2,1,0,0,0,1,0.5000,0.0000,0.0000,0.0000,0.5000");
        let html = std::fs::read_to_string(&b.index_html).unwrap();
        assert!(html.contains("(override; scored partially_correct)"));
    }

    #[test]
    fn stderr_tail_respects_char_boundaries() {
        assert_eq!(tail_chars("ab\u{e9}cd", 3), "cd");
        assert_eq!(tail_chars("abc", 10), "abc");
    }
}

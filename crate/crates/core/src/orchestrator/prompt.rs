use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{OrchestratorError, Thought, ThoughtPool};
use crate::benchmark::TaskSpec;
use crate::llm::{ChatRequest, Image, Message, Part, Role};

/// The fixed generator system prompt, kept byte-for-byte as a data asset.
pub const GENERATOR_SYSTEM_PROMPT: &str = include_str!("../../assets/prompts/generator_system.txt");

const DEFAULT_TEMPLATE: &str = include_str!("../../assets/prompts/assessor_v1.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    GeneratorSystemSuffix,
    AssessorGoal,
    AssessorFocus,
}

/// Human-edited steering file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteeringConfig {
    pub fragments: BTreeMap<Stage, String>,
    pub include_images: bool,
    pub max_thoughts: usize,
    pub error_log_tail_bytes: usize,
    /// Also show each generator's prose outside its code block.
    pub include_reasoning: bool,
    /// Replacement assessor template, relative to the steering file.
    pub assessor_template: Option<PathBuf>,
}

impl Default for SteeringConfig {
    fn default() -> Self {
        SteeringConfig {
            fragments: BTreeMap::new(),
            include_images: true,
            max_thoughts: 20,
            error_log_tail_bytes: 4096,
            include_reasoning: false,
            assessor_template: None,
        }
    }
}

impl SteeringConfig {
    pub fn fragment(&self, stage: Stage) -> &str {
        self.fragments.get(&stage).map_or("", String::as_str)
    }

    pub fn from_toml(text: &str) -> Result<Self, OrchestratorError> {
        let s: SteeringConfig = toml::from_str(text).map_err(|e| OrchestratorError::Steering(e.to_string()))?;
        if s.max_thoughts == 0 {
            return Err(OrchestratorError::Steering("max_thoughts must be at least 1".into()));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path).map_err(|e| OrchestratorError::Steering(format!("{}: {e}", path.display())))?;
        let mut s = Self::from_toml(&text)?;
        if let Some(t) = &s.assessor_template {
            s.assessor_template = Some(path.parent().unwrap_or(Path::new(".")).join(t));
        }
        Ok(s)
    }

    pub fn template(&self) -> Result<AssessorTemplate, OrchestratorError> {
        match &self.assessor_template {
            Some(p) => AssessorTemplate::load(p),
            None => Ok(AssessorTemplate::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessorTemplate {
    pub version: u32,
    pub preamble: String,
    pub request_header: String,
    pub thoughts_header: String,
    pub section: String,
    pub no_code: String,
    pub reasoning_header: String,
    pub stderr_header: String,
    pub image_caption: String,
    pub closing: String,
}

impl Default for AssessorTemplate {
    fn default() -> Self {
        toml::from_str(DEFAULT_TEMPLATE).expect("bundled assessor template parses")
    }
}

impl AssessorTemplate {
    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(path).map_err(|e| OrchestratorError::Steering(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| OrchestratorError::Steering(format!("{}: {e}", path.display())))
    }
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    vars.iter().fold(template.to_string(), |s, (k, v)| s.replace(&format!("{{{k}}}"), v))
}

/// Fence long enough not to be closed by any backtick run inside `body`.
fn fenced(lang: &str, body: &str) -> String {
    let longest = body.split(|c| c != '`').map(str::len).max().unwrap_or(0);
    let fence = "`".repeat(longest.max(2) + 1);
    let nl = if body.ends_with('\n') { "" } else { "\n" };
    format!("{fence}{lang}\n{body}{nl}{fence}\n")
}

pub fn generator_system_prompt(steering: &SteeringConfig) -> String {
    let suffix = steering.fragment(Stage::GeneratorSystemSuffix);
    if suffix.is_empty() {
        GENERATOR_SYSTEM_PROMPT.to_string()
    } else {
        format!("{GENERATOR_SYSTEM_PROMPT}\n{suffix}")
    }
}

struct PartsBuilder {
    parts: Vec<Part>,
}

impl PartsBuilder {
    fn text(&mut self, s: &str) {
        if let Some(Part::Text(last)) = self.parts.last_mut() {
            last.push_str(s);
        } else {
            self.parts.push(Part::Text(s.to_string()));
        }
    }
}

fn prose_outside_code(thought: &Thought) -> Option<String> {
    let text = &thought.response.as_ref()?.text;
    let prose = match &thought.code {
        Some(code) if !code.is_empty() => text.replacen(code.as_str(), "", 1),
        _ => text.clone(),
    };
    let prose = prose.trim();
    (!prose.is_empty()).then(|| prose.to_string())
}

/// Assessor request over the first `max_thoughts` thoughts in (backend, run) order.
pub fn build_assessor_prompt(
    task: &TaskSpec,
    pool: &ThoughtPool,
    assessor: &str,
    attach_images: bool,
    steering: &SteeringConfig,
    template: &AssessorTemplate,
    temperature: f64,
    max_output_tokens: u32,
) -> Result<ChatRequest, OrchestratorError> {
    if pool.thoughts.is_empty() {
        return Err(OrchestratorError::EmptyPool(task.id.clone()));
    }
    let mut ordered: Vec<&Thought> = pool.thoughts.iter().collect();
    ordered.sort_by(|a, b| (a.backend_id.as_str(), a.run).cmp(&(b.backend_id.as_str(), b.run)));
    ordered.truncate(steering.max_thoughts);

    let mut system = template.preamble.trim_start_matches('\n').to_string();
    let goal = steering.fragment(Stage::AssessorGoal);
    if !goal.is_empty() {
        system.push_str("\n\n");
        system.push_str(goal);
    }

    let mut b = PartsBuilder { parts: Vec::new() };
    b.text(&template.request_header);
    b.text(&task.prompt);
    b.text(&template.thoughts_header);
    let tail_bytes = steering.error_log_tail_bytes.to_string();
    for (i, t) in ordered.iter().enumerate() {
        let n = (i + 1).to_string();
        let run = t.run.to_string();
        let status = t.status_label();
        b.text(&fill(&template.section, &[("n", &n), ("backend", &t.backend_id), ("run", &run), ("status", &status)]));
        if steering.include_reasoning {
            if let Some(prose) = prose_outside_code(t) {
                b.text(&template.reasoning_header);
                b.text(&prose);
                b.text("\n");
            }
        }
        match &t.code {
            Some(code) => b.text(&fenced("python", code)),
            None => b.text(&template.no_code),
        }
        let tail = t.error_log_tail(steering.error_log_tail_bytes);
        if !tail.is_empty() {
            b.text(&fill(&template.stderr_header, &[("bytes", &tail_bytes)]));
            b.text(&fenced("text", &tail));
        }
        if attach_images && steering.include_images {
            if let Some(png) = &t.render {
                b.text(&fill(&template.image_caption, &[("n", &n)]));
                b.parts.push(Part::Image(Image { png: png.clone() }));
            }
        }
    }
    let focus = steering.fragment(Stage::AssessorFocus);
    if !focus.is_empty() {
        b.text("\n");
        b.text(focus);
    }
    b.text(&template.closing);

    Ok(ChatRequest {
        backend_id: assessor.to_string(),
        system_prompt: system,
        messages: vec![Message {
            role: Role::User,
            parts: b.parts,
        }],
        temperature,
        max_output_tokens,
        seed: 0,
        request_tag: format!("{}/assess/0", task.id),
    })
}

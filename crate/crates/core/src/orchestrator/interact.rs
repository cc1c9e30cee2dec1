use serde::Serialize;

use super::{generator_system_prompt, Pipeline, SteeringConfig, Thought, ThoughtRole};
use crate::benchmark::TaskSpec;
use crate::evaluator::{Category, Verdict};
use crate::llm::{normalize, ChatRequest, Message, NormalizedRequest};

#[derive(Debug, Clone, Serialize)]
pub struct TurnRecord {
    pub turn: u32,
    /// Human feedback that opened this turn; absent for the first request.
    pub feedback: Option<String>,
    pub request: NormalizedRequest,
    pub response_text: Option<String>,
    pub backend_error: Option<String>,
    pub verdict: Verdict,
    pub render_file: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Transcript {
    pub task_id: String,
    pub backend_id: String,
    pub turns: Vec<TurnRecord>,
}

/// A conversation with one backend about one task, steered by free-text feedback.
pub struct Session<'p, 'a> {
    pipeline: &'p Pipeline<'a>,
    task: &'p TaskSpec,
    backend: String,
    steering: SteeringConfig,
    messages: Vec<Message>,
    last: Option<Thought>,
    transcript: Transcript,
}

impl<'p, 'a> Session<'p, 'a> {
    pub fn new(pipeline: &'p Pipeline<'a>, task: &'p TaskSpec, backend: impl Into<String>, steering: SteeringConfig) -> Self {
        let backend = backend.into();
        Session {
            pipeline,
            task,
            transcript: Transcript {
                task_id: task.id.clone(),
                backend_id: backend.clone(),
                turns: Vec::new(),
            },
            backend,
            steering,
            messages: vec![Message::user(task.prompt.clone())],
            last: None,
        }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn last(&self) -> Option<&Thought> {
        self.last.as_ref()
    }

    pub fn is_solved(&self) -> bool {
        self.last.as_ref().is_some_and(|t| t.verdict.category == Category::Correct)
    }

    /// Feedback text for the next turn, with the error log appended when the
    /// previous script failed.
    fn feedback_message(&self, feedback: &str) -> String {
        let mut text = feedback.trim_end().to_string();
        if let Some(t) = &self.last {
            let tail = t.error_log_tail(self.steering.error_log_tail_bytes);
            if t.verdict.category == Category::RuntimeError && !tail.is_empty() {
                text.push_str("\n\nThe previous script failed. Error log:\n```text\n");
                text.push_str(&tail);
                if !tail.ends_with('\n') {
                    text.push('\n');
                }
                text.push_str("```");
            }
        }
        text
    }

    fn request(&self) -> ChatRequest {
        let turn = self.transcript.turns.len() as u32;
        ChatRequest {
            backend_id: self.backend.clone(),
            system_prompt: generator_system_prompt(&self.steering),
            messages: self.messages.clone(),
            temperature: self.pipeline.sampling.generator_temperature,
            max_output_tokens: self.pipeline.sampling.max_output_tokens,
            seed: u64::from(turn),
            request_tag: format!("{}/interact/{turn}", self.task.id),
        }
    }

    /// Runs one turn. The first call sends the task prompt; later calls append
    /// the previous answer and the feedback.
    pub fn step(&mut self, feedback: Option<&str>) -> &Thought {
        if let (Some(fb), Some(prev)) = (feedback, &self.last) {
            let answer = prev.response.as_ref().map(|r| r.text.clone()).unwrap_or_default();
            self.messages.push(Message::assistant(answer));
            let msg = self.feedback_message(fb);
            self.messages.push(Message::user(msg));
        }
        let turn = self.transcript.turns.len() as u32;
        let req = self.request();
        let thought = self.pipeline.complete_and_realize(
            self.task,
            &req,
            format!("{}/interact/{turn}", self.backend),
            turn,
            ThoughtRole::Interactive,
            &format!("interact-{}-{turn}", self.backend),
        );
        self.transcript.turns.push(TurnRecord {
            turn,
            feedback: feedback.map(str::to_string),
            request: normalize(&req),
            response_text: thought.response.as_ref().map(|r| r.text.clone()),
            backend_error: thought.backend_error.clone(),
            verdict: thought.verdict.clone(),
            render_file: None,
        });
        self.last.insert(thought)
    }

    pub fn set_render_file(&mut self, name: String) {
        if let Some(t) = self.transcript.turns.last_mut() {
            t.render_file = Some(name);
        }
    }
}

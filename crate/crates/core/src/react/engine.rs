use std::fmt;

use crate::domain::{AgentStep, DeclineReason, FinalMarker, MalformedReason, MemberOutcome, StepKind, Transcript, TranscriptNode};
use crate::llm::{Backend, ChatRequest, LlmError, Message, DEFAULT_TEMPERATURE};
use crate::tools::ToolRegistry;

use super::context::{compaction_point, context_budget_guard, ContextGuard, GuardMode, GuardVerdict};
use super::extract::{extract_probability, Extraction};
use super::parse::{parse_emission, ParsedEmission, OBSERVATION};
use super::prompt::{assemble_messages, system_message, FINALIZATION_INSTRUCTION};

pub const DEFAULT_MAX_ITERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("agent {0:?} has no tools")]
    EmptyRegistry(String),
    #[error("max_iterations must be at least 1")]
    ZeroIterations,
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Everything that fixes an agent's behavior apart from the backend.
#[derive(Debug, Clone)]
pub struct ReactConfig {
    pub agent_id: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub system_prompt: String,
    pub registry: ToolRegistry,
    pub max_iterations: usize,
    pub stop_sequences: Vec<String>,
    pub context_guard: Option<ContextGuard>,
    /// Whether to ask once more for a final answer after the last iteration.
    pub finalize_on_exhaustion: bool,
}

impl ReactConfig {
    pub fn new(
        agent_id: impl Into<String>,
        model_id: impl Into<String>,
        system_prompt: impl Into<String>,
        registry: ToolRegistry,
    ) -> Result<Self, ConfigError> {
        let agent_id = agent_id.into();
        if registry.is_empty() {
            return Err(ConfigError::EmptyRegistry(agent_id));
        }
        Ok(Self {
            agent_id,
            model_id: model_id.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: None,
            system_prompt: system_prompt.into(),
            registry,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            stop_sequences: vec![OBSERVATION.to_string()],
            context_guard: None,
            finalize_on_exhaustion: true,
        })
    }

    pub fn with_max_iterations(mut self, n: usize) -> Result<Self, ConfigError> {
        if n == 0 {
            return Err(ConfigError::ZeroIterations);
        }
        self.max_iterations = n;
        Ok(self)
    }

    pub fn with_temperature(mut self, t: f64) -> Result<Self, ConfigError> {
        // Validated the same way requests are.
        ChatRequest::new("m", vec![Message::user("x")])?.temperature(t)?;
        self.temperature = t;
        Ok(self)
    }

    pub fn with_max_tokens(mut self, n: Option<u32>) -> Result<Self, ConfigError> {
        ChatRequest::new("m", vec![Message::user("x")])?.max_tokens(n)?;
        self.max_tokens = n;
        Ok(self)
    }

    pub fn with_context_guard(mut self, guard: Option<ContextGuard>) -> Self {
        self.context_guard = guard;
        self
    }

    pub fn with_finalization(mut self, on: bool) -> Self {
        self.finalize_on_exhaustion = on;
        self
    }

    pub fn system_message(&self) -> String {
        system_message(&self.system_prompt, &self.registry)
    }

    fn request(&self, messages: Vec<Message>) -> Result<ChatRequest, LlmError> {
        Ok(ChatRequest::new(&self.model_id, messages)?
            .temperature(self.temperature)?
            .max_tokens(self.max_tokens)?
            .stop(self.stop_sequences.clone()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AbortReason {
    Backend(LlmError),
    Budget { estimate: usize, limit: usize },
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbortReason::Backend(e) => write!(f, "backend error: {e}"),
            AbortReason::Budget { estimate, limit } => {
                write!(f, "context budget exceeded: ~{estimate} tokens, limit {limit}")
            }
        }
    }
}

/// How an agent run ended, before any probability is read from it.
#[derive(Debug, Clone, PartialEq)]
pub enum AgentOutcome {
    Answer(String),
    /// Iterations ran out; holds the forced-finalization answer if one was
    /// obtained.
    Truncated(Option<String>),
    Aborted(AbortReason),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRun {
    pub outcome: AgentOutcome,
    pub tree: TranscriptNode,
}

/// Cuts a reply at the first stop sequence, in case the provider ignored it.
fn cut_at_stop<'a>(text: &'a str, stops: &[String]) -> &'a str {
    let end = stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    &text[..end]
}

fn corrective_observation(reason: MalformedReason, names: &[&str]) -> String {
    format!(
        "Invalid format: {reason}. Reply with either\nThought: ...\nAction: one of [{}]\nAction Input: ...\nor\nThought: ...\nFinal Answer: ...",
        names.join(", ")
    )
}

/// Runs the thought/action/observation loop for one task.
///
/// Each request is a pure function of the configuration, the task, and the
/// history so far, so replaying recorded responses reproduces the run.
pub fn run_agent(config: &ReactConfig, backend: &dyn Backend, task: &str) -> AgentRun {
    let system = config.system_message();
    let names = config.registry.names();
    let mut steps: Vec<AgentStep> = Vec::new();
    let mut children: Vec<TranscriptNode> = Vec::new();
    let mut omitted = 0usize;

    let finish = |steps: Vec<AgentStep>, children: Vec<TranscriptNode>, marker: FinalMarker, outcome: AgentOutcome| AgentRun {
        outcome,
        tree: TranscriptNode {
            transcript: Transcript {
                agent_id: config.agent_id.clone(),
                task: task.to_string(),
                steps,
                final_marker: marker,
            },
            parent_step: None,
            children,
        },
    };
    let abort = |steps, children, reason: AbortReason| {
        let marker = FinalMarker::Aborted { reason: reason.to_string() };
        finish(steps, children, marker, AgentOutcome::Aborted(reason))
    };

    // Builds the next context, applying the guard. Err carries the abort.
    let context = |steps: &[AgentStep], omitted: &mut usize, extra: Option<&str>| -> Result<Vec<Message>, AbortReason> {
        let build = |k: usize| {
            let mut m = assemble_messages(&system, task, steps, k);
            if let Some(extra) = extra {
                let last = m.last_mut().expect("context has a user message");
                last.content.push_str("\n\n");
                last.content.push_str(extra);
            }
            m
        };
        let Some(guard) = config.context_guard else {
            let messages = build(0);
            log::debug!("{}: context ~{} tokens", config.agent_id, super::context::estimate_message_tokens(&messages));
            return Ok(messages);
        };
        if guard.mode == GuardMode::Compact {
            *omitted = compaction_point(steps.len(), *omitted, guard.limit_tokens, build);
        }
        let messages = build(*omitted);
        log::debug!(
            "{}: context ~{} tokens, {} step(s) omitted",
            config.agent_id,
            super::context::estimate_message_tokens(&messages),
            *omitted
        );
        match context_budget_guard(&messages, guard.limit_tokens) {
            GuardVerdict::BudgetExceeded { estimate, limit } if guard.mode == GuardMode::Strict => {
                Err(AbortReason::Budget { estimate, limit })
            }
            _ => Ok(messages),
        }
    };

    for _ in 0..config.max_iterations {
        let messages = match context(&steps, &mut omitted, None) {
            Ok(m) => m,
            Err(reason) => return abort(steps, children, reason),
        };
        let reply = match config.request(messages).and_then(|r| backend.complete(&r)) {
            Ok(r) => r,
            Err(e) => return abort(steps, children, AbortReason::Backend(e)),
        };
        log::debug!(
            "{}: provider usage {} prompt / {} completion tokens",
            config.agent_id,
            reply.token_usage.prompt_tokens,
            reply.token_usage.completion_tokens
        );
        let emission = cut_at_stop(&reply.content, &config.stop_sequences).trim_end().to_string();
        match parse_emission(&emission, &names) {
            ParsedEmission::Final { thought, answer } => {
                let marker = FinalMarker::Answer {
                    emission,
                    thought,
                    answer_text: answer.clone(),
                    raw_value: None,
                };
                return finish(steps, children, marker, AgentOutcome::Answer(answer));
            }
            ParsedEmission::Action { thought, action, input } => {
                let tool = config.registry.get(&action).expect("parser only accepts registered names");
                let output = tool.invoke(&input);
                let index = steps.len();
                children.extend(output.children.into_iter().map(|mut c| {
                    c.parent_step = Some(index);
                    c
                }));
                steps.push(AgentStep {
                    emission,
                    kind: StepKind::Action { thought, tool: action, input },
                    observation: output.observation,
                });
            }
            ParsedEmission::Malformed(reason) => {
                steps.push(AgentStep {
                    emission,
                    kind: StepKind::Malformed { reason },
                    observation: corrective_observation(reason, &names),
                });
            }
        }
    }

    if !config.finalize_on_exhaustion {
        let marker = FinalMarker::Truncated { finalization: None, raw_value: None };
        return finish(steps, children, marker, AgentOutcome::Truncated(None));
    }
    let messages = match context(&steps, &mut omitted, Some(FINALIZATION_INSTRUCTION)) {
        Ok(m) => m,
        Err(reason) => return abort(steps, children, reason),
    };
    let reply = match config.request(messages).and_then(|r| backend.complete(&r)) {
        Ok(r) => r,
        Err(e) => return abort(steps, children, AbortReason::Backend(e)),
    };
    let text = cut_at_stop(&reply.content, &config.stop_sequences).trim_end().to_string();
    let answer = match parse_emission(&text, &names) {
        ParsedEmission::Final { answer, .. } => answer,
        _ => text.trim().to_string(),
    };
    let marker = FinalMarker::Truncated { finalization: Some(text), raw_value: None };
    finish(steps, children, marker, AgentOutcome::Truncated(Some(answer)))
}

/// A forecasting run: the member outcome plus its transcript tree.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactRun {
    pub outcome: MemberOutcome,
    pub tree: TranscriptNode,
    /// The backend error that stopped the run, if any.
    pub backend_error: Option<LlmError>,
}

/// Runs an agent and reads a probability from its answer.
pub fn run_react(config: &ReactConfig, backend: &dyn Backend, task: &str) -> ReactRun {
    let AgentRun { outcome, mut tree } = run_agent(config, backend, task);
    let mut backend_error = None;
    let (extraction, on_decline) = match outcome {
        AgentOutcome::Answer(text) => (extract_probability(&text), DeclineReason::NoNumber),
        AgentOutcome::Truncated(Some(text)) => (extract_probability(&text), DeclineReason::Truncated),
        AgentOutcome::Truncated(None) => (Extraction::Declined, DeclineReason::Truncated),
        AgentOutcome::Aborted(AbortReason::Budget { .. }) => (Extraction::Declined, DeclineReason::Budget),
        AgentOutcome::Aborted(AbortReason::Backend(e)) => {
            let reason = DeclineReason::Backend(e.to_string());
            backend_error = Some(e);
            (Extraction::Declined, reason)
        }
    };
    let outcome = match extraction {
        Extraction::Forecast { value, raw } => {
            match &mut tree.transcript.final_marker {
                FinalMarker::Answer { raw_value, .. } | FinalMarker::Truncated { raw_value, .. } => {
                    *raw_value = Some(raw);
                }
                FinalMarker::Aborted { .. } => {}
            }
            MemberOutcome::Forecast(value)
        }
        Extraction::Declined => MemberOutcome::Declined(on_decline),
    };
    ReactRun { outcome, tree, backend_error }
}

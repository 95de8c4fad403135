//! Two-level forecaster: a planner agent whose only tools are low-level
//! agents, each of which wraps raw tools.

use std::sync::Arc;

use chrono::{NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::Question;
use crate::llm::{Backend, DEFAULT_TEMPERATURE};
use crate::react::{
    render_task, run_agent, run_react, AbortReason, AgentOutcome, ConfigError, ContextGuard, GuardMode, ReactConfig,
    ReactRun, FORECASTING_PRINCIPLES,
};
use crate::tools::{
    truncate_observation, CodeTool, Sandbox, SearchProvider, SearchTool, ToolError, ToolKind, ToolOutput,
    ToolRegistry, ToolSpec, DEFAULT_OBSERVATION_BUDGET, DEFAULT_RESULTS, SEARCH_TOOL_NAME,
};

pub const WEB_RESEARCH: &str = "web_research";
pub const CODE_INTERPRETER: &str = "code_interpreter";
pub const CODE_TOOL_NAME: &str = "Python Interpreter";
pub const PLANNER_ID: &str = "planner";

pub const NO_FINAL_ANSWER: &str = "[subagent gave no final answer]";

const SEARCH_API_SCHEMA: &str = r#"{
  "endpoint": "POST https://google.serper.dev/search",
  "headers": {"X-API-KEY": "string, required", "Content-Type": "application/json"},
  "request": {
    "type": "object",
    "properties": {
      "q": {"type": "string", "description": "Search query text."},
      "num": {"type": "integer", "minimum": 1, "maximum": 100, "description": "Number of organic results to return."},
      "gl": {"type": "string", "description": "Two-letter country code for result localisation."},
      "hl": {"type": "string", "description": "Two-letter interface language code."},
      "tbs": {"type": "string", "description": "Time restriction, e.g. cdr:1,cd_min:M/D/YYYY,cd_max:M/D/YYYY."},
      "page": {"type": "integer", "minimum": 1, "description": "Result page number."}
    },
    "required": ["q"]
  },
  "response": {
    "type": "object",
    "properties": {
      "searchParameters": {"type": "object", "description": "Echo of the request parameters."},
      "knowledgeGraph": {"type": "object", "properties": {"title": {"type": "string"}, "type": {"type": "string"}, "description": {"type": "string"}, "attributes": {"type": "object"}}},
      "answerBox": {"type": "object", "properties": {"title": {"type": "string"}, "answer": {"type": "string"}, "snippet": {"type": "string"}}},
      "organic": {
        "type": "array",
        "items": {
          "type": "object",
          "properties": {
            "title": {"type": "string"},
            "link": {"type": "string", "format": "uri"},
            "snippet": {"type": "string"},
            "date": {"type": "string", "description": "Publication date when known, e.g. Jan 8, 2023."},
            "position": {"type": "integer"},
            "sitelinks": {"type": "array", "items": {"type": "object", "properties": {"title": {"type": "string"}, "link": {"type": "string"}}}}
          },
          "required": ["title", "link"]
        }
      },
      "peopleAlsoAsk": {"type": "array", "items": {"type": "object", "properties": {"question": {"type": "string"}, "snippet": {"type": "string"}, "link": {"type": "string"}}}},
      "relatedSearches": {"type": "array", "items": {"type": "object", "properties": {"query": {"type": "string"}}}}
    }
  },
  "errors": {"400": "malformed request", "401": "missing or invalid API key", "429": "rate limit exceeded", "5xx": "provider failure"}
}"#;

const CODE_API_SCHEMA: &str = r#"{
  "runtime": "CPython 3, standard library only, no network access",
  "request": {
    "type": "object",
    "properties": {
      "program": {"type": "string", "description": "Complete Python source. Markdown code fences are stripped. State does not persist between calls."}
    },
    "required": ["program"]
  },
  "limits": {
    "wall_time_seconds": 10,
    "output_characters": 8000,
    "filesystem": "fresh temporary working directory per call, removed afterwards"
  },
  "response": {
    "type": "object",
    "properties": {
      "stdout": {"type": "string", "description": "Captured standard output, truncated at the output limit."},
      "stderr": {"type": "string", "description": "Captured standard error, truncated at the output limit."},
      "exit_status": {"type": "integer", "description": "Process exit code; nonzero means the program failed."},
      "wall_time": {"type": "number", "description": "Elapsed seconds."}
    }
  },
  "errors": {
    "timeout": "the program exceeded the wall-time limit and was killed together with its children",
    "nonzero_exit": "the program raised or exited with a failure status; the tail of stderr is reported"
  },
  "usage_notes": [
    "Print every value you need; only printed output is returned.",
    "Import numpy or pandas only if installed; prefer the standard library (math, statistics, random, datetime).",
    "For simulations, fix a random seed so results are reproducible."
  ]
}"#;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HierarchyError {
    #[error("low-level agent {agent:?} holds agent tool {tool:?}; only raw tools are allowed")]
    NestedAgent { agent: String, tool: String },
    #[error("planner tool {0:?} is not a sub-agent")]
    RawToolInPlanner(String),
    #[error("cutoff {0} is in the future")]
    CutoffInFuture(NaiveDate),
    #[error("planner tools are bound to cutoff {bound}, not {requested}")]
    CutoffMismatch { bound: NaiveDate, requested: NaiveDate },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

/// Knobs shared by the planner and its sub-agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub planner_max_iterations: usize,
    pub subagent_max_iterations: usize,
    pub observation_budget: usize,
    pub search_results: usize,
    pub context_limit_tokens: usize,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            model_id: "gpt-4o".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: None,
            planner_max_iterations: 10,
            subagent_max_iterations: 5,
            observation_budget: DEFAULT_OBSERVATION_BUDGET,
            search_results: DEFAULT_RESULTS,
            context_limit_tokens: 16_000,
        }
    }
}

impl AgentSettings {
    fn config(&self, id: &str, prompt: String, registry: ToolRegistry, iterations: usize) -> Result<ReactConfig, ConfigError> {
        Ok(ReactConfig::new(id, &self.model_id, prompt, registry)?
            .with_max_iterations(iterations)?
            .with_temperature(self.temperature)?
            .with_max_tokens(self.max_tokens)?)
    }

    fn guard(&self, mode: GuardMode) -> Option<ContextGuard> {
        Some(ContextGuard { limit_tokens: self.context_limit_tokens, mode })
    }
}

/// Raw tools and the cutoff they are bound to.
#[derive(Clone)]
pub struct Toolkit {
    pub search: Arc<dyn SearchProvider>,
    pub sandbox: Sandbox,
    pub cutoff: NaiveDate,
}

impl Toolkit {
    pub fn search_tool(&self, settings: &AgentSettings) -> Result<ToolSpec, ToolError> {
        let handler = SearchTool::new(self.search.clone(), self.cutoff, settings.search_results, settings.observation_budget);
        let description = format!(
            "Google web search returning result titles and snippets published before {}. Input: a search query.\nAPI schema:\n{SEARCH_API_SCHEMA}",
            self.cutoff.format("%B %-d, %Y"),
        );
        ToolSpec::new(SEARCH_TOOL_NAME, description, ToolKind::Raw, Arc::new(handler))
    }

    pub fn code_tool(&self, settings: &AgentSettings) -> Result<ToolSpec, ToolError> {
        let handler = CodeTool::new(self.sandbox.clone(), settings.observation_budget);
        let description =
            format!("Runs a Python 3 program and returns what it prints. Input: a complete program.\nAPI schema:\n{CODE_API_SCHEMA}");
        ToolSpec::new(CODE_TOOL_NAME, description, ToolKind::Raw, Arc::new(handler))
    }
}

/// A ReAct agent over raw tools, offered to the planner as a single tool.
#[derive(Debug, Clone)]
pub struct LowLevelAgent {
    name: String,
    description: String,
    inner: ReactConfig,
    observation_budget: usize,
}

impl LowLevelAgent {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        inner: ReactConfig,
        observation_budget: usize,
    ) -> Result<Self, HierarchyError> {
        let name = name.into();
        if let Some(t) = inner.registry.iter().find(|t| t.kind() == ToolKind::Agent) {
            return Err(HierarchyError::NestedAgent { agent: name, tool: t.name().to_string() });
        }
        Ok(Self { name, description: description.into(), inner, observation_budget })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn inner(&self) -> &ReactConfig {
        &self.inner
    }

    /// Wraps the agent as a tool: the tool input becomes the agent's task and
    /// its final answer text becomes the observation.
    pub fn as_tool(&self, backend: Arc<dyn Backend>) -> Result<ToolSpec, HierarchyError> {
        let inner = self.inner.clone();
        let budget = self.observation_budget;
        let handler = move |input: &str| {
            let run = run_agent(&inner, backend.as_ref(), input);
            let text = match run.outcome {
                AgentOutcome::Answer(text) | AgentOutcome::Truncated(Some(text)) => truncate_observation(&text, budget),
                AgentOutcome::Truncated(None) => NO_FINAL_ANSWER.to_string(),
                AgentOutcome::Aborted(AbortReason::Backend(e)) => format!("[subagent error: {e}]"),
                AgentOutcome::Aborted(reason) => format!("[subagent error: {reason}]"),
            };
            ToolOutput { observation: text, children: vec![run.tree] }
        };
        Ok(ToolSpec::new(&self.name, &self.description, ToolKind::Agent, Arc::new(handler))?)
    }

    pub fn web_research(settings: &AgentSettings, toolkit: &Toolkit) -> Result<Self, HierarchyError> {
        let prompt = format!(
            "You are a research assistant. Use web search to gather facts for the request you are given. \
Only material published before {} can be found. Search again with different wording if results are thin. \
When you have enough, reply with Final Answer: a concise summary of the relevant facts, with dates and figures. \
Do not give a probability.",
            toolkit.cutoff.format("%B %-d, %Y")
        );
        let registry = ToolRegistry::new(vec![toolkit.search_tool(settings)?])?;
        let inner = settings
            .config(WEB_RESEARCH, prompt, registry, settings.subagent_max_iterations)?
            .with_finalization(false)
            .with_context_guard(settings.guard(GuardMode::Compact));
        Self::new(
            WEB_RESEARCH,
            "Researches a topic on the web and returns a short summary of what it found. Input: a plain-language research request.",
            inner,
            settings.observation_budget,
        )
    }

    pub fn code_interpreter(settings: &AgentSettings, toolkit: &Toolkit) -> Result<Self, HierarchyError> {
        let prompt = "You are a computation assistant. Write Python programs to carry out the computation you are given \
and print the values you need. Fix any errors and retry. When done, reply with Final Answer: the results and a \
one-line explanation of how they were obtained."
            .to_string();
        let registry = ToolRegistry::new(vec![toolkit.code_tool(settings)?])?;
        let inner = settings
            .config(CODE_INTERPRETER, prompt, registry, settings.subagent_max_iterations)?
            .with_finalization(false)
            .with_context_guard(settings.guard(GuardMode::Compact));
        Self::new(
            CODE_INTERPRETER,
            "Performs calculations or simulations in Python and reports the results. Input: a description of the computation, including any numbers it needs.",
            inner,
            settings.observation_budget,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentMode {
    /// Planner over sub-agents.
    Hierarchical,
    /// One agent holding every raw tool, with no history compaction.
    SingleAgent,
}

/// The top-level forecasting agent.
#[derive(Debug, Clone)]
pub struct PlannerConfig {
    pub react: ReactConfig,
    pub mode: AgentMode,
    /// Cutoff the tools were built with, when known.
    pub cutoff: Option<NaiveDate>,
}

impl PlannerConfig {
    /// A planner over the given sub-agents.
    pub fn new(react: ReactConfig, cutoff: Option<NaiveDate>) -> Result<Self, HierarchyError> {
        if let Some(t) = react.registry.iter().find(|t| t.kind() != ToolKind::Agent) {
            return Err(HierarchyError::RawToolInPlanner(t.name().to_string()));
        }
        Ok(Self { react, mode: AgentMode::Hierarchical, cutoff })
    }

    pub fn hierarchical(
        settings: &AgentSettings,
        subagents: &[LowLevelAgent],
        backend: Arc<dyn Backend>,
        cutoff: Option<NaiveDate>,
    ) -> Result<Self, HierarchyError> {
        let tools = subagents
            .iter()
            .map(|a| a.as_tool(backend.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let react = settings
            .config(PLANNER_ID, FORECASTING_PRINCIPLES.to_string(), ToolRegistry::new(tools)?, settings.planner_max_iterations)?
            .with_context_guard(settings.guard(GuardMode::Compact));
        Self::new(react, cutoff)
    }

    /// One agent holding the raw tools directly. History is never compacted:
    /// an over-budget context declines the question.
    pub fn single_agent(settings: &AgentSettings, tools: Vec<ToolSpec>, cutoff: Option<NaiveDate>) -> Result<Self, HierarchyError> {
        let react = settings
            .config(PLANNER_ID, FORECASTING_PRINCIPLES.to_string(), ToolRegistry::new(tools)?, settings.planner_max_iterations)?
            .with_context_guard(settings.guard(GuardMode::Strict));
        Ok(Self { react, mode: AgentMode::SingleAgent, cutoff })
    }

    /// The default forecaster for `mode` over `toolkit`.
    pub fn build(
        mode: AgentMode,
        settings: &AgentSettings,
        toolkit: &Toolkit,
        backend: Arc<dyn Backend>,
    ) -> Result<Self, HierarchyError> {
        match mode {
            AgentMode::Hierarchical => {
                let agents = [
                    LowLevelAgent::web_research(settings, toolkit)?,
                    LowLevelAgent::code_interpreter(settings, toolkit)?,
                ];
                Self::hierarchical(settings, &agents, backend, Some(toolkit.cutoff))
            }
            AgentMode::SingleAgent => {
                let tools = vec![toolkit.search_tool(settings)?, toolkit.code_tool(settings)?];
                Self::single_agent(settings, tools, Some(toolkit.cutoff))
            }
        }
    }
}

/// Forecasts one question: renders the task, runs the planner, and returns
/// the member outcome with the full transcript tree.
pub fn forecast_one(
    planner: &PlannerConfig,
    backend: &dyn Backend,
    q: &Question,
    cutoff: NaiveDate,
) -> Result<ReactRun, HierarchyError> {
    if cutoff > Utc::now().date_naive() {
        return Err(HierarchyError::CutoffInFuture(cutoff));
    }
    if let Some(bound) = planner.cutoff.filter(|b| *b != cutoff) {
        return Err(HierarchyError::CutoffMismatch { bound, requested: cutoff });
    }
    Ok(run_react(&planner.react, backend, &render_task(q)))
}

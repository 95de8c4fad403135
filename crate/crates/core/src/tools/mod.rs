//! The action space: tools behind one uniform contract, and the registry an
//! agent draws from.

mod render;
mod sandbox;
mod search;

use std::fmt;
use std::sync::Arc;

use crate::domain::TranscriptNode;

pub use render::{render_observation, truncate_observation, Render, TRUNCATION_MARKER};
pub use sandbox::{CodeTool, ExecResult, Sandbox, SandboxConfig};
pub use search::{
    search, FixtureSearchProvider, SearchProvider, SearchQuery, SearchResult, SearchTool,
    SerperSearch, DEFAULT_RESULTS, ENV_SEARCH_API_KEY, SEARCH_TOOL_NAME,
};

/// Default cap on observation text handed back to an agent, in characters.
pub const DEFAULT_OBSERVATION_BUDGET: usize = 4000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToolError {
    #[error("search query is empty")]
    EmptyQuery,
    #[error("search provider error: {0}")]
    Provider(String),
    #[error("invalid tool name {0:?}")]
    InvalidName(String),
    #[error("duplicate tool name {0:?}")]
    DuplicateName(String),
    #[error("execution timed out after {}", fmt_secs(*.0))]
    Timeout(std::time::Duration),
    #[error("execution failed with exit status {status}:\n{stderr_tail}")]
    NonzeroExit { status: i32, stderr_tail: String },
    #[error("sandbox error: {0}")]
    Sandbox(String),
}

pub(crate) fn fmt_secs(d: std::time::Duration) -> String {
    if d.subsec_nanos() == 0 {
        format!("{}s", d.as_secs())
    } else {
        format!("{:.1}s", d.as_secs_f64())
    }
}

/// What a tool hands back: observation text, plus transcripts of any agent
/// runs the tool performed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ToolOutput {
    pub observation: String,
    pub children: Vec<TranscriptNode>,
}

impl ToolOutput {
    pub fn text(observation: impl Into<String>) -> Self {
        Self {
            observation: observation.into(),
            children: Vec::new(),
        }
    }
}

pub trait ToolHandler: Send + Sync {
    fn invoke(&self, input: &str) -> ToolOutput;
}

impl<F> ToolHandler for F
where
    F: Fn(&str) -> ToolOutput + Send + Sync,
{
    fn invoke(&self, input: &str) -> ToolOutput {
        self(input)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToolKind {
    /// Calls an external API or interpreter directly.
    Raw,
    /// Runs another agent.
    Agent,
}

#[derive(Clone)]
pub struct ToolSpec {
    name: String,
    description: String,
    kind: ToolKind,
    handler: Arc<dyn ToolHandler>,
}

impl fmt::Debug for ToolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolSpec")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .finish_non_exhaustive()
    }
}

impl ToolSpec {
    /// Names must be non-empty single lines without surrounding whitespace
    /// so they survive the `Action:` line verbatim.
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        kind: ToolKind,
        handler: Arc<dyn ToolHandler>,
    ) -> Result<Self, ToolError> {
        let name = name.into();
        if name.is_empty() || name.contains(['\n', '\r']) || name.trim() != name {
            return Err(ToolError::InvalidName(name));
        }
        Ok(Self {
            name,
            description: description.into(),
            kind,
            handler,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn kind(&self) -> ToolKind {
        self.kind
    }

    pub fn invoke(&self, input: &str) -> ToolOutput {
        self.handler.invoke(input)
    }
}

/// Tools with unique names, in registration order.
#[derive(Debug, Clone, Default)]
pub struct ToolRegistry {
    tools: Vec<ToolSpec>,
}

impl ToolRegistry {
    pub fn new(tools: Vec<ToolSpec>) -> Result<Self, ToolError> {
        let mut reg = Self::default();
        for t in tools {
            reg.register(t)?;
        }
        Ok(reg)
    }

    pub fn register(&mut self, tool: ToolSpec) -> Result<(), ToolError> {
        if self.get(tool.name()).is_some() {
            return Err(ToolError::DuplicateName(tool.name().to_string()));
        }
        self.tools.push(tool);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.tools.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ToolSpec> {
        self.tools.iter()
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }
}

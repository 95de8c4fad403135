use std::fmt;

use serde::{Deserialize, Serialize};

/// Why a model emission did not fit the ReAct block grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MalformedReason {
    NoKeyword,
    UnknownTool,
    MissingInput,
}

impl fmt::Display for MalformedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MalformedReason::NoKeyword => "no `Action:` or `Final Answer:` line found",
            MalformedReason::UnknownTool => "the `Action:` line does not name an available tool",
            MalformedReason::MissingInput => "`Action:` is not followed by an `Action Input:` line",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepKind {
    Action {
        thought: String,
        tool: String,
        input: String,
    },
    Malformed {
        reason: MalformedReason,
    },
}

/// One model emission and the observation that answered it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub emission: String,
    #[serde(flatten)]
    pub kind: StepKind,
    pub observation: String,
}

impl AgentStep {
    pub fn action_input(&self) -> Option<&str> {
        match &self.kind {
            StepKind::Action { input, .. } => Some(input),
            StepKind::Malformed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FinalMarker {
    /// The agent emitted `Final Answer:`.
    Answer {
        emission: String,
        thought: String,
        answer_text: String,
        /// Probability before clamping, when one was extracted.
        raw_value: Option<f64>,
    },
    /// Iterations ran out. `finalization` holds the forced-finalization reply
    /// when one was requested.
    Truncated {
        finalization: Option<String>,
        raw_value: Option<f64>,
    },
    /// The run stopped early (backend failure or context budget).
    Aborted { reason: String },
}

/// The interaction history of one agent run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub agent_id: String,
    pub task: String,
    pub steps: Vec<AgentStep>,
    #[serde(rename = "final")]
    pub final_marker: FinalMarker,
}

impl Transcript {
    /// Number of model emissions, including the final or finalization one.
    pub fn emission_count(&self) -> usize {
        self.steps.len()
            + match &self.final_marker {
                FinalMarker::Answer { .. } => 1,
                FinalMarker::Truncated { finalization, .. } => usize::from(finalization.is_some()),
                FinalMarker::Aborted { .. } => 0,
            }
    }

    /// Plain-text form: exact emissions and observations in order.
    pub fn render_text(&self) -> String {
        let mut out = format!("agent: {}\ntask:\n{}\n", self.agent_id, self.task);
        for (i, step) in self.steps.iter().enumerate() {
            out.push_str(&format!("\n=== emission {} ===\n{}\n", i + 1, step.emission));
            out.push_str(&format!("=== observation {} ===\n{}\n", i + 1, step.observation));
        }
        match &self.final_marker {
            FinalMarker::Answer { emission, .. } => {
                out.push_str(&format!("\n=== final ===\n{emission}\n"));
            }
            FinalMarker::Truncated { finalization, .. } => {
                out.push_str("\n=== truncated ===\n");
                if let Some(text) = finalization {
                    out.push_str(&format!("=== finalization ===\n{text}\n"));
                }
            }
            FinalMarker::Aborted { reason } => {
                out.push_str(&format!("\n=== aborted ===\n{reason}\n"));
            }
        }
        out
    }
}

/// A transcript plus the transcripts of sub-agents it invoked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptNode {
    pub transcript: Transcript,
    /// Index of the parent step whose action spawned this run.
    pub parent_step: Option<usize>,
    pub children: Vec<TranscriptNode>,
}

impl TranscriptNode {
    pub fn leaf(transcript: Transcript) -> Self {
        Self {
            transcript,
            parent_step: None,
            children: Vec::new(),
        }
    }

    /// Depth of the tree; a lone transcript has depth 1.
    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(TranscriptNode::depth).max().unwrap_or(0)
    }

    /// Total number of transcripts in the tree.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(TranscriptNode::size).sum::<usize>()
    }
}

use serde::{Deserialize, Serialize};

use super::{Backend, ChatRequest, LlmError, Message};

pub const PROBE_PREFIX: &str = "Answer this question without searching the web: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeResult {
    Leaked,
    CutoffRespected,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub result: ProbeResult,
    pub reply: String,
    /// Which rule decided the classification.
    pub rule: String,
}

const CUTOFF_PATTERNS: &[&str] = &[
    "knowledge cutoff",
    "knowledge cut-off",
    "cutoff date",
    "cut-off date",
    "training data",
    "my last update",
    "my training",
    "as of my knowledge",
    "i don't have information",
    "i do not have information",
    "i don't have access to real-time",
    "i cannot browse",
    "after my cutoff",
];

/// Asks `question` with the no-search prefix and classifies the reply.
///
/// A reply containing `expected_answer` (case-insensitive) is `Leaked`; an
/// explicit statement about the model's cutoff is `CutoffRespected`;
/// anything else, including an empty reply, is `Inconclusive`.
pub fn leakage_probe(
    backend: &dyn Backend,
    model_id: &str,
    question: &str,
    expected_answer: Option<&str>,
) -> Result<ProbeOutcome, LlmError> {
    let req = ChatRequest::new(model_id, vec![Message::user(format!("{PROBE_PREFIX}{question}"))])?;
    let reply = backend.complete(&req)?.content;
    let outcome = classify(&reply, expected_answer);
    log::info!("leakage probe {question:?}: {:?} ({})", outcome.result, outcome.rule);
    Ok(outcome)
}

fn classify(reply: &str, expected_answer: Option<&str>) -> ProbeOutcome {
    let lower = reply.to_lowercase();
    let done = |result, rule: String| ProbeOutcome {
        result,
        reply: reply.to_string(),
        rule,
    };
    if lower.trim().is_empty() {
        return done(ProbeResult::Inconclusive, "empty reply".into());
    }
    if let Some(ans) = expected_answer.map(str::trim).filter(|a| !a.is_empty()) {
        if lower.contains(&ans.to_lowercase()) {
            return done(ProbeResult::Leaked, format!("reply names {ans:?}"));
        }
    }
    if let Some(p) = CUTOFF_PATTERNS.iter().find(|p| lower.contains(*p)) {
        return done(ProbeResult::CutoffRespected, format!("cutoff statement {p:?}"));
    }
    done(ProbeResult::Inconclusive, "no rule matched".into())
}

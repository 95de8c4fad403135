use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::jsonl;
use crate::llm::{leakage_probe, Backend, ProbeResult};

/// A probe question. `expected_answer` is the post-cutoff fact whose
/// appearance in the reply counts as leakage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeQuestion {
    pub question: String,
    #[serde(default, alias = "cutoff_hint")]
    pub expected_answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub question: String,
    /// `None` when the backend failed.
    pub result: Option<ProbeResult>,
    pub rule: Option<String>,
    pub error: Option<String>,
}

impl ProbeRow {
    pub fn line(&self) -> String {
        match (&self.result, &self.error) {
            (Some(r), _) => format!("{r:?}\t{}\t{}", self.question, self.rule.as_deref().unwrap_or_default()),
            (None, e) => format!("Error\t{}\t{}", self.question, e.as_deref().unwrap_or_default()),
        }
    }
}

/// Runs the leakage probe over every question in `file`. Backend errors are
/// reported per question.
pub fn cmd_probe(file: &Path, backend: &dyn Backend, model_id: &str) -> Result<Vec<ProbeRow>, PipelineError> {
    let questions: Vec<ProbeQuestion> = jsonl::read(file)?;
    if questions.is_empty() {
        return Err(PipelineError::Empty("no probes".into()));
    }
    Ok(questions
        .into_iter()
        .map(|q| match leakage_probe(backend, model_id, &q.question, q.expected_answer.as_deref()) {
            Ok(o) => ProbeRow { question: q.question, result: Some(o.result), rule: Some(o.rule), error: None },
            Err(e) => {
                log::warn!("probe {:?} failed: {e}", q.question);
                ProbeRow { question: q.question, result: None, rule: None, error: Some(e.to_string()) }
            }
        })
        .collect())
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::Category;
use crate::llm::{Backend, ChatRequest, LlmError, Message};

pub const FILTER_PROMPT: &str = "\
You screen prediction-market questions for a forecasting benchmark.
Reply \"Yes\" only if both of these hold:
1. The question can be answered with a plain yes or no.
2. It asks about an event in the outside world, as most people asking or answering it would read it, \
rather than about the market itself, its creator, or a private matter.
Otherwise reply \"No\". Reply with one word.

Question: ";

pub const CATEGORY_PROMPT: &str = "\
Assign the question below to exactly one of these categories:
Economics & Business
Politics & Governance
Science & Tech
Arts & Recreation
Sports
Security & Defense
Healthcare & Biology
Environment & Energy
Social Sciences
Reply with the category name only.

Question: ";

/// Model settings for screening and labelling questions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judge {
    pub model_id: String,
    pub temperature: f64,
}

impl Judge {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self { model_id: model_id.into(), temperature: 0.0 }
    }

    fn ask(&self, backend: &dyn Backend, prompt: String) -> Result<String, LlmError> {
        let req = ChatRequest::new(&self.model_id, vec![Message::user(prompt)])?.temperature(self.temperature)?;
        Ok(backend.complete(&req)?.content)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Keep,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub verdict: Verdict,
    /// The last reply received, verbatim.
    pub judge_reply: String,
    /// Why a drop was not a clean "no".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// First word of a reply, case-folded, without surrounding punctuation.
fn first_word(reply: &str) -> String {
    reply
        .split_whitespace()
        .next()
        .unwrap_or_default()
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Asks the judge whether a question belongs in the dataset. An unclear
/// reply or a backend error gets one retry; after that the question is
/// dropped.
pub fn llm_filter(backend: &dyn Backend, judge: &Judge, question: &str) -> FilterVerdict {
    let mut last_reply = String::new();
    let mut note = None;
    for _ in 0..2 {
        match judge.ask(backend, format!("{FILTER_PROMPT}{question}")) {
            Ok(reply) => {
                let word = first_word(&reply);
                last_reply = reply;
                match word.as_str() {
                    "yes" => return FilterVerdict { verdict: Verdict::Keep, judge_reply: last_reply, note: None },
                    "no" => return FilterVerdict { verdict: Verdict::Drop, judge_reply: last_reply, note: None },
                    _ => note = Some("unclear reply".to_string()),
                }
            }
            Err(e) => {
                log::warn!("filter judge failed for {question:?}: {e}");
                note = Some(format!("backend: {e}"));
            }
        }
    }
    log::warn!("dropping {question:?} after retry ({})", note.as_deref().unwrap_or_default());
    FilterVerdict { verdict: Verdict::Drop, judge_reply: last_reply, note }
}

/// One of the nine labels, or `Unknown` when the reply matches none or the
/// backend fails.
pub fn classify_category(backend: &dyn Backend, judge: &Judge, question: &str) -> Category {
    match judge.ask(backend, format!("{CATEGORY_PROMPT}{question}")) {
        Ok(reply) => {
            let label = reply.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '.' || c == '*').trim();
            match label.parse::<Category>() {
                Ok(c) => c,
                Err(()) => {
                    log::info!("unrecognised category reply {reply:?}");
                    Category::Unknown
                }
            }
        }
        Err(e) => {
            log::warn!("category judge failed for {question:?}: {e}");
            Category::Unknown
        }
    }
}

/// Category frequency table, most frequent first, with a total row.
pub fn category_table(categories: &[Category]) -> String {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let order: Vec<Category> = Category::LABELED.iter().copied().chain([Category::Unknown]).collect();
    for c in categories {
        let i = order.iter().position(|o| o == c).expect("every category is listed");
        *counts.entry(i).or_default() += 1;
    }
    let mut rows: Vec<(usize, usize)> = order
        .iter()
        .enumerate()
        .filter(|(i, c)| **c != Category::Unknown || counts.contains_key(i))
        .map(|(i, _)| (i, counts.get(&i).copied().unwrap_or(0)))
        .collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out = String::from("| Category | Count |\n|---|---:|\n");
    for (i, n) in rows {
        out.push_str(&format!("| {} | {n} |\n", order[i].label()));
    }
    out.push_str(&format!("| Total | {} |\n", categories.len()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedBackend;

    fn judge() -> Judge {
        Judge::new("judge")
    }

    #[test]
    fn filter_replies() {
        let v = llm_filter(&ScriptedBackend::sequence(["Yes"]), &judge(), "q");
        assert_eq!(v.verdict, Verdict::Keep);
        let v = llm_filter(&ScriptedBackend::sequence(["No."]), &judge(), "q");
        assert_eq!((v.verdict, v.note), (Verdict::Drop, None));
        let v = llm_filter(&ScriptedBackend::sequence(["  yes, it is answerable"]), &judge(), "q");
        assert_eq!(v.verdict, Verdict::Keep);
    }

    #[test]
    fn unclear_reply_is_retried_once() {
        let v = llm_filter(&ScriptedBackend::sequence(["It depends", "No"]), &judge(), "q");
        assert_eq!(v.verdict, Verdict::Drop);
        assert_eq!(v.judge_reply, "No");
        let v = llm_filter(&ScriptedBackend::sequence(["It depends", "Yes"]), &judge(), "q");
        assert_eq!(v.verdict, Verdict::Keep);
        let v = llm_filter(&ScriptedBackend::sequence(["Maybe", "Perhaps", "Yes"]), &judge(), "q");
        assert_eq!(v.verdict, Verdict::Drop);
        assert_eq!(v.note.as_deref(), Some("unclear reply"));
    }

    #[test]
    fn backend_errors_drop() {
        let v = llm_filter(&ScriptedBackend::sequence(Vec::<String>::new()), &judge(), "q");
        assert_eq!(v.verdict, Verdict::Drop);
        assert!(v.note.unwrap().starts_with("backend"));
    }

    #[test]
    fn categories() {
        let c = classify_category(&ScriptedBackend::sequence(["Economics & Business"]), &judge(), "Will ETH close above 3700?");
        assert_eq!(c, Category::EconomicsBusiness);
        assert_eq!(classify_category(&ScriptedBackend::sequence(["\"sports\"."]), &judge(), "q"), Category::Sports);
        assert_eq!(classify_category(&ScriptedBackend::sequence(["Cryptocurrency"]), &judge(), "q"), Category::Unknown);
        assert_eq!(classify_category(&ScriptedBackend::sequence(Vec::<String>::new()), &judge(), "q"), Category::Unknown);
    }

    #[test]
    fn table_layout() {
        let cats = [Category::Sports, Category::EconomicsBusiness, Category::Sports];
        assert_eq!(
            category_table(&cats),
            "| Category | Count |\n|---|---:|\n| Sports | 2 |\n| Economics & Business | 1 |\n| Politics & Governance | 0 |\n\
| Science & Tech | 0 |\n| Arts & Recreation | 0 |\n| Security & Defense | 0 |\n| Healthcare & Biology | 0 |\n\
| Environment & Energy | 0 |\n| Social Sciences | 0 |\n| Total | 3 |\n"
        );
    }
}

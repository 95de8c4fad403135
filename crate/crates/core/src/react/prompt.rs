use crate::domain::{AgentStep, Question};
use crate::llm::Message;
use crate::tools::ToolRegistry;

use super::context::OMITTED_MARKER;
use super::parse::OBSERVATION;

/// Instruction appended once iterations are exhausted.
pub const FINALIZATION_INSTRUCTION: &str =
    "You have used every available step. Do not use a tool; give Final Answer:";

/// Planner guidance on forecasting practice.
pub const FORECASTING_PRINCIPLES: &str = "\
You are an expert forecaster. Your job is to estimate the probability that a \
question resolves YES.

Working habits:
- Start from base rates: how often have comparable events happened before?
- Gather current evidence and weigh it against the base rate; move away from \
the base rate only as far as the evidence supports.
- Break the question into parts that can be researched or computed separately.
- Consider what would have to happen for each outcome and how much time is left \
before the closing date.
- Prefer numbers to adjectives. When a calculation helps, ask for one.
- Avoid extreme probabilities unless the outcome is close to certain.
- Only information dated before the closing date of your research window is \
available; do not assume anything later.

Your Final Answer must be a single probability between 0 and 1, for example \
Final Answer: 0.35";

/// Human-readable closing date, e.g. `April 30, 2024`.
pub fn closure_date(q: &Question) -> String {
    q.close_time.format("%B %-d, %Y").to_string()
}

/// The task text given to the top-level agent for one question.
pub fn render_task(q: &Question) -> String {
    format!(
        "{}\nBackground: {}\nResolution criteria: {}\nClosure time: {}",
        q.title,
        q.background.as_deref().unwrap_or("None"),
        q.resolution_criteria.as_deref().unwrap_or("None"),
        closure_date(q),
    )
}

/// System message: role prompt, tool list, and the block format.
pub fn system_message(role_prompt: &str, registry: &ToolRegistry) -> String {
    let tools: Vec<String> = registry
        .iter()
        .map(|t| format!("> {}: {}", t.name(), t.description()))
        .collect();
    let names = registry.names().join(", ");
    format!(
        "{role_prompt}\n\n\
TOOLS:\n------\n\nThe following tools are available:\n\n{tools}\n\n\
To use a tool, reply in exactly this format:\n\n\
```\nThought: Do I need to use a tool? Yes\nAction: the tool to use, one of [{names}]\n\
Action Input: the input to the tool\nObservation: the result of the tool\n```\n\n\
When you are ready to answer, or need no tool, reply in exactly this format:\n\n\
```\nThought: Do I need to use a tool? No\nFinal Answer: [your answer here]\n```",
        tools = tools.join("\n"),
    )
}

/// Full request context for an agent: system message, task, then the
/// history with the first `omitted` steps replaced by a marker.
pub fn assemble_messages(system: &str, task: &str, steps: &[AgentStep], omitted: usize) -> Vec<Message> {
    let omitted = omitted.min(steps.len());
    let mut first = format!("Task:\n{task}");
    if omitted > 0 {
        first.push_str("\n\n");
        first.push_str(OMITTED_MARKER);
    }
    let mut messages = vec![Message::system(system), Message::user(first)];
    for step in &steps[omitted..] {
        messages.push(Message::assistant(step.emission.clone()));
        messages.push(Message::user(format!("{OBSERVATION} {}", step.observation)));
    }
    messages
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Category, StepKind};
    use chrono::{TimeZone, Utc};

    fn question(background: Option<&str>) -> Question {
        Question {
            id: "q".into(),
            title: "Will ETH close above $4000 on April 30, 2024?".into(),
            background: background.map(str::to_string),
            resolution_criteria: None,
            close_time: Utc.with_ymd_and_hms(2024, 4, 30, 23, 59, 0).unwrap(),
            category: Category::EconomicsBusiness,
            crowd_prob: None,
            outcome: None,
            source: "test".into(),
            fetched_at: Utc.with_ymd_and_hms(2024, 4, 1, 0, 0, 0).unwrap(),
            flag: None,
        }
    }

    #[test]
    fn task_shape() {
        assert_eq!(
            render_task(&question(None)),
            "Will ETH close above $4000 on April 30, 2024?\nBackground: None\nResolution criteria: None\nClosure time: April 30, 2024"
        );
        assert!(render_task(&question(Some("bg"))).contains("\nBackground: bg\n"));
    }

    #[test]
    fn single_digit_day() {
        let mut q = question(None);
        q.close_time = Utc.with_ymd_and_hms(2024, 5, 3, 0, 0, 0).unwrap();
        assert_eq!(closure_date(&q), "May 3, 2024");
    }

    #[test]
    fn omitted_steps_are_marked() {
        let step = |i: usize| AgentStep {
            emission: format!("e{i}"),
            kind: StepKind::Malformed { reason: crate::domain::MalformedReason::NoKeyword },
            observation: format!("o{i}"),
        };
        let steps: Vec<_> = (0..4).map(step).collect();
        let m = assemble_messages("sys", "t", &steps, 2);
        assert_eq!(m.len(), 6);
        assert!(m[1].content.ends_with(OMITTED_MARKER));
        assert_eq!(m[2].content, "e2");
        assert_eq!(m[5].content, "Observation: o3");
    }
}

//! ReAct agent loop: emission grammar, probability extraction, prompts,
//! and context budgeting.

mod context;
mod engine;
mod extract;
mod parse;
mod prompt;

pub use context::{
    compaction_point, context_budget_guard, estimate_message_tokens, estimate_tokens, ContextGuard, GuardMode,
    GuardVerdict, KEEP_RECENT_STEPS, OMITTED_MARKER,
};
pub use engine::{
    run_agent, run_react, AbortReason, AgentOutcome, AgentRun, ConfigError, ReactConfig, ReactRun,
    DEFAULT_MAX_ITERATIONS,
};
pub use extract::{extract_probability, Extraction, MAX_PROBABILITY, MIN_PROBABILITY};
pub use parse::{parse_emission, render_emission, ParsedEmission, ACTION, ACTION_INPUT, FINAL_ANSWER, OBSERVATION, THOUGHT};
pub use prompt::{
    assemble_messages, closure_date, render_task, system_message, FINALIZATION_INSTRUCTION, FORECASTING_PRINCIPLES,
};

use crate::llm::Message;

/// Placeholder that stands in for steps dropped from the context.
pub const OMITTED_MARKER: &str = "[earlier steps omitted]";

/// Steps always kept verbatim when the history is compacted.
pub const KEEP_RECENT_STEPS: usize = 2;

/// Rough token count: characters divided by four, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

pub fn estimate_message_tokens(messages: &[Message]) -> usize {
    messages.iter().map(|m| m.content.chars().count()).sum::<usize>().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardVerdict {
    Ok { estimate: usize },
    BudgetExceeded { estimate: usize, limit: usize },
}

/// Checks an outgoing context against a token limit.
pub fn context_budget_guard(messages: &[Message], limit: usize) -> GuardVerdict {
    let estimate = estimate_message_tokens(messages);
    if estimate <= limit {
        GuardVerdict::Ok { estimate }
    } else {
        GuardVerdict::BudgetExceeded { estimate, limit }
    }
}

/// What the engine does when a context would exceed its limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardMode {
    /// Drop the oldest steps behind [`OMITTED_MARKER`].
    Compact,
    /// Stop the run and decline.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContextGuard {
    pub limit_tokens: usize,
    pub mode: GuardMode,
}

/// Smallest number of oldest steps to omit, at least `floor`, that brings
/// the context built by `build` under `limit`. Never omits any of the last
/// [`KEEP_RECENT_STEPS`] steps; returns the largest allowed count if nothing
/// fits.
pub fn compaction_point(
    step_count: usize,
    floor: usize,
    limit: usize,
    build: impl Fn(usize) -> Vec<Message>,
) -> usize {
    let max_omit = step_count.saturating_sub(KEEP_RECENT_STEPS);
    let floor = floor.min(max_omit);
    (floor..=max_omit)
        .find(|&k| estimate_message_tokens(&build(k)) <= limit)
        .unwrap_or(max_omit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_rounds_up() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abc"), 1);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
        assert_eq!(estimate_tokens(&"x".repeat(8000)), 2000);
    }

    #[test]
    fn guard_verdict() {
        let m = vec![Message::user("x".repeat(40))];
        assert_eq!(context_budget_guard(&m, 10), GuardVerdict::Ok { estimate: 10 });
        assert_eq!(context_budget_guard(&m, 9), GuardVerdict::BudgetExceeded { estimate: 10, limit: 9 });
    }
}

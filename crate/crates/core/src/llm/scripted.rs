use std::collections::HashMap;
use std::sync::Mutex;

use super::{Backend, ChatRequest, ChatResponse, FinishReason, LlmError, TokenUsage};

type Rule = dyn Fn(&ChatRequest, usize) -> Result<String, LlmError> + Send + Sync;

/// Deterministic in-process backend driven by a closure.
///
/// The closure receives the request and how many times the same
/// fingerprint has been asked before. Token usage is estimated at four
/// characters per token.
pub struct ScriptedBackend {
    rule: Box<Rule>,
    seen: Mutex<HashMap<String, usize>>,
}

impl ScriptedBackend {
    pub fn new(rule: impl Fn(&ChatRequest, usize) -> Result<String, LlmError> + Send + Sync + 'static) -> Self {
        Self {
            rule: Box::new(rule),
            seen: Mutex::new(HashMap::new()),
        }
    }

    /// Replies with `replies` in order, whatever the request; errors once
    /// the list is exhausted.
    pub fn sequence<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        let replies: Vec<String> = replies.into_iter().map(Into::into).collect();
        let next = Mutex::new(0usize);
        Self::new(move |_, _| {
            let mut i = next.lock().unwrap();
            let r = replies
                .get(*i)
                .cloned()
                .ok_or_else(|| LlmError::Transport("script exhausted".into()));
            *i += 1;
            r
        })
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let n = {
            let mut seen = self.seen.lock().unwrap();
            let c = seen.entry(req.fingerprint()).or_insert(0);
            *c += 1;
            *c - 1
        };
        let content = (self.rule)(req, n)?;
        let prompt_chars: usize = req.messages.iter().map(|m| m.content.chars().count()).sum();
        Ok(ChatResponse {
            token_usage: TokenUsage {
                prompt_tokens: prompt_chars.div_ceil(4) as u64,
                completion_tokens: content.chars().count().div_ceil(4) as u64,
            },
            content,
            finish_reason: FinishReason::Stop,
        })
    }
}

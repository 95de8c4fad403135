//! Batch commands: curate, resolve, forecast, score, probe.

mod config;
mod curate;
mod forecast;
mod probe;
mod score;

use crate::hierarchy::HierarchyError;
use crate::jsonl::JsonlError;
use crate::llm::LlmError;
use crate::market::MarketError;
use crate::metrics::MetricError;
use crate::tools::ToolError;

pub use config::{JudgeSettings, Overrides, Paths, RunConfig};
pub use curate::{audit_path, cmd_curate, cmd_resolve, AuditEntry, CurateSummary};
pub use forecast::{
    cmd_forecast, transcript_file_stem, ForecastSummary, QuestionState, QuestionStatus, RunManifest, TranscriptIndexEntry,
    MANIFEST_FILE, RECORDS_FILE, TRANSCRIPTS_DIR,
};
pub use probe::{cmd_probe, ProbeQuestion, ProbeRow};
pub use score::{cmd_score, MethodInput, CROWD_METHOD, REPORT_JSON, REPORT_MD};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_EMPTY: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    /// Bad configuration, missing credentials, unreadable inputs.
    #[error("{0}")]
    Config(String),
    /// An error no later question could recover from.
    #[error("run aborted: {0}")]
    Fatal(String),
    /// Nothing to produce.
    #[error("{0}")]
    Empty(String),
    #[error("{0}")]
    Io(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Empty(_) => EXIT_EMPTY,
            _ => EXIT_FATAL,
        }
    }
}

impl From<LlmError> for PipelineError {
    fn from(e: LlmError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<ToolError> for PipelineError {
    fn from(e: ToolError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<JsonlError> for PipelineError {
    fn from(e: JsonlError) -> Self {
        PipelineError::Io(e.to_string())
    }
}

impl From<MarketError> for PipelineError {
    fn from(e: MarketError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<HierarchyError> for PipelineError {
    fn from(e: HierarchyError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<MetricError> for PipelineError {
    fn from(e: MetricError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

/// Maps `items` with up to `workers` threads, keeping input order.
pub(crate) fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = f(item);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("every item mapped")).collect()
}

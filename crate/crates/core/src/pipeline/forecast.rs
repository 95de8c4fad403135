use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{parallel_map, PipelineError, RunConfig};
use crate::domain::{ForecastRecord, MemberForecast, Question, TranscriptNode};
use crate::hierarchy::{forecast_one, PlannerConfig, Toolkit};
use crate::jsonl;
use crate::llm::{Backend, TokenUsage, UsageMeter};
use crate::tools::{Sandbox, SearchProvider};

pub const RECORDS_FILE: &str = "forecasts.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRANSCRIPTS_DIR: &str = "transcripts";
const INDEX_FILE: &str = "index.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionStatus {
    Forecasted,
    Declined,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionState {
    pub question_id: String,
    pub status: QuestionStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub code_version: String,
    pub cutoff: NaiveDate,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub wall_time_secs: f64,
    pub workers: usize,
    pub llm_calls: u64,
    pub token_usage: TokenUsage,
    /// One entry per dataset question, in dataset order.
    pub questions: Vec<QuestionState>,
}

/// One line of a question's transcript index: the full tree of one member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptIndexEntry {
    pub question_id: String,
    pub member: usize,
    pub file: String,
    pub tree: TranscriptNode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSummary {
    pub records: Vec<ForecastRecord>,
    pub manifest: RunManifest,
    /// Questions computed by this invocation, in dataset order.
    pub computed: Vec<String>,
    pub reused: usize,
}

/// File-system-safe form of a question id.
fn safe_id(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

/// Member transcript stem, `{qid}.{member}`.
pub fn transcript_file_stem(question_id: &str, member: usize) -> String {
    format!("{}.{member}", safe_id(question_id))
}

/// Per-question seed for the sampled aggregator.
fn question_seed(seed: u64, question_id: &str) -> u64 {
    let digest = Sha256::digest(question_id.as_bytes());
    seed ^ u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Writes `node` as `{stem}.transcript` and each child as
/// `{stem}.{step}.{agent}.transcript`, recursively.
fn write_tree(dir: &Path, stem: &str, node: &TranscriptNode) -> Result<(), PipelineError> {
    let path = dir.join(format!("{stem}.transcript"));
    jsonl::write_atomic(&path, node.transcript.render_text().as_bytes())?;
    let mut seen: HashSet<String> = HashSet::new();
    for child in &node.children {
        let step = child.parent_step.map_or_else(|| "x".to_string(), |s| s.to_string());
        let mut child_stem = format!("{stem}.{step}.{}", safe_id(&child.transcript.agent_id));
        let base = child_stem.clone();
        let mut n = 1;
        while !seen.insert(child_stem.clone()) {
            n += 1;
            child_stem = format!("{base}-{n}");
        }
        write_tree(dir, &child_stem, child)?;
    }
    Ok(())
}

fn io(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

/// The settings that decide what a record contains. Resume is refused when
/// these differ from the earlier run.
fn resume_key(c: &RunConfig) -> RunConfig {
    let mut c = c.clone();
    c.workers = 0;
    c.record = false;
    c.rate_limit_per_minute = None;
    c.request_timeout_secs = 0;
    c.paths = Default::default();
    c
}

struct Outcome {
    record: ForecastRecord,
    state: QuestionState,
    fatal: Option<String>,
}

struct RunState {
    records: BTreeMap<String, ForecastRecord>,
    states: BTreeMap<String, QuestionState>,
    manifest: RunManifest,
}

/// Forecasts every question of `dataset` into `config.out_dir()`.
///
/// Records are rewritten in dataset order after each question. An existing
/// run in the directory is resumed: questions holding a record and a
/// non-error status are kept as they are.
pub fn cmd_forecast(
    dataset: &Path,
    config: &RunConfig,
    backend: Arc<dyn Backend>,
    search: Arc<dyn SearchProvider>,
) -> Result<ForecastSummary, PipelineError> {
    config.validate()?;
    let questions: Vec<Question> = jsonl::read(dataset)?;
    if questions.is_empty() {
        return Err(PipelineError::Empty(format!("{} holds no questions", dataset.display())));
    }
    let mut ids = HashSet::new();
    if let Some(dup) = questions.iter().find(|q| !ids.insert(q.id.as_str())) {
        return Err(PipelineError::Config(format!("duplicate question id {:?}", dup.id)));
    }
    let cutoff = config.effective_cutoff(&questions).expect("non-empty dataset");

    let out = config.out_dir();
    let records_path = out.join(RECORDS_FILE);
    let manifest_path = out.join(MANIFEST_FILE);
    std::fs::create_dir_all(out.join(TRANSCRIPTS_DIR)).map_err(|e| io(&out, e))?;

    let previous = load_previous(&manifest_path, &records_path, config, cutoff)?;
    let started = Instant::now();
    let started_at = Utc::now();
    let (prior_calls, prior_usage) = previous
        .as_ref()
        .map_or((0, TokenUsage::default()), |(m, _)| (m.llm_calls, m.token_usage));

    let mut state = RunState {
        records: BTreeMap::new(),
        states: BTreeMap::new(),
        manifest: RunManifest {
            config: config.clone(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            cutoff,
            started_at,
            finished_at: None,
            wall_time_secs: 0.0,
            workers: config.workers,
            llm_calls: prior_calls,
            token_usage: prior_usage,
            questions: Vec::new(),
        },
    };
    if let Some((manifest, records)) = previous {
        let done: BTreeMap<&str, &QuestionState> = manifest
            .questions
            .iter()
            .filter(|s| s.status != QuestionStatus::Error)
            .map(|s| (s.question_id.as_str(), s))
            .collect();
        for r in records {
            if let Some(s) = done.get(r.question_id.as_str()) {
                state.states.insert(r.question_id.clone(), (*s).clone());
                state.records.insert(r.question_id.clone(), r);
            }
        }
    }
    let pending: Vec<&Question> = questions.iter().filter(|q| !state.records.contains_key(&q.id)).collect();
    let reused = questions.len() - pending.len();
    if reused > 0 {
        log::info!("resuming: {reused} question(s) already done, {} to go", pending.len());
    }

    let meter = Arc::new(UsageMeter::new(backend));
    let agent_backend: Arc<dyn Backend> = meter.clone();
    let toolkit = Toolkit { search, sandbox: Sandbox::new(config.sandbox.clone()), cutoff };
    let planner = PlannerConfig::build(config.mode, &config.agent, &toolkit, agent_backend.clone())?;

    let shared = Mutex::new(state);
    let abort = AtomicBool::new(false);
    let persist = |s: &mut RunState| -> Result<(), PipelineError> {
        let ordered: Vec<&ForecastRecord> = questions.iter().filter_map(|q| s.records.get(&q.id)).collect();
        jsonl::write(&records_path, &ordered)?;
        s.manifest.questions = questions.iter().filter_map(|q| s.states.get(&q.id).cloned()).collect();
        s.manifest.llm_calls = prior_calls + meter.calls();
        let usage = meter.usage();
        s.manifest.token_usage = TokenUsage {
            prompt_tokens: prior_usage.prompt_tokens + usage.prompt_tokens,
            completion_tokens: prior_usage.completion_tokens + usage.completion_tokens,
        };
        s.manifest.wall_time_secs = started.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&s.manifest).expect("serializable manifest");
        jsonl::write_atomic(&manifest_path, text.as_bytes())?;
        Ok(())
    };

    let results = parallel_map(&pending, config.workers, |q| -> Result<Option<String>, PipelineError> {
        if abort.load(Ordering::SeqCst) {
            return Ok(None);
        }
        let outcome = forecast_question(q, config, &planner, agent_backend.as_ref(), cutoff, &out)?;
        if let Some(msg) = &outcome.fatal {
            abort.store(true, Ordering::SeqCst);
            log::error!("fatal backend error on {}: {msg}", q.id);
        }
        let mut s = shared.lock().unwrap();
        s.records.insert(q.id.clone(), outcome.record);
        s.states.insert(q.id.clone(), outcome.state);
        persist(&mut s)?;
        Ok(outcome.fatal.map(|_| q.id.clone()))
    });

    let mut computed = Vec::new();
    let mut fatal = None;
    for (q, r) in pending.iter().zip(results) {
        match r {
            Ok(f) => {
                computed.push(q.id.clone());
                fatal = fatal.or(f);
            }
            Err(e) => return Err(e),
        }
    }
    let mut state = shared.into_inner().unwrap();
    if fatal.is_none() {
        state.manifest.finished_at = Some(Utc::now());
    }
    persist(&mut state)?;
    if let Some(qid) = fatal {
        let msg = state.states.get(&qid).and_then(|s| s.error.clone()).unwrap_or_default();
        return Err(PipelineError::Fatal(msg));
    }
    let records = questions.iter().filter_map(|q| state.records.remove(&q.id)).collect();
    computed.retain(|id| state.states.contains_key(id));
    Ok(ForecastSummary { records, manifest: state.manifest, computed, reused })
}

fn load_previous(
    manifest_path: &Path,
    records_path: &Path,
    config: &RunConfig,
    cutoff: NaiveDate,
) -> Result<Option<(RunManifest, Vec<ForecastRecord>)>, PipelineError> {
    if !manifest_path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(manifest_path).map_err(|e| io(manifest_path, e))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", manifest_path.display())))?;
    if resume_key(&manifest.config) != resume_key(config) || manifest.cutoff != cutoff {
        return Err(PipelineError::Config(format!(
            "{} holds a run with different settings; use another output directory",
            manifest_path.parent().unwrap_or(Path::new(".")).display()
        )));
    }
    let records = if records_path.exists() { jsonl::read(records_path)? } else { Vec::new() };
    Ok(Some((manifest, records)))
}

fn forecast_question(
    q: &Question,
    config: &RunConfig,
    planner: &PlannerConfig,
    backend: &dyn Backend,
    cutoff: NaiveDate,
    out: &Path,
) -> Result<Outcome, PipelineError> {
    let dir: PathBuf = out.join(TRANSCRIPTS_DIR).join(safe_id(&q.id));
    std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    let mut members = Vec::with_capacity(config.ensemble_size);
    let mut index = Vec::with_capacity(config.ensemble_size);
    let mut error = None;
    let mut fatal = None;
    for m in 0..config.ensemble_size {
        let run = forecast_one(planner, backend, q, cutoff)?;
        let stem = transcript_file_stem(&q.id, m);
        write_tree(&dir, &stem, &run.tree)?;
        let file = format!("{TRANSCRIPTS_DIR}/{}/{stem}.transcript", safe_id(&q.id));
        if let Some(e) = &run.backend_error {
            error.get_or_insert_with(|| e.to_string());
            if e.is_fatal() {
                fatal = Some(e.to_string());
            }
        }
        index.push(TranscriptIndexEntry { question_id: q.id.clone(), member: m, file: file.clone(), tree: run.tree });
        members.push(MemberForecast { index: m, outcome: run.outcome, transcript_ref: Some(file) });
        if fatal.is_some() {
            break;
        }
    }
    jsonl::write(&dir.join(INDEX_FILE), &index)?;
    let record = ForecastRecord::assemble(q.id.clone(), members, config.aggregator, question_seed(config.seed, &q.id))
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let status = match (&error, record.declined) {
        (Some(_), _) => QuestionStatus::Error,
        (None, true) => QuestionStatus::Declined,
        (None, false) => QuestionStatus::Forecasted,
    };
    log::info!(
        "{}: {:?} {}",
        q.id,
        status,
        record.aggregate.map_or_else(|| "-".to_string(), |a| a.to_string())
    );
    Ok(Outcome { record, state: QuestionState { question_id: q.id.clone(), status, error }, fatal })
}

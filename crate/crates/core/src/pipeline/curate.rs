use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::{JudgeSettings, PipelineError};
use crate::domain::Category;
use crate::jsonl;
use crate::llm::Backend;
use crate::market::{
    backfill_resolutions, category_table, classify_category, fetch_window, llm_filter, snapshot, BackfillReport,
    MarketClient, SnapshotReport, Verdict,
};

/// Filter and category decisions for one fetched market.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub market_id: String,
    pub question: String,
    pub verdict: Verdict,
    pub judge_reply: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurateSummary {
    pub kept: usize,
    pub dropped: usize,
    pub snapshot: SnapshotReport,
    pub audit_path: PathBuf,
    pub warnings: Vec<String>,
    pub category_table: String,
}

impl CurateSummary {
    pub fn counts_line(&self) -> String {
        format!("kept {} / dropped {}", self.kept, self.dropped)
    }
}

/// `dataset.jsonl` → `dataset.audit.jsonl`.
pub fn audit_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.audit.jsonl"))
}

/// Fetches binary markets closing in `[from, to]`, keeps those the filter
/// judge accepts, labels them, and snapshots them at `at` into `out`.
#[allow(clippy::too_many_arguments)]
pub fn cmd_curate(
    markets: &dyn MarketClient,
    backend: &dyn Backend,
    judges: &JudgeSettings,
    from: NaiveDate,
    to: NaiveDate,
    at: DateTime<Utc>,
    out: &Path,
) -> Result<CurateSummary, PipelineError> {
    let fetched = fetch_window(markets, from, to)?;
    if fetched.records.is_empty() {
        log::warn!("no binary markets close between {from} and {to}");
    }
    let (filter, labeler) = (judges.filter(), judges.category());
    let mut audit = Vec::with_capacity(fetched.records.len());
    let mut kept = Vec::new();
    for r in &fetched.records {
        let v = llm_filter(backend, &filter, &r.question_text);
        let category = (v.verdict == Verdict::Keep).then(|| classify_category(backend, &labeler, &r.question_text));
        audit.push(AuditEntry {
            market_id: r.market_id.clone(),
            question: r.question_text.clone(),
            verdict: v.verdict,
            judge_reply: v.judge_reply,
            note: v.note,
            category,
        });
        if let Some(c) = category {
            kept.push((r.clone(), c));
        }
    }
    let audit_path = audit_path(out);
    jsonl::write(&audit_path, &audit)?;
    let snapshot = snapshot(&kept, at, out)?;
    let categories: Vec<Category> = snapshot.questions.iter().map(|q| q.category).collect();
    Ok(CurateSummary {
        kept: kept.len(),
        dropped: fetched.records.len() - kept.len(),
        snapshot,
        audit_path,
        warnings: fetched.warnings,
        category_table: category_table(&categories),
    })
}

/// Back-fills outcomes into `dataset` in place.
pub fn cmd_resolve(markets: &dyn MarketClient, dataset: &Path, now: DateTime<Utc>) -> Result<BackfillReport, PipelineError> {
    Ok(backfill_resolutions(markets, dataset, now)?)
}

use std::path::Path;

use chrono::{DateTime, Utc};

use super::{MarketClient, MarketError, MarketRecord, Resolution};
use crate::domain::{Category, Question, QuestionFlag};
use crate::jsonl;

pub const MARKET_SOURCE: &str = "manifold";

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotReport {
    pub questions: Vec<Question>,
    /// Markets already closed at snapshot time.
    pub skipped: Vec<String>,
}

/// Freezes markets into a question file: crowd probability as of `at`, no
/// outcomes. Questions are ordered by close time, then id.
pub fn snapshot(records: &[(MarketRecord, Category)], at: DateTime<Utc>, out: &Path) -> Result<SnapshotReport, MarketError> {
    let mut questions = Vec::new();
    let mut skipped = Vec::new();
    for (r, category) in records {
        if r.close_time < at {
            log::warn!("market {} closed before the snapshot; skipped", r.market_id);
            skipped.push(r.market_id.clone());
            continue;
        }
        questions.push(Question {
            id: r.market_id.clone(),
            title: r.question_text.clone(),
            background: r.description.clone(),
            resolution_criteria: None,
            close_time: r.close_time,
            category: *category,
            crowd_prob: Some(r.probability),
            outcome: None,
            source: MARKET_SOURCE.to_string(),
            fetched_at: at,
            flag: None,
        });
    }
    questions.sort_by(|a, b| a.close_time.cmp(&b.close_time).then_with(|| a.id.cmp(&b.id)));
    jsonl::write(out, &questions)?;
    Ok(SnapshotReport { questions, skipped })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BackfillReport {
    pub resolved: usize,
    pub excluded: usize,
    pub pending: usize,
    pub open: usize,
    pub failed: Vec<String>,
}

/// Writes outcomes into a question file from current market state. Only
/// `outcome` and `flag` change; questions that already have an outcome or
/// are excluded are left alone.
pub fn backfill_resolutions(client: &dyn MarketClient, dataset: &Path, now: DateTime<Utc>) -> Result<BackfillReport, MarketError> {
    let mut questions: Vec<Question> = jsonl::read(dataset)?;
    let mut report = BackfillReport::default();
    for q in questions.iter_mut() {
        if q.outcome.is_some() || q.flag == Some(QuestionFlag::Excluded) {
            continue;
        }
        let record = client
            .market(&q.id)
            .and_then(|raw| MarketRecord::from_manifold(&raw).map_err(MarketError::Decode))
            .and_then(|r| r.ok_or_else(|| MarketError::Decode(format!("market {} is not binary", q.id))));
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                log::warn!("could not back-fill {}: {e}", q.id);
                report.failed.push(q.id.clone());
                continue;
            }
        };
        match record.resolution {
            Some(Resolution::Yes) => {
                q.outcome = Some(1);
                q.flag = None;
                report.resolved += 1;
            }
            Some(Resolution::No) => {
                q.outcome = Some(0);
                q.flag = None;
                report.resolved += 1;
            }
            Some(Resolution::Other(r)) => {
                log::info!("{} resolved {r}; excluded", q.id);
                q.flag = Some(QuestionFlag::Excluded);
                report.excluded += 1;
            }
            None if q.close_time <= now => {
                q.flag = Some(QuestionFlag::Pending);
                report.pending += 1;
            }
            None => report.open += 1,
        }
    }
    jsonl::write(dataset, &questions)?;
    Ok(report)
}

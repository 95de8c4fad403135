//! Prediction-market ingestion: fetch, judge, snapshot, back-fill.

mod client;
mod dataset;
mod judge;

use std::collections::HashSet;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use client::{FixtureMarketClient, ManifoldClient, MarketClient, MANIFOLD_API};
pub use dataset::{backfill_resolutions, snapshot, BackfillReport, SnapshotReport, MARKET_SOURCE};
pub use judge::{
    category_table, classify_category, llm_filter, FilterVerdict, Judge, Verdict, CATEGORY_PROMPT, FILTER_PROMPT,
};

#[derive(Debug, thiserror::Error)]
pub enum MarketError {
    #[error("market API request failed: {0}")]
    Http(String),
    #[error("market API returned malformed JSON: {0}")]
    Decode(String),
    #[error("unknown page token {0:?}")]
    UnknownPageToken(String),
    #[error("market {0} not found")]
    NotFound(String),
    #[error("window start {from} is after end {to}")]
    BadWindow { from: NaiveDate, to: NaiveDate },
    #[error(transparent)]
    Jsonl(#[from] crate::jsonl::JsonlError),
    #[error("dataset: {0}")]
    Dataset(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Resolution {
    Yes,
    No,
    /// Cancelled, resolved to a probability, or anything else.
    #[serde(untagged)]
    Other(String),
}

impl Resolution {
    fn parse(s: &str) -> Self {
        match s {
            "YES" => Resolution::Yes,
            "NO" => Resolution::No,
            other => Resolution::Other(other.to_string()),
        }
    }
}

/// One binary market as returned by the market API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketRecord {
    pub market_id: String,
    pub question_text: String,
    pub description: Option<String>,
    pub close_time: DateTime<Utc>,
    /// Crowd probability at fetch time.
    pub probability: f64,
    pub is_resolved: bool,
    /// Present exactly when `is_resolved`.
    pub resolution: Option<Resolution>,
    pub raw: Value,
}

impl MarketRecord {
    /// Parses a market payload. `Ok(None)` for non-binary markets; `Err`
    /// names the missing or invalid field.
    pub fn from_manifold(raw: &Value) -> Result<Option<Self>, String> {
        let str_field = |k: &str| raw.get(k).and_then(Value::as_str).ok_or_else(|| format!("missing string field {k:?}"));
        if str_field("outcomeType")? != "BINARY" {
            return Ok(None);
        }
        let market_id = str_field("id")?.to_string();
        let question_text = str_field("question")?.to_string();
        let close_ms = raw
            .get("closeTime")
            .and_then(Value::as_i64)
            .ok_or_else(|| format!("{market_id}: missing integer field \"closeTime\""))?;
        let close_time = DateTime::from_timestamp_millis(close_ms)
            .ok_or_else(|| format!("{market_id}: closeTime {close_ms} out of range"))?;
        let probability = raw
            .get("probability")
            .and_then(Value::as_f64)
            .filter(|p| (0.0..=1.0).contains(p))
            .ok_or_else(|| format!("{market_id}: missing or out-of-range \"probability\""))?;
        let is_resolved = raw.get("isResolved").and_then(Value::as_bool).unwrap_or(false);
        let resolution = if is_resolved {
            let r = raw
                .get("resolution")
                .and_then(Value::as_str)
                .ok_or_else(|| format!("{market_id}: resolved market without \"resolution\""))?;
            Some(Resolution::parse(r))
        } else {
            None
        };
        let description = raw
            .get("textDescription")
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string);
        Ok(Some(Self {
            market_id,
            question_text,
            description,
            close_time,
            probability,
            is_resolved,
            resolution,
            raw: raw.clone(),
        }))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FetchReport {
    pub records: Vec<MarketRecord>,
    /// Records skipped because their payload did not parse.
    pub warnings: Vec<String>,
    pub pages: usize,
}

/// Binary markets closing within `[from, to]` (UTC dates, inclusive),
/// walking every page of the listing once.
pub fn fetch_window(client: &dyn MarketClient, from: NaiveDate, to: NaiveDate) -> Result<FetchReport, MarketError> {
    if from > to {
        return Err(MarketError::BadWindow { from, to });
    }
    let mut report = FetchReport::default();
    let mut seen = HashSet::new();
    let mut token: Option<String> = None;
    loop {
        let page = client.list_page(token.as_deref())?;
        if page.is_empty() {
            break;
        }
        report.pages += 1;
        for raw in &page {
            match MarketRecord::from_manifold(raw) {
                Ok(Some(r)) => {
                    let day = r.close_time.date_naive();
                    if (from..=to).contains(&day) && seen.insert(r.market_id.clone()) {
                        report.records.push(r);
                    }
                }
                Ok(None) => {}
                Err(w) => {
                    log::warn!("skipping market: {w}");
                    report.warnings.push(w);
                }
            }
        }
        let next = page.last().and_then(|m| m.get("id")).and_then(Value::as_str).map(str::to_string);
        if next.is_none() || next == token {
            break;
        }
        token = next;
    }
    Ok(report)
}

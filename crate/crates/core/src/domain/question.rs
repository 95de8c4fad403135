use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::ts;

/// Topic label assigned to a question by the category judge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    EconomicsBusiness,
    PoliticsGovernance,
    ScienceTech,
    ArtsRecreation,
    Sports,
    SecurityDefense,
    HealthcareBiology,
    EnvironmentEnergy,
    SocialSciences,
    Unknown,
}

impl Category {
    /// The nine closed labels, in the order used for frequency tables.
    pub const LABELED: [Category; 9] = [
        Category::EconomicsBusiness,
        Category::PoliticsGovernance,
        Category::ScienceTech,
        Category::ArtsRecreation,
        Category::Sports,
        Category::SecurityDefense,
        Category::HealthcareBiology,
        Category::EnvironmentEnergy,
        Category::SocialSciences,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::EconomicsBusiness => "Economics & Business",
            Category::PoliticsGovernance => "Politics & Governance",
            Category::ScienceTech => "Science & Tech",
            Category::ArtsRecreation => "Arts & Recreation",
            Category::Sports => "Sports",
            Category::SecurityDefense => "Security & Defense",
            Category::HealthcareBiology => "Healthcare & Biology",
            Category::EnvironmentEnergy => "Environment & Energy",
            Category::SocialSciences => "Social Sciences",
            Category::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Category {
    type Err = ();

    /// Case-insensitive match against the labels, `Unknown` included.
    fn from_str(s: &str) -> Result<Self, ()> {
        let s = s.trim();
        Category::LABELED
            .iter()
            .chain(std::iter::once(&Category::Unknown))
            .copied()
            .find(|c| c.label().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

impl Serialize for Category {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map_err(|_| serde::de::Error::custom(format!("unknown category {s:?}")))
    }
}

/// Status set by resolution back-fill when a question cannot be scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionFlag {
    /// Market resolved to something other than YES/NO (cancelled, ambiguous).
    Excluded,
    /// Past close but not yet resolved.
    Pending,
}

/// A binary prediction-market question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Map<String, Value>")]
pub struct Question {
    pub id: String,
    pub title: String,
    pub background: Option<String>,
    pub resolution_criteria: Option<String>,
    #[serde(serialize_with = "ts::serialize")]
    pub close_time: DateTime<Utc>,
    pub category: Category,
    pub crowd_prob: Option<f64>,
    pub outcome: Option<u8>,
    pub source: String,
    #[serde(serialize_with = "ts::serialize")]
    pub fetched_at: DateTime<Utc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flag: Option<QuestionFlag>,
}

impl Question {
    /// True when the question has a YES/NO outcome and is not flagged.
    pub fn is_scorable(&self) -> bool {
        self.outcome.is_some() && self.flag.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid question field `{field}`: {message}")]
pub struct ValidationError {
    pub field: &'static str,
    pub message: String,
}

impl ValidationError {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

impl TryFrom<Map<String, Value>> for Question {
    type Error = ValidationError;

    fn try_from(raw: Map<String, Value>) -> Result<Self, ValidationError> {
        validate_question(&raw)
    }
}

fn opt_text(raw: &Map<String, Value>, field: &'static str) -> Result<Option<String>, ValidationError> {
    match raw.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(ValidationError::new(field, format!("expected text, got {other}"))),
    }
}

fn timestamp(raw: &Map<String, Value>, field: &'static str) -> Result<Option<DateTime<Utc>>, ValidationError> {
    match raw.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => ts::parse_value(v)
            .map(Some)
            .ok_or_else(|| ValidationError::new(field, format!("malformed timestamp {v}"))),
    }
}

/// Builds a [`Question`] from a raw key-value map (dataset line or API
/// payload), enforcing every field invariant.
///
/// Absent `category` means `Unknown`, absent `source` means `"unknown"` and
/// absent `fetched_at` defaults to `close_time`.
pub fn validate_question(raw: &Map<String, Value>) -> Result<Question, ValidationError> {
    let id = match raw.get("id") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(Value::String(_)) => return Err(ValidationError::new("id", "empty identifier")),
        None | Some(Value::Null) => return Err(ValidationError::new("id", "missing")),
        Some(other) => return Err(ValidationError::new("id", format!("expected text, got {other}"))),
    };
    let title = opt_text(raw, "title")?
        .filter(|t| !t.trim().is_empty())
        .ok_or_else(|| ValidationError::new("title", "missing or empty"))?;
    let background = opt_text(raw, "background")?;
    let resolution_criteria = opt_text(raw, "resolution_criteria")?;
    let close_time = timestamp(raw, "close_time")?
        .ok_or_else(|| ValidationError::new("close_time", "missing"))?;

    let category = match raw.get("category") {
        None | Some(Value::Null) => Category::Unknown,
        Some(Value::String(s)) => s
            .parse()
            .map_err(|_| ValidationError::new("category", format!("unknown label {s:?}")))?,
        Some(other) => return Err(ValidationError::new("category", format!("expected text, got {other}"))),
    };

    let crowd_prob = match raw.get("crowd_prob") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_f64() {
            Some(p) if (0.0..=1.0).contains(&p) => Some(p),
            _ => return Err(ValidationError::new("crowd_prob", format!("{v} is not a probability in [0,1]"))),
        },
    };

    let outcome = match raw.get("outcome") {
        None | Some(Value::Null) => None,
        Some(v) => match v.as_u64() {
            Some(o @ (0 | 1)) => Some(o as u8),
            _ => return Err(ValidationError::new("outcome", format!("{v} is not 0 or 1"))),
        },
    };

    let source = opt_text(raw, "source")?.unwrap_or_else(|| "unknown".to_string());
    let fetched_at = timestamp(raw, "fetched_at")?.unwrap_or(close_time);
    if fetched_at > close_time {
        return Err(ValidationError::new(
            "fetched_at",
            format!("{} is after close_time {}", ts::format(&fetched_at), ts::format(&close_time)),
        ));
    }

    let flag = match raw.get("flag") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            serde_json::from_value(v.clone())
                .map_err(|_| ValidationError::new("flag", format!("unknown flag {v}")))?,
        ),
    };

    Ok(Question {
        id,
        title,
        background,
        resolution_criteria,
        close_time,
        category,
        crowd_prob,
        outcome,
        source,
        fetched_at,
        flag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn map(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn eth_question_is_valid() {
        let q = validate_question(&map(json!({
            "id": "q1",
            "title": "Will ETH close above 3700?",
            "close_time": "2024-04-30T00:00:00Z",
            "outcome": 0
        })))
        .unwrap();
        assert_eq!(q.outcome, Some(0));
        assert_eq!(q.category, Category::Unknown);
        assert_eq!(q.fetched_at, q.close_time);
    }

    #[test]
    fn out_of_range_crowd_prob_names_field() {
        let err = validate_question(&map(json!({
            "id": "q2", "title": "t", "close_time": "2024-04-30T00:00:00Z", "crowd_prob": 1.4
        })))
        .unwrap_err();
        assert_eq!(err.field, "crowd_prob");
    }

    #[test]
    fn empty_id_rejected() {
        let err = validate_question(&map(json!({
            "id": "", "title": "t", "close_time": "2024-04-30T00:00:00Z"
        })))
        .unwrap_err();
        assert_eq!(err.field, "id");
    }

    #[test]
    fn malformed_timestamp_and_outcome() {
        let err = validate_question(&map(json!({
            "id": "a", "title": "t", "close_time": "April 30"
        })))
        .unwrap_err();
        assert_eq!(err.field, "close_time");
        let err = validate_question(&map(json!({
            "id": "a", "title": "t", "close_time": "2024-04-30", "outcome": 2
        })))
        .unwrap_err();
        assert_eq!(err.field, "outcome");
    }

    #[test]
    fn epoch_millis_are_truncated_to_seconds() {
        let q = validate_question(&map(json!({
            "id": "a", "title": "t", "close_time": 1714435200999_i64
        })))
        .unwrap();
        assert_eq!(ts::format(&q.close_time), "2024-04-30T00:00:00Z");
    }

    #[test]
    fn fetched_after_close_is_rejected() {
        let err = validate_question(&map(json!({
            "id": "a", "title": "t", "close_time": "2024-04-30",
            "fetched_at": "2024-05-01T00:00:00Z"
        })))
        .unwrap_err();
        assert_eq!(err.field, "fetched_at");
    }

    #[test]
    fn category_labels_parse_back() {
        for c in Category::LABELED {
            assert_eq!(c.label().parse::<Category>(), Ok(c));
        }
        assert!("Cryptocurrency".parse::<Category>().is_err());
    }
}

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::metrics::{self, AggregateMode};

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Forecast(f64);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecordError {
    #[error("{0} is not a probability in [0,1]")]
    OutOfRange(f64),
    #[error("forecast record {question_id}: {message}")]
    Inconsistent { question_id: String, message: String },
    #[error("forecast record {question_id} has no members")]
    NoMembers { question_id: String },
}

impl Forecast {
    pub fn new(value: f64) -> Result<Self, RecordError> {
        // NaN fails both comparisons.
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(RecordError::OutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Forecast {
    type Error = RecordError;

    fn try_from(v: f64) -> Result<Self, RecordError> {
        Forecast::new(v)
    }
}

impl From<Forecast> for f64 {
    fn from(f: Forecast) -> f64 {
        f.0
    }
}

impl fmt::Display for Forecast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Why an ensemble member produced no numeric forecast.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeclineReason {
    /// Final answer contained no usable number.
    NoNumber,
    /// Iterations exhausted and forced finalization yielded nothing.
    Truncated,
    /// Context estimate exceeded the limit with compaction disabled.
    Budget,
    /// Backend failure aborted the run.
    Backend(String),
}

impl fmt::Display for DeclineReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeclineReason::NoNumber => f.write_str("no numeric answer"),
            DeclineReason::Truncated => f.write_str("iterations exhausted"),
            DeclineReason::Budget => f.write_str("context budget exceeded"),
            DeclineReason::Backend(m) => write!(f, "backend: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberOutcome {
    Forecast(Forecast),
    Declined(DeclineReason),
}

impl MemberOutcome {
    pub fn forecast(&self) -> Option<Forecast> {
        match self {
            MemberOutcome::Forecast(f) => Some(*f),
            MemberOutcome::Declined(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberForecast {
    pub index: usize,
    pub outcome: MemberOutcome,
    pub transcript_ref: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    Mean,
    Median,
    Sampled,
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregator::Mean => "mean",
            Aggregator::Median => "median",
            Aggregator::Sampled => "sampled",
        })
    }
}

impl std::str::FromStr for Aggregator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "median" => Ok(Aggregator::Median),
            "sampled" => Ok(Aggregator::Sampled),
            other => Err(format!("unknown aggregator {other:?} (expected mean, median or sampled)")),
        }
    }
}

/// Ensemble forecasts for one question.
///
/// `declined` is set as soon as any member declined; such records carry no
/// aggregate and are removed from scoring by the drop rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRecord")]
pub struct ForecastRecord {
    pub question_id: String,
    pub members: Vec<MemberForecast>,
    pub aggregate: Option<Forecast>,
    pub aggregator: Aggregator,
    pub declined: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_seed: Option<u64>,
}

#[derive(Deserialize)]
struct RawRecord {
    question_id: String,
    members: Vec<MemberForecast>,
    aggregate: Option<Forecast>,
    aggregator: Aggregator,
    declined: bool,
    #[serde(default)]
    sample_seed: Option<u64>,
}

impl ForecastRecord {
    /// Aggregates the members. `seed` drives the `sampled` aggregator and is
    /// ignored otherwise.
    pub fn assemble(
        question_id: impl Into<String>,
        members: Vec<MemberForecast>,
        aggregator: Aggregator,
        seed: u64,
    ) -> Result<Self, RecordError> {
        let question_id = question_id.into();
        if members.is_empty() {
            return Err(RecordError::NoMembers { question_id });
        }
        let values: Option<Vec<Forecast>> = members.iter().map(|m| m.outcome.forecast()).collect();
        let (aggregate, declined, sample_seed) = match values {
            None => (None, true, None),
            Some(values) => {
                let mode = match aggregator {
                    Aggregator::Mean => AggregateMode::Mean,
                    Aggregator::Median => AggregateMode::Median,
                    Aggregator::Sampled => AggregateMode::Sampled { seed },
                };
                let agg = metrics::aggregate(&values, mode).map_err(|e| RecordError::Inconsistent {
                    question_id: question_id.clone(),
                    message: e.to_string(),
                })?;
                (Some(agg), false, (aggregator == Aggregator::Sampled).then_some(seed))
            }
        };
        Ok(Self {
            question_id,
            members,
            aggregate,
            aggregator,
            declined,
            sample_seed,
        })
    }

    /// Numeric member forecasts, in member order.
    pub fn member_values(&self) -> Vec<f64> {
        self.members
            .iter()
            .filter_map(|m| m.outcome.forecast().map(Forecast::value))
            .collect()
    }

    fn check(&self) -> Result<(), RecordError> {
        let bad = |message: &str| RecordError::Inconsistent {
            question_id: self.question_id.clone(),
            message: message.to_string(),
        };
        if self.members.is_empty() {
            return Err(RecordError::NoMembers {
                question_id: self.question_id.clone(),
            });
        }
        let any_declined = self
            .members
            .iter()
            .any(|m| matches!(m.outcome, MemberOutcome::Declined(_)));
        if any_declined != self.declined {
            return Err(bad("declined flag disagrees with members"));
        }
        match (self.aggregate, self.declined) {
            (Some(_), true) => return Err(bad("declined record carries an aggregate")),
            (None, false) => return Err(bad("aggregate missing")),
            _ => {}
        }
        if let Some(agg) = self.aggregate {
            let vals = self.member_values();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if agg.value() < lo || agg.value() > hi {
                return Err(bad("aggregate outside member range"));
            }
        }
        Ok(())
    }
}

impl TryFrom<RawRecord> for ForecastRecord {
    type Error = RecordError;

    fn try_from(r: RawRecord) -> Result<Self, RecordError> {
        let rec = ForecastRecord {
            question_id: r.question_id,
            members: r.members,
            aggregate: r.aggregate,
            aggregator: r.aggregator,
            declined: r.declined,
            sample_seed: r.sample_seed,
        };
        rec.check()?;
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn member(index: usize, v: Option<f64>) -> MemberForecast {
        MemberForecast {
            index,
            outcome: match v {
                Some(v) => MemberOutcome::Forecast(Forecast::new(v).unwrap()),
                None => MemberOutcome::Declined(DeclineReason::NoNumber),
            },
            transcript_ref: None,
        }
    }

    #[test]
    fn forecast_rejects_out_of_range_and_nan() {
        assert!(Forecast::new(0.0).is_ok());
        assert!(Forecast::new(1.0).is_ok());
        assert!(Forecast::new(-1e-9).is_err());
        assert!(Forecast::new(1.0 + 1e-9).is_err());
        assert!(Forecast::new(f64::NAN).is_err());
        assert!(Forecast::new(f64::INFINITY).is_err());
        assert!(serde_json::from_str::<Forecast>("1.5").is_err());
    }

    #[test]
    fn any_declined_member_declines_the_record() {
        let rec = ForecastRecord::assemble(
            "q",
            vec![member(0, Some(0.2)), member(1, None), member(2, Some(0.4))],
            Aggregator::Median,
            0,
        )
        .unwrap();
        assert!(rec.declined);
        assert_eq!(rec.aggregate, None);
    }

    #[test]
    fn decoding_rejects_inconsistent_records() {
        let good = ForecastRecord::assemble(
            "q",
            vec![member(0, Some(0.2)), member(1, Some(0.4))],
            Aggregator::Mean,
            0,
        )
        .unwrap();
        let mut v = serde_json::to_value(&good).unwrap();
        v["aggregate"] = serde_json::json!(0.9);
        let err = serde_json::from_value::<ForecastRecord>(v).unwrap_err();
        assert!(err.to_string().contains("outside member range"), "{err}");

        let mut v = serde_json::to_value(&good).unwrap();
        v["declined"] = serde_json::json!(true);
        assert!(serde_json::from_value::<ForecastRecord>(v).is_err());
    }

    #[test]
    fn sampled_records_keep_their_seed() {
        let rec = ForecastRecord::assemble(
            "q",
            vec![member(0, Some(0.2)), member(1, Some(0.3)), member(2, Some(0.9))],
            Aggregator::Sampled,
            17,
        )
        .unwrap();
        assert_eq!(rec.sample_seed, Some(17));
        let back: ForecastRecord =
            serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
        assert_eq!(back, rec);
    }
}

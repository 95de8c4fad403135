//! Forecast scoring: Brier score, accuracy, quantile-binned calibration
//! index, ensemble aggregation and spread, and the cross-method drop rule.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Forecast, ForecastRecord, MemberOutcome};

pub use report::{format_report, parse_report_tables, MethodScore, ReportTables, ScoreReport};

/// Default number of calibration bins.
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("cannot score an empty set")]
    EmptySet,
    #[error("{n} forecasts is fewer than {k} bins")]
    TooFewForecasts { n: usize, k: usize },
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error("cannot aggregate an empty member list")]
    EmptyMembers,
    #[error("record {question_id} has fewer than two numeric members")]
    InsufficientMembers { question_id: String },
    #[error("duplicate question id {0}")]
    DuplicateQuestion(String),
    #[error("forecast {value} for {question_id} is not in [0,1]")]
    BadForecast { question_id: String, value: f64 },
    #[error("outcome {value} for {question_id} is not 0 or 1")]
    BadOutcome { question_id: String, value: u8 },
    #[error("methods disagree on the question set: {0}")]
    UniverseMismatch(String),
    #[error("question {0} has no resolved outcome")]
    MissingOutcome(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub question_id: String,
    pub forecast: f64,
    pub outcome: u8,
}

/// Resolved (forecast, outcome) pairs of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    method_label: String,
    pairs: Vec<ScoredPair>,
}

impl ScoredSet {
    pub fn new(method_label: impl Into<String>, pairs: Vec<ScoredPair>) -> Result<Self, MetricError> {
        let mut seen = BTreeSet::new();
        for p in &pairs {
            if !seen.insert(p.question_id.as_str()) {
                return Err(MetricError::DuplicateQuestion(p.question_id.clone()));
            }
            if !(0.0..=1.0).contains(&p.forecast) {
                return Err(MetricError::BadForecast {
                    question_id: p.question_id.clone(),
                    value: p.forecast,
                });
            }
            if p.outcome > 1 {
                return Err(MetricError::BadOutcome {
                    question_id: p.question_id.clone(),
                    value: p.outcome,
                });
            }
        }
        Ok(Self {
            method_label: method_label.into(),
            pairs,
        })
    }

    /// Convenience constructor with synthetic ids `0..n`.
    pub fn from_values(method_label: &str, values: &[(f64, u8)]) -> Result<Self, MetricError> {
        let pairs = values
            .iter()
            .enumerate()
            .map(|(i, &(forecast, outcome))| ScoredPair {
                question_id: format!("{i:08}"),
                forecast,
                outcome,
            })
            .collect();
        Self::new(method_label, pairs)
    }

    pub fn method_label(&self) -> &str {
        &self.method_label
    }

    pub fn pairs(&self) -> &[ScoredPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn question_ids(&self) -> BTreeSet<&str> {
        self.pairs.iter().map(|p| p.question_id.as_str()).collect()
    }
}

/// Mean squared error between forecasts and outcomes.
pub fn brier(set: &ScoredSet) -> Result<f64, MetricError> {
    if set.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let sum: f64 = set
        .pairs
        .iter()
        .map(|p| (p.forecast - f64::from(p.outcome)).powi(2))
        .sum();
    Ok(sum / set.len() as f64)
}

/// Fraction of questions where `forecast > 0.5` matches the outcome.
/// A forecast of exactly 0.5 predicts 0.
pub fn accuracy(set: &ScoredSet) -> Result<f64, MetricError> {
    if set.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let hits = set
        .pairs
        .iter()
        .filter(|p| u8::from(p.forecast > 0.5) == p.outcome)
        .count();
    Ok(hits as f64 / set.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub count: usize,
    pub mean_forecast: f64,
    pub observed_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins_requested: usize,
    pub bins: Vec<CalibrationBin>,
    pub calibration_index: f64,
}

/// Calibration index over `k` quantile bins of the forecasts.
///
/// Pairs are sorted by forecast (ties broken by question id) and bin `j`
/// takes ranks `[floor(j*N/k), floor((j+1)*N/k))`, so equal forecasts may
/// land in adjacent bins. The index is `sum_j N_j (f_j - o_j)^2 / N`.
pub fn calibration_index(set: &ScoredSet, k: usize) -> Result<CalibrationReport, MetricError> {
    if k == 0 {
        return Err(MetricError::ZeroBins);
    }
    let n = set.len();
    if n < k {
        return Err(MetricError::TooFewForecasts { n, k });
    }
    let mut sorted: Vec<&ScoredPair> = set.pairs.iter().collect();
    sorted.sort_by(|a, b| {
        a.forecast
            .total_cmp(&b.forecast)
            .then_with(|| a.question_id.cmp(&b.question_id))
    });

    let mut bins = Vec::with_capacity(k);
    let mut weighted = 0.0;
    for j in 0..k {
        let (lo, hi) = (j * n / k, (j + 1) * n / k);
        let slice = &sorted[lo..hi];
        let count = slice.len();
        let mean_forecast = slice.iter().map(|p| p.forecast).sum::<f64>() / count as f64;
        let observed_frequency =
            slice.iter().map(|p| f64::from(p.outcome)).sum::<f64>() / count as f64;
        weighted += count as f64 * (mean_forecast - observed_frequency).powi(2);
        bins.push(CalibrationBin {
            count,
            mean_forecast,
            observed_frequency,
        });
    }
    Ok(CalibrationReport {
        bins_requested: k,
        bins,
        calibration_index: weighted / n as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMode {
    Mean,
    Median,
    /// One member drawn uniformly by a ChaCha8 generator seeded with `seed`.
    Sampled { seed: u64 },
}

pub fn aggregate(members: &[Forecast], mode: AggregateMode) -> Result<Forecast, MetricError> {
    if members.is_empty() {
        return Err(MetricError::EmptyMembers);
    }
    let value = match mode {
        AggregateMode::Mean => {
            let mean = members.iter().map(|f| f.value()).sum::<f64>() / members.len() as f64;
            // Rounding can push the mean a hair outside the member range.
            let (lo, hi) = min_max(members);
            mean.clamp(lo, hi)
        }
        AggregateMode::Median => {
            let mut v: Vec<f64> = members.iter().map(|f| f.value()).collect();
            v.sort_by(f64::total_cmp);
            let m = v.len();
            if m % 2 == 1 {
                v[m / 2]
            } else {
                (v[m / 2 - 1] + v[m / 2]) / 2.0
            }
        }
        AggregateMode::Sampled { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            members[rng.random_range(0..members.len())].value()
        }
    };
    Ok(Forecast::new(value).expect("aggregate of probabilities is a probability"))
}

fn min_max(members: &[Forecast]) -> (f64, f64) {
    members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
        (lo.min(f.value()), hi.max(f.value()))
    })
}

/// Population standard deviation of member forecasts per record, averaged
/// over records.
pub fn ensemble_std(records: &[ForecastRecord]) -> Result<f64, MetricError> {
    if records.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let mut total = 0.0;
    for rec in records {
        let vals = rec.member_values();
        if vals.len() < 2 {
            return Err(MetricError::InsufficientMembers {
                question_id: rec.question_id.clone(),
            });
        }
        let m = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / m;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        total += var.sqrt();
    }
    Ok(total / records.len() as f64)
}

/// Per-method answers keyed by question id.
pub type MethodAnswers = BTreeMap<String, MemberOutcome>;

#[derive(Debug, Clone, PartialEq)]
pub struct DropOutcome {
    pub sets: BTreeMap<String, ScoredSet>,
    pub dropped: BTreeSet<String>,
}

/// Removes every question that any method declined from all methods, then
/// pairs the survivors with their outcomes.
pub fn apply_drop_rule(
    method_sets: &BTreeMap<String, MethodAnswers>,
    outcomes: &BTreeMap<String, u8>,
) -> Result<DropOutcome, MetricError> {
    let mut universe: Option<BTreeSet<&String>> = None;
    for (method, answers) in method_sets {
        let keys: BTreeSet<&String> = answers.keys().collect();
        match &universe {
            None => universe = Some(keys),
            Some(u) if *u != keys => {
                let diff: Vec<&&String> = u.symmetric_difference(&keys).take(5).collect();
                return Err(MetricError::UniverseMismatch(format!(
                    "method {method:?} differs on {diff:?}"
                )));
            }
            Some(_) => {}
        }
    }

    let dropped: BTreeSet<String> = method_sets
        .values()
        .flat_map(|answers| {
            answers
                .iter()
                .filter(|(_, a)| matches!(a, MemberOutcome::Declined(_)))
                .map(|(q, _)| q.clone())
        })
        .collect();

    let mut sets = BTreeMap::new();
    for (method, answers) in method_sets {
        let mut pairs = Vec::new();
        for (qid, answer) in answers {
            if dropped.contains(qid) {
                continue;
            }
            let outcome = *outcomes
                .get(qid)
                .ok_or_else(|| MetricError::MissingOutcome(qid.clone()))?;
            let forecast = answer.forecast().expect("declined answers were dropped").value();
            pairs.push(ScoredPair {
                question_id: qid.clone(),
                forecast,
                outcome,
            });
        }
        sets.insert(method.clone(), ScoredSet::new(method.clone(), pairs)?);
    }
    Ok(DropOutcome { sets, dropped })
}

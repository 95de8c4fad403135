use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use super::PipelineError;
use crate::domain::{DeclineReason, Forecast, ForecastRecord, MemberOutcome, Question};
use crate::jsonl;
use crate::metrics::{
    accuracy, apply_drop_rule, brier, calibration_index, ensemble_std, format_report, MethodAnswers, MethodScore,
    ScoreReport,
};

pub const CROWD_METHOD: &str = "Crowd";
pub const REPORT_MD: &str = "report.md";
pub const REPORT_JSON: &str = "report.json";
const STD_DEFINITION: &str =
    "mean over questions of the population standard deviation of ensemble member forecasts";

/// One forecast file scored as one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodInput {
    pub label: String,
    pub path: PathBuf,
}

impl MethodInput {
    /// Parses `label=path`, or a bare path labelled by its file stem.
    pub fn parse(arg: &str) -> Self {
        match arg.split_once('=') {
            Some((label, path)) if !label.is_empty() && !path.is_empty() => {
                Self { label: label.to_string(), path: PathBuf::from(path) }
            }
            _ => {
                let path = PathBuf::from(arg);
                let label = path
                    .file_stem()
                    .map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
                Self { label, path }
            }
        }
    }
}

fn record_answer(r: &ForecastRecord) -> MemberOutcome {
    match r.aggregate {
        Some(a) if !r.declined => MemberOutcome::Forecast(a),
        _ => {
            let reason = r
                .members
                .iter()
                .find_map(|m| match &m.outcome {
                    MemberOutcome::Declined(reason) => Some(reason.clone()),
                    MemberOutcome::Forecast(_) => None,
                })
                .unwrap_or(DeclineReason::NoNumber);
            MemberOutcome::Declined(reason)
        }
    }
}

/// Scores each forecast file, plus the crowd when the dataset carries crowd
/// probabilities, over the questions no method declined.
///
/// A scorable question missing from a file counts as declined by that
/// method. Reports are written to `out_dir` when given.
pub fn cmd_score(
    methods: &[MethodInput],
    dataset: &Path,
    bins: usize,
    out_dir: Option<&Path>,
) -> Result<ScoreReport, PipelineError> {
    if methods.is_empty() {
        return Err(PipelineError::Config("no forecast files given".into()));
    }
    if bins == 0 {
        return Err(PipelineError::Config("bins must be at least 1".into()));
    }
    let questions: Vec<Question> = jsonl::read(dataset)?;
    let known: BTreeSet<&str> = questions.iter().map(|q| q.id.as_str()).collect();
    let scorable: Vec<&Question> = questions.iter().filter(|q| q.is_scorable()).collect();
    let unresolved_excluded = questions.len() - scorable.len();
    if unresolved_excluded > 0 {
        log::warn!("{unresolved_excluded} question(s) without a usable outcome excluded");
    }
    let outcomes: BTreeMap<String, u8> = scorable
        .iter()
        .map(|q| (q.id.clone(), q.outcome.expect("scorable")))
        .collect();

    let mut answers: BTreeMap<String, MethodAnswers> = BTreeMap::new();
    let mut records: BTreeMap<String, BTreeMap<String, ForecastRecord>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for m in methods {
        if m.label == CROWD_METHOD || answers.contains_key(&m.label) {
            return Err(PipelineError::Config(format!("duplicate method label {:?}", m.label)));
        }
        let file: Vec<ForecastRecord> = jsonl::read(&m.path)?;
        let mut by_id = BTreeMap::new();
        for r in file {
            if !known.contains(r.question_id.as_str()) {
                return Err(PipelineError::Config(format!(
                    "{}: question {:?} is not in the dataset",
                    m.path.display(),
                    r.question_id
                )));
            }
            if outcomes.contains_key(&r.question_id) {
                by_id.insert(r.question_id.clone(), r);
            }
        }
        let mut method_answers = MethodAnswers::new();
        for qid in outcomes.keys() {
            let answer = match by_id.get(qid) {
                Some(r) => record_answer(r),
                None => {
                    log::warn!("{}: no forecast for {qid}; treated as declined", m.label);
                    MemberOutcome::Declined(DeclineReason::NoNumber)
                }
            };
            method_answers.insert(qid.clone(), answer);
        }
        answers.insert(m.label.clone(), method_answers);
        records.insert(m.label.clone(), by_id);
        order.push(m.label.clone());
    }

    if scorable.iter().any(|q| q.crowd_prob.is_some()) {
        let crowd: MethodAnswers = scorable
            .iter()
            .map(|q| {
                let answer = match q.crowd_prob.map(Forecast::new) {
                    Some(Ok(f)) => MemberOutcome::Forecast(f),
                    _ => MemberOutcome::Declined(DeclineReason::NoNumber),
                };
                (q.id.clone(), answer)
            })
            .collect();
        answers.insert(CROWD_METHOD.to_string(), crowd);
        order.push(CROWD_METHOD.to_string());
    }

    let dropped = apply_drop_rule(&answers, &outcomes)?;
    let n = dropped.sets.values().next().map_or(0, |s| s.len());
    if n == 0 {
        return Err(PipelineError::Empty(format!(
            "no scorable questions ({} dropped, {unresolved_excluded} unresolved)",
            dropped.dropped.len()
        )));
    }

    let mut scores = Vec::with_capacity(order.len());
    for label in &order {
        let set = &dropped.sets[label];
        let std = records.get(label).and_then(|by_id| {
            let kept: Vec<ForecastRecord> = set
                .pairs()
                .iter()
                .map(|p| by_id[&p.question_id].clone())
                .collect();
            ensemble_std(&kept).ok()
        });
        let (ci, bins_out) = if set.len() >= bins {
            let c = calibration_index(set, bins)?;
            (Some(c.calibration_index), c.bins)
        } else {
            (None, Vec::new())
        };
        scores.push(MethodScore {
            method: label.clone(),
            n: set.len(),
            brier: brier(set)?,
            accuracy: accuracy(set)?,
            std,
            calibration_index: ci,
            bins: bins_out,
        });
    }
    let report = ScoreReport {
        methods: scores,
        dropped: dropped.dropped.into_iter().collect(),
        unresolved_excluded,
        bins,
        std_definition: STD_DEFINITION.to_string(),
    };
    if let Some(dir) = out_dir {
        jsonl::write_atomic(&dir.join(REPORT_MD), format_report(&report).as_bytes())?;
        let json = serde_json::to_string_pretty(&report).expect("serializable report");
        jsonl::write_atomic(&dir.join(REPORT_JSON), json.as_bytes())?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_labels() {
        assert_eq!(MethodInput::parse("rtf=a/b.jsonl").label, "rtf");
        let m = MethodInput::parse("runs/median.jsonl");
        assert_eq!(m.label, "median");
        assert_eq!(m.path, PathBuf::from("runs/median.jsonl"));
    }
}

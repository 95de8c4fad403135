//! Python bindings for the scoring metrics and the ReAct text helpers.

use foresight_core::metrics::{self, AggregateMode, MetricError, ScoredSet};
use foresight_core::react::{self, Extraction, ParsedEmission};
use foresight_core::domain::Forecast;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn scored(forecasts: Vec<f64>, outcomes: Vec<u8>) -> PyResult<ScoredSet> {
    if forecasts.len() != outcomes.len() {
        return Err(value_error(format!(
            "{} forecasts but {} outcomes",
            forecasts.len(),
            outcomes.len()
        )));
    }
    let pairs: Vec<(f64, u8)> = forecasts.into_iter().zip(outcomes).collect();
    ScoredSet::from_values("py", &pairs).map_err(value_error)
}

fn metric<T>(r: Result<T, MetricError>) -> PyResult<T> {
    r.map_err(value_error)
}

/// Mean squared error of `forecasts` against 0/1 `outcomes`.
#[pyfunction]
fn brier(forecasts: Vec<f64>, outcomes: Vec<u8>) -> PyResult<f64> {
    metric(metrics::brier(&scored(forecasts, outcomes)?))
}

/// Share of forecasts on the right side of 0.5 (0.5 itself predicts 0).
#[pyfunction]
fn accuracy(forecasts: Vec<f64>, outcomes: Vec<u8>) -> PyResult<f64> {
    metric(metrics::accuracy(&scored(forecasts, outcomes)?))
}

/// Calibration index over `bins` quantile bins.
#[pyfunction]
#[pyo3(signature = (forecasts, outcomes, bins = 10))]
fn calibration_index(forecasts: Vec<f64>, outcomes: Vec<u8>, bins: usize) -> PyResult<f64> {
    Ok(metric(metrics::calibration_index(&scored(forecasts, outcomes)?, bins))?.calibration_index)
}

/// Combines member probabilities with "mean", "median" or "sampled".
#[pyfunction]
#[pyo3(signature = (members, mode = "median", seed = 0))]
fn aggregate(members: Vec<f64>, mode: &str, seed: u64) -> PyResult<f64> {
    let mode = match mode {
        "mean" => AggregateMode::Mean,
        "median" => AggregateMode::Median,
        "sampled" => AggregateMode::Sampled { seed },
        other => return Err(value_error(format!("unknown aggregator {other:?}"))),
    };
    let members = members
        .into_iter()
        .map(Forecast::new)
        .collect::<Result<Vec<_>, _>>()
        .map_err(value_error)?;
    Ok(metric(metrics::aggregate(&members, mode))?.value())
}

/// Probability read from a final answer, or None when it declines.
#[pyfunction]
fn extract_probability(text: &str) -> Option<f64> {
    match react::extract_probability(text) {
        Extraction::Forecast { value, .. } => Some(value.value()),
        Extraction::Declined => None,
    }
}

/// Classifies a model emission; returns a dict with a `kind` key of
/// "action", "final" or "malformed".
#[pyfunction]
#[pyo3(signature = (text, tools = Vec::new()))]
fn parse_emission<'py>(py: Python<'py>, text: &str, tools: Vec<String>) -> PyResult<Bound<'py, PyDict>> {
    let names: Vec<&str> = tools.iter().map(String::as_str).collect();
    let d = PyDict::new(py);
    match react::parse_emission(text, &names) {
        ParsedEmission::Action { thought, action, input } => {
            d.set_item("kind", "action")?;
            d.set_item("thought", thought)?;
            d.set_item("action", action)?;
            d.set_item("input", input)?;
        }
        ParsedEmission::Final { thought, answer } => {
            d.set_item("kind", "final")?;
            d.set_item("thought", thought)?;
            d.set_item("answer", answer)?;
        }
        ParsedEmission::Malformed(reason) => {
            d.set_item("kind", "malformed")?;
            d.set_item("reason", reason.to_string())?;
        }
    }
    Ok(d)
}

#[pymodule]
fn foresight(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(brier, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(calibration_index, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(extract_probability, m)?)?;
    m.add_function(wrap_pyfunction!(parse_emission, m)?)?;
    Ok(())
}

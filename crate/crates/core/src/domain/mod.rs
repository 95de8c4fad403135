//! Shared data types of the forecasting pipeline and their line-delimited
//! serialized forms.

mod forecast;
mod question;
mod transcript;

pub use forecast::{
    Aggregator, DeclineReason, Forecast, ForecastRecord, MemberForecast, MemberOutcome,
    RecordError,
};
pub use question::{validate_question, Category, Question, QuestionFlag, ValidationError};
pub use transcript::{AgentStep, FinalMarker, MalformedReason, StepKind, Transcript, TranscriptNode};

pub(crate) mod ts {
    //! UTC timestamps with seconds precision, `YYYY-MM-DDTHH:MM:SSZ`.

    use chrono::{DateTime, NaiveDate, SecondsFormat, TimeZone, Utc};
    use serde::Serializer;

    pub fn format(t: &DateTime<Utc>) -> String {
        t.to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    /// Accepts RFC 3339 strings, bare `YYYY-MM-DD` dates (midnight UTC) and
    /// integer epoch milliseconds. Sub-second parts are truncated.
    pub fn parse_value(v: &serde_json::Value) -> Option<DateTime<Utc>> {
        match v {
            serde_json::Value::String(s) => parse_str(s),
            serde_json::Value::Number(n) => {
                let ms = n.as_i64()?;
                Utc.timestamp_opt(ms.div_euclid(1000), 0).single()
            }
            _ => None,
        }
    }

    pub fn parse_str(s: &str) -> Option<DateTime<Utc>> {
        let s = s.trim();
        if let Ok(t) = DateTime::parse_from_rfc3339(s) {
            return Utc.timestamp_opt(t.timestamp(), 0).single();
        }
        let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()?;
        Some(Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0)?))
    }

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(t))
    }
}

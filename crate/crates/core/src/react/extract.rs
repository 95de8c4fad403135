use std::sync::LazyLock;

use regex::Regex;

use crate::domain::Forecast;

pub const MIN_PROBABILITY: f64 = 0.01;
pub const MAX_PROBABILITY: f64 = 0.99;

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(\d+(?:\.\d+)?|\.\d+)(\s*%)?").expect("valid regex"));

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extraction {
    Forecast {
        value: Forecast,
        /// Probability before clamping.
        raw: f64,
    },
    Declined,
}

impl Extraction {
    pub fn forecast(self) -> Option<Forecast> {
        match self {
            Extraction::Forecast { value, .. } => Some(value),
            Extraction::Declined => None,
        }
    }
}

/// Reads a probability from the first number in `answer_text`.
///
/// `35%` and bare values in `(1, 100]` are read as percentages; results
/// are clamped to `[0.01, 0.99]`. No number, or a value above 100, is a
/// decline.
pub fn extract_probability(answer_text: &str) -> Extraction {
    let Some(caps) = NUMBER.captures(answer_text) else {
        return Extraction::Declined;
    };
    let Ok(number) = caps[1].parse::<f64>() else {
        return Extraction::Declined;
    };
    let percent = caps.get(2).is_some();
    let raw = if percent || number > 1.0 {
        if number > 100.0 {
            return Extraction::Declined;
        }
        number / 100.0
    } else {
        number
    };
    let value = Forecast::new(raw.clamp(MIN_PROBABILITY, MAX_PROBABILITY)).expect("clamped into range");
    Extraction::Forecast { value, raw }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(s: &str) -> Option<f64> {
        extract_probability(s).forecast().map(Forecast::value)
    }

    #[test]
    fn examples() {
        assert_eq!(v("0.35"), Some(0.35));
        assert_eq!(v("35%"), Some(0.35));
        assert_eq!(v("35 %"), Some(0.35));
        assert_eq!(v("35"), Some(0.35));
        assert_eq!(v("I cannot provide a numerical forecast."), None);
        assert_eq!(v("0.35The search results indicate"), Some(0.35));
        assert_eq!(v("approximately .4"), Some(0.4));
        assert_eq!(v("250"), None);
        assert_eq!(v("120%"), None);
    }

    #[test]
    fn clamping_keeps_raw() {
        assert_eq!(extract_probability("0"), Extraction::Forecast { value: Forecast::new(0.01).unwrap(), raw: 0.0 });
        assert_eq!(v("1"), Some(0.99));
        assert_eq!(v("100%"), Some(0.99));
        assert_eq!(v("0.5%"), Some(0.01));
    }

    proptest! {
        #[test]
        fn output_always_in_clamp_range(text in ".{0,80}") {
            if let Some(f) = extract_probability(&text).forecast() {
                prop_assert!((MIN_PROBABILITY..=MAX_PROBABILITY).contains(&f.value()));
            }
        }
    }
}

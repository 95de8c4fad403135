use super::{ExecResult, SearchResult};

pub const TRUNCATION_MARKER: &str = "[truncated]";

/// Single-line textual form of a tool result.
pub trait Render {
    fn render(&self) -> String;
}

impl Render for SearchResult {
    fn render(&self) -> String {
        let one_line = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("{} — {}", one_line(&self.title), one_line(&self.snippet))
    }
}

impl Render for ExecResult {
    fn render(&self) -> String {
        let mut out = self.stdout.clone();
        if !self.stderr.trim().is_empty() {
            if !out.is_empty() && !out.ends_with('\n') {
                out.push('\n');
            }
            out.push_str("stderr:\n");
            out.push_str(&self.stderr);
        }
        if out.trim().is_empty() {
            out = format!("(no output, exit status {})", self.exit_status);
        }
        out
    }
}

/// Renders results one per line, or `no results` for an empty list, capped
/// at `budget` characters.
pub fn render_observation<T: Render>(results: &[T], budget: usize) -> String {
    if results.is_empty() {
        return truncate_observation("no results", budget);
    }
    let text = results.iter().map(Render::render).collect::<Vec<_>>().join("\n");
    truncate_observation(&text, budget)
}

/// Cuts `text` to at most `budget` characters, ending with the truncation
/// marker when anything was removed.
pub fn truncate_observation(text: &str, budget: usize) -> String {
    if text.chars().count() <= budget {
        return text.to_string();
    }
    let marker_len = TRUNCATION_MARKER.chars().count() + 1;
    if budget < marker_len {
        return TRUNCATION_MARKER.chars().take(budget).collect();
    }
    let mut out: String = text.chars().take(budget - marker_len).collect();
    out.push('\n');
    out.push_str(TRUNCATION_MARKER);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn result(title: &str, snippet: &str) -> SearchResult {
        SearchResult {
            title: title.into(),
            url: "https://example.test".into(),
            snippet: snippet.into(),
            published: None,
        }
    }

    #[test]
    fn empty_and_single() {
        assert_eq!(render_observation::<SearchResult>(&[], 4000), "no results");
        assert_eq!(render_observation(&[result("T", "S")], 4000), "T — S");
        assert_eq!(render_observation(&[result("T\nx", "S  y")], 4000), "T x — S y");
    }

    #[test]
    fn fifty_long_snippets_are_truncated() {
        let rs: Vec<_> = (0..50).map(|i| result(&format!("t{i}"), &"lorem ipsum ".repeat(40))).collect();
        let out = render_observation(&rs, 4000);
        assert!(out.chars().count() <= 4000);
        assert!(out.ends_with(TRUNCATION_MARKER));
    }

    proptest! {
        #[test]
        fn never_exceeds_budget(
            snippets in prop::collection::vec(".{0,300}", 0..40),
            budget in 0usize..2000,
        ) {
            let rs: Vec<_> = snippets.iter().map(|s| result("title", s)).collect();
            let out = render_observation(&rs, budget);
            prop_assert!(out.chars().count() <= budget);
            prop_assert_eq!(&out, &render_observation(&rs, budget));
            let full = render_observation(&rs, usize::MAX);
            if full.chars().count() > budget && budget > TRUNCATION_MARKER.len() {
                prop_assert!(out.ends_with(TRUNCATION_MARKER));
            }
        }
    }
}

use std::path::Path;
use std::sync::{Arc, Mutex};

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{render_observation, ToolError, ToolHandler, ToolOutput};
use crate::http::{HttpClient, HttpRequest};

pub const ENV_SEARCH_API_KEY: &str = "SEARCH_API_KEY";
pub const DEFAULT_RESULTS: usize = 8;
pub const SEARCH_TOOL_NAME: &str = "Google Search Snippets";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub title: String,
    pub url: String,
    pub snippet: String,
    pub published: Option<NaiveDate>,
}

/// One outbound search. `before` is exclusive: only material published
/// strictly earlier may be returned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SearchQuery {
    pub query: String,
    pub before: NaiveDate,
    pub max_results: usize,
}

pub trait SearchProvider: Send + Sync {
    fn search(&self, q: &SearchQuery) -> Result<Vec<SearchResult>, ToolError>;
}

/// Runs a date-restricted search and drops any result whose known
/// publication date is on or after `before`. Undated results are kept.
pub fn search(
    provider: &dyn SearchProvider,
    query: &str,
    before: NaiveDate,
    k: usize,
) -> Result<Vec<SearchResult>, ToolError> {
    let query = query.trim();
    if query.is_empty() {
        return Err(ToolError::EmptyQuery);
    }
    let q = SearchQuery {
        query: query.to_string(),
        before,
        max_results: k,
    };
    let mut results = provider.search(&q)?;
    let before_len = results.len();
    results.retain(|r| r.published.is_none_or(|d| d < before));
    if results.len() < before_len {
        log::debug!(
            "dropped {} post-cutoff result(s) for {query:?}",
            before_len - results.len()
        );
    }
    results.truncate(k);
    Ok(results)
}

/// Serper.dev Google search adapter. The cutoff travels as a custom date
/// range (`tbs=cdr:1,cd_max:M/D/YYYY`) ending the day before `before`.
pub struct SerperSearch {
    http: HttpClient,
    api_key: String,
    endpoint: String,
}

impl SerperSearch {
    pub const ENDPOINT: &'static str = "https://google.serper.dev/search";

    pub fn new(http: HttpClient, api_key: impl Into<String>) -> Self {
        Self {
            http,
            api_key: api_key.into(),
            endpoint: Self::ENDPOINT.to_string(),
        }
    }

    pub fn from_env(http: HttpClient) -> Result<Self, ToolError> {
        let key = std::env::var(ENV_SEARCH_API_KEY)
            .map_err(|_| ToolError::Provider(format!("environment variable {ENV_SEARCH_API_KEY} is not set")))?;
        Ok(Self::new(http, key))
    }

    pub fn with_endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.endpoint = endpoint.into();
        self
    }

    pub fn date_restrict(before: NaiveDate) -> String {
        let last = before.checked_sub_days(Days::new(1)).unwrap_or(before);
        format!("cdr:1,cd_max:{}", last.format("%-m/%-d/%Y"))
    }

    pub fn request(&self, q: &SearchQuery) -> HttpRequest {
        let body = json!({
            "q": q.query,
            "num": q.max_results,
            "tbs": Self::date_restrict(q.before),
        });
        HttpRequest::post_json(&self.endpoint, &body).header("X-API-KEY", self.api_key.clone())
    }
}

fn parse_result_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    ["%b %d, %Y", "%B %d, %Y", "%Y-%m-%d", "%d %b %Y"]
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(s, f).ok())
}

impl SearchProvider for SerperSearch {
    fn search(&self, q: &SearchQuery) -> Result<Vec<SearchResult>, ToolError> {
        let mut log = Vec::new();
        let resp = self
            .http
            .send(&self.request(q), &mut log)
            .map_err(|e| ToolError::Provider(e.to_string()))?;
        let v: Value = serde_json::from_str(&resp.body).map_err(|e| ToolError::Provider(e.to_string()))?;
        let organic = v.get("organic").and_then(Value::as_array).cloned().unwrap_or_default();
        Ok(organic
            .iter()
            .filter_map(|r| {
                let text = |k: &str| r.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
                let title = text("title");
                let snippet = text("snippet");
                if title.is_empty() && snippet.is_empty() {
                    return None;
                }
                Some(SearchResult {
                    title,
                    url: text("link"),
                    snippet,
                    published: r.get("date").and_then(Value::as_str).and_then(parse_result_date),
                })
            })
            .collect())
    }
}

#[derive(Debug, Clone, Deserialize)]
struct FixtureLine {
    query: String,
    #[serde(flatten)]
    result: SearchResult,
}

/// Canned results read from a line-delimited file. Each line carries a
/// `query` plus the result fields; `"*"` lines answer unmatched queries.
/// Queries match after trimming quotes and case-folding.
pub struct FixtureSearchProvider {
    lines: Vec<FixtureLine>,
    requests: Mutex<Vec<SearchQuery>>,
}

fn normalize_query(q: &str) -> String {
    q.trim().trim_matches(['"', '\'']).trim().to_lowercase()
}

impl FixtureSearchProvider {
    pub fn load(path: &Path) -> Result<Self, crate::jsonl::JsonlError> {
        Ok(Self::from_lines(crate::jsonl::read(path)?))
    }

    fn from_lines(lines: Vec<FixtureLine>) -> Self {
        Self {
            lines,
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn from_results(entries: Vec<(String, SearchResult)>) -> Self {
        Self::from_lines(
            entries
                .into_iter()
                .map(|(query, result)| FixtureLine { query, result })
                .collect(),
        )
    }

    /// Every query received so far.
    pub fn requests(&self) -> Vec<SearchQuery> {
        self.requests.lock().unwrap().clone()
    }
}

impl SearchProvider for FixtureSearchProvider {
    fn search(&self, q: &SearchQuery) -> Result<Vec<SearchResult>, ToolError> {
        self.requests.lock().unwrap().push(q.clone());
        let wanted = normalize_query(&q.query);
        let pick = |key: &str| -> Vec<SearchResult> {
            self.lines
                .iter()
                .filter(|l| normalize_query(&l.query) == key)
                .map(|l| l.result.clone())
                .collect()
        };
        let exact = pick(&wanted);
        Ok(if exact.is_empty() { pick("*") } else { exact })
    }
}

/// The search tool: a cutoff-bound provider rendered into observations.
pub struct SearchTool {
    provider: Arc<dyn SearchProvider>,
    before: NaiveDate,
    k: usize,
    budget: usize,
}

impl SearchTool {
    pub fn new(provider: Arc<dyn SearchProvider>, before: NaiveDate, k: usize, budget: usize) -> Self {
        Self {
            provider,
            before,
            k,
            budget,
        }
    }
}

impl ToolHandler for SearchTool {
    fn invoke(&self, input: &str) -> ToolOutput {
        let query = input.trim().trim_matches('"');
        match search(self.provider.as_ref(), query, self.before, self.k) {
            Ok(results) => ToolOutput::text(render_observation(&results, self.budget)),
            Err(e) => ToolOutput::text(format!("[search error: {e}]")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{HttpResponse, HttpTransport};

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn fixture(published: Option<&str>) -> FixtureSearchProvider {
        FixtureSearchProvider::from_results(vec![(
            "historical price data of Ethereum".into(),
            SearchResult {
                title: "Ethereum Price History".into(),
                url: "https://example.test/eth".into(),
                snippet: "Daily, weekly and monthly ETH closes.".into(),
                published: published.map(d),
            },
        )])
    }

    #[test]
    fn renders_matching_fixture() {
        let tool = SearchTool::new(Arc::new(fixture(Some("2023-01-08"))), d("2024-04-15"), 8, 4000);
        let obs = tool.invoke("\"historical price data of Ethereum\"").observation;
        assert_eq!(obs, "Ethereum Price History — Daily, weekly and monthly ETH closes.");
    }

    #[test]
    fn post_cutoff_results_are_filtered() {
        let p = fixture(Some("2024-05-01"));
        let r = search(&p, "historical price data of Ethereum", d("2024-04-15"), 8).unwrap();
        assert!(r.is_empty());
        let tool = SearchTool::new(Arc::new(fixture(Some("2024-04-15"))), d("2024-04-15"), 8, 4000);
        assert_eq!(tool.invoke("historical price data of Ethereum").observation, "no results");
        // Undated results survive.
        let r = search(&fixture(None), "historical price data of Ethereum", d("2024-04-15"), 8).unwrap();
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn empty_query_is_rejected() {
        assert_eq!(search(&fixture(None), "  ", d("2024-04-15"), 8), Err(ToolError::EmptyQuery));
    }

    struct Capture(Mutex<Vec<HttpRequest>>);

    impl HttpTransport for Capture {
        fn send(&self, req: &HttpRequest) -> Result<HttpResponse, String> {
            self.0.lock().unwrap().push(req.clone());
            Ok(HttpResponse::ok(
                json!({"organic": [
                    {"title": "a", "link": "u1", "snippet": "old", "date": "Jan 8, 2023"},
                    {"title": "b", "link": "u2", "snippet": "new", "date": "May 1, 2024"},
                    {"title": "c", "link": "u3", "snippet": "undated"}
                ]})
                .to_string(),
            ))
        }
    }

    #[test]
    fn serper_request_carries_date_range() {
        let cap = Arc::new(Capture(Mutex::new(vec![])));
        let serper = SerperSearch::new(HttpClient::new(cap.clone()), "key");
        let r = search(&serper, "eth price", d("2024-04-15"), 8).unwrap();
        assert_eq!(r.iter().map(|r| r.title.as_str()).collect::<Vec<_>>(), vec!["a", "c"]);
        assert_eq!(r[0].published, Some(d("2023-01-08")));
        let reqs = cap.0.lock().unwrap();
        let body: Value = serde_json::from_str(reqs[0].body.as_ref().unwrap()).unwrap();
        assert_eq!(body["tbs"], json!("cdr:1,cd_max:4/14/2024"));
        assert_eq!(body["q"], json!("eth price"));
        assert!(reqs[0].headers.contains(&("X-API-KEY".into(), "key".into())));
    }
}

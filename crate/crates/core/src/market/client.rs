use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;
use serde_json::Value;

use super::MarketError;
use crate::http::{with_query, HttpClient, HttpRequest};

pub const MANIFOLD_API: &str = "https://api.manifold.markets/v0";

/// Listing and detail access to a market platform.
pub trait MarketClient: Send + Sync {
    /// One page of markets. `before` is the id of the last market on the
    /// previous page; an empty page ends the listing.
    fn list_page(&self, before: Option<&str>) -> Result<Vec<Value>, MarketError>;
    fn market(&self, id: &str) -> Result<Value, MarketError>;
}

/// Manifold REST adapter.
pub struct ManifoldClient {
    http: HttpClient,
    base: String,
    page_size: usize,
}

impl ManifoldClient {
    pub fn new(http: HttpClient) -> Self {
        Self { http, base: MANIFOLD_API.to_string(), page_size: 1000 }
    }

    pub fn with_base(mut self, base: impl Into<String>) -> Self {
        self.base = base.into().trim_end_matches('/').to_string();
        self
    }

    pub fn with_page_size(mut self, n: usize) -> Self {
        self.page_size = n.max(1);
        self
    }

    fn get(&self, url: String) -> Result<Value, MarketError> {
        let mut log = Vec::new();
        let resp = self
            .http
            .send(&HttpRequest::get(url), &mut log)
            .map_err(|e| MarketError::Http(e.to_string()))?;
        serde_json::from_str(&resp.body).map_err(|e| MarketError::Decode(e.to_string()))
    }
}

impl MarketClient for ManifoldClient {
    fn list_page(&self, before: Option<&str>) -> Result<Vec<Value>, MarketError> {
        let limit = self.page_size.to_string();
        let mut params = vec![("limit", limit.as_str())];
        if let Some(b) = before {
            params.push(("before", b));
        }
        match self.get(with_query(&format!("{}/markets", self.base), &params))? {
            Value::Array(items) => Ok(items),
            other => Err(MarketError::Decode(format!("expected a JSON array, got {}", kind(&other)))),
        }
    }

    fn market(&self, id: &str) -> Result<Value, MarketError> {
        self.get(format!("{}/market/{id}", self.base))
    }
}

fn kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

#[derive(Debug, Deserialize)]
struct FixtureFile {
    pages: Vec<Vec<Value>>,
    #[serde(default)]
    details: BTreeMap<String, Value>,
}

/// Serves pages and market details from memory and records the page
/// tokens it was asked for.
pub struct FixtureMarketClient {
    pages: Vec<Vec<Value>>,
    details: BTreeMap<String, Value>,
    tokens: Mutex<Vec<Option<String>>>,
}

impl FixtureMarketClient {
    pub fn new(pages: Vec<Vec<Value>>, details: BTreeMap<String, Value>) -> Self {
        Self { pages, details, tokens: Mutex::new(Vec::new()) }
    }

    /// Reads `{"pages": [[market, ...], ...], "details": {id: market}}`.
    pub fn load(path: &Path) -> Result<Self, MarketError> {
        let text = std::fs::read_to_string(path).map_err(|e| MarketError::Http(format!("{}: {e}", path.display())))?;
        let f: FixtureFile =
            serde_json::from_str(&text).map_err(|e| MarketError::Decode(format!("{}: {e}", path.display())))?;
        Ok(Self::new(f.pages, f.details))
    }

    pub fn requested_tokens(&self) -> Vec<Option<String>> {
        self.tokens.lock().unwrap().clone()
    }

    fn last_id(page: &[Value]) -> Option<&str> {
        page.last().and_then(|m| m.get("id")).and_then(Value::as_str)
    }
}

impl MarketClient for FixtureMarketClient {
    fn list_page(&self, before: Option<&str>) -> Result<Vec<Value>, MarketError> {
        self.tokens.lock().unwrap().push(before.map(str::to_string));
        let index = match before {
            None => 0,
            Some(t) => {
                1 + self
                    .pages
                    .iter()
                    .position(|p| Self::last_id(p) == Some(t))
                    .ok_or_else(|| MarketError::UnknownPageToken(t.to_string()))?
            }
        };
        Ok(self.pages.get(index).cloned().unwrap_or_default())
    }

    fn market(&self, id: &str) -> Result<Value, MarketError> {
        if let Some(m) = self.details.get(id) {
            return Ok(m.clone());
        }
        self.pages
            .iter()
            .flatten()
            .find(|m| m.get("id").and_then(Value::as_str) == Some(id))
            .cloned()
            .ok_or_else(|| MarketError::NotFound(id.to_string()))
    }
}

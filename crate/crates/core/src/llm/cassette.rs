use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{Backend, ChatRequest, ChatResponse, LlmError, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestSummary {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub message_count: usize,
    /// Leading characters of the last user message.
    pub preview: String,
}

impl RequestSummary {
    pub fn of(req: &ChatRequest) -> Self {
        let preview = req
            .messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.chars().take(160).collect())
            .unwrap_or_default();
        Self {
            model_id: req.model_id.clone(),
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            message_count: req.messages.len(),
            preview,
        }
    }
}

/// One cassette line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub request: RequestSummary,
    pub response: ChatResponse,
}

/// Recorded responses keyed by request fingerprint, in recording order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cassette {
    entries: BTreeMap<String, Vec<ChatResponse>>,
}

impl Cassette {
    pub fn from_entries(entries: impl IntoIterator<Item = CassetteEntry>) -> Self {
        let mut map: BTreeMap<String, Vec<ChatResponse>> = BTreeMap::new();
        for e in entries {
            map.entry(e.fingerprint).or_default().push(e.response);
        }
        Self { entries: map }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let load_err = |line: usize, message: String| LlmError::CassetteLoad {
            path: path.display().to_string(),
            line,
            message,
        };
        let file = File::open(path).map_err(|e| load_err(0, e.to_string()))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| load_err(i + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry =
                serde_json::from_str(&line).map_err(|e| load_err(i + 1, e.to_string()))?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn responses(&self, fingerprint: &str) -> &[ChatResponse] {
        self.entries.get(fingerprint).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Serves recorded responses. Repeated identical requests receive the
/// successive entries recorded for their fingerprint.
pub struct ReplayBackend {
    cassette: Cassette,
    cursors: Mutex<HashMap<String, usize>>,
}

impl ReplayBackend {
    pub fn new(cassette: Cassette) -> Self {
        Self {
            cassette,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        Ok(Self::new(Cassette::load(path)?))
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let fp = req.fingerprint();
        let mut cursors = self.cursors.lock().unwrap();
        let cursor = cursors.entry(fp.clone()).or_insert(0);
        match self.cassette.responses(&fp).get(*cursor) {
            Some(resp) => {
                *cursor += 1;
                Ok(resp.clone())
            }
            None => Err(LlmError::CassetteMiss { fingerprint: fp }),
        }
    }
}

/// Forwards to an inner backend and appends every successful exchange to a
/// cassette file.
pub struct RecordingBackend {
    inner: Arc<dyn Backend>,
    file: Mutex<File>,
}

impl RecordingBackend {
    /// Opens `path` for appending, creating it if needed.
    pub fn open(inner: Arc<dyn Backend>, path: &Path) -> Result<Self, LlmError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| LlmError::CassettePersist(e.to_string()))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::CassettePersist(format!("{}: {e}", path.display())))?;
        Ok(Self {
            inner,
            file: Mutex::new(file),
        })
    }
}

impl Backend for RecordingBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let resp = self.inner.complete(req)?;
        let entry = CassetteEntry {
            fingerprint: req.fingerprint(),
            request: RequestSummary::of(req),
            response: resp.clone(),
        };
        let mut line = serde_json::to_string(&entry).expect("cassette entry serializes");
        line.push('\n');
        let mut f = self.file.lock().unwrap();
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| LlmError::CassettePersist(e.to_string()))?;
        Ok(resp)
    }
}

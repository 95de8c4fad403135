use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::domain::Aggregator;
use crate::hierarchy::{AgentMode, AgentSettings};
use crate::http::{HttpClient, RateLimiter, ReqwestTransport};
use crate::llm::{Backend, LiveBackend, RecordingBackend, ReplayBackend};
use crate::market::{FixtureMarketClient, Judge, ManifoldClient, MarketClient};
use crate::metrics::DEFAULT_BINS;
use crate::tools::{FixtureSearchProvider, SandboxConfig, SearchProvider, SerperSearch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeSettings {
    pub filter_model: String,
    pub category_model: String,
}

impl Default for JudgeSettings {
    fn default() -> Self {
        Self { filter_model: "gpt-4o".into(), category_model: "gpt-3.5-turbo".into() }
    }
}

impl JudgeSettings {
    pub fn filter(&self) -> Judge {
        Judge::new(&self.filter_model)
    }

    pub fn category(&self) -> Judge {
        Judge::new(&self.category_model)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    /// Recorded model exchanges; replayed unless recording.
    pub cassette: Option<PathBuf>,
    /// Canned search results used instead of the live search API.
    pub search_fixture: Option<PathBuf>,
    /// Canned market listing used instead of the live market API.
    pub market_fixture: Option<PathBuf>,
    pub probe_file: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Paths {
    /// Resolves relative paths against `base`.
    pub fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.dataset,
            &mut self.cassette,
            &mut self.search_fixture,
            &mut self.market_fixture,
            &mut self.probe_file,
            &mut self.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Settings for one pipeline run, read from TOML and overridable by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Research cutoff; defaults to the dataset snapshot date.
    pub cutoff_date: Option<NaiveDate>,
    pub ensemble_size: usize,
    pub aggregator: Aggregator,
    pub bins: usize,
    pub workers: usize,
    pub seed: u64,
    pub mode: AgentMode,
    pub record: bool,
    pub rate_limit_per_minute: Option<u32>,
    pub request_timeout_secs: u64,
    pub agent: AgentSettings,
    pub judge: JudgeSettings,
    pub sandbox: SandboxConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            cutoff_date: None,
            ensemble_size: 3,
            aggregator: Aggregator::Median,
            bins: DEFAULT_BINS,
            workers: 4,
            seed: 0,
            mode: AgentMode::Hierarchical,
            record: false,
            rate_limit_per_minute: None,
            request_timeout_secs: 120,
            agent: AgentSettings::default(),
            judge: JudgeSettings::default(),
            sandbox: SandboxConfig::default(),
            paths: Paths::default(),
        }
    }
}

/// Command-line overrides; `None` keeps the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub cassette: Option<PathBuf>,
    pub record: bool,
    pub cutoff: Option<NaiveDate>,
    pub ensemble: Option<usize>,
    pub aggregator: Option<Aggregator>,
    pub bins: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            config.paths.rebase(base);
        }
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(c) = &o.cassette {
            self.paths.cassette = Some(c.clone());
        }
        self.record |= o.record;
        self.cutoff_date = o.cutoff.or(self.cutoff_date);
        self.ensemble_size = o.ensemble.unwrap_or(self.ensemble_size);
        self.aggregator = o.aggregator.unwrap_or(self.aggregator);
        self.bins = o.bins.unwrap_or(self.bins);
        self.seed = o.seed.unwrap_or(self.seed);
        self.workers = o.workers.unwrap_or(self.workers);
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.ensemble_size == 0 {
            return bad("ensemble_size must be at least 1");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        if self.bins == 0 {
            return bad("bins must be at least 1");
        }
        if self.agent.planner_max_iterations == 0 || self.agent.subagent_max_iterations == 0 {
            return bad("iteration limits must be at least 1");
        }
        if let Some(c) = self.cutoff_date.filter(|c| *c > Utc::now().date_naive()) {
            return Err(PipelineError::Config(format!("cutoff_date {c} is in the future")));
        }
        if self.record && self.paths.cassette.is_none() {
            return bad("recording needs a cassette path");
        }
        Ok(())
    }

    /// Cutoff as configured, else the earliest snapshot date in `questions`.
    pub fn effective_cutoff(&self, questions: &[crate::domain::Question]) -> Option<NaiveDate> {
        self.cutoff_date.or_else(|| questions.iter().map(|q| q.fetched_at.date_naive()).min())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out_dir.clone().unwrap_or_else(|| PathBuf::from("run"))
    }

    fn http(&self) -> Result<HttpClient, PipelineError> {
        let transport = ReqwestTransport::new(Duration::from_secs(self.request_timeout_secs)).map_err(PipelineError::Config)?;
        let mut http = HttpClient::new(Arc::new(transport));
        http.limiter = self.rate_limit_per_minute.map(|n| Arc::new(RateLimiter::per_minute(n)));
        Ok(http)
    }

    /// Replay when a cassette is configured, live (optionally recording)
    /// otherwise.
    pub fn backend(&self) -> Result<Arc<dyn Backend>, PipelineError> {
        let live = || -> Result<Arc<dyn Backend>, PipelineError> { Ok(Arc::new(LiveBackend::from_env(self.http()?)?)) };
        Ok(match (&self.paths.cassette, self.record) {
            (Some(path), true) => Arc::new(RecordingBackend::open(live()?, path)?),
            (Some(path), false) => Arc::new(ReplayBackend::load(path)?),
            (None, _) => live()?,
        })
    }

    pub fn search(&self) -> Result<Arc<dyn SearchProvider>, PipelineError> {
        Ok(match &self.paths.search_fixture {
            Some(path) => Arc::new(FixtureSearchProvider::load(path)?),
            None => Arc::new(SerperSearch::from_env(self.http()?)?),
        })
    }

    pub fn markets(&self) -> Result<Arc<dyn MarketClient>, PipelineError> {
        Ok(match &self.paths.market_fixture {
            Some(path) => Arc::new(FixtureMarketClient::load(path)?),
            None => Arc::new(ManifoldClient::new(self.http()?)),
        })
    }
}

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{NaiveDate, TimeZone, Utc};
use foresight_core::domain::{Aggregator, DeclineReason, ForecastRecord, MemberOutcome, Question};
use foresight_core::jsonl;
use foresight_core::llm::{Backend, LlmError, ProbeResult, ReplayBackend, ScriptedBackend};
use foresight_core::market::FixtureMarketClient;
use foresight_core::metrics::parse_report_tables;
use foresight_core::pipeline::{
    cmd_curate, cmd_forecast, cmd_probe, cmd_resolve, cmd_score, JudgeSettings, MethodInput, Overrides, PipelineError,
    QuestionStatus, RunConfig, RunManifest, TranscriptIndexEntry, CROWD_METHOD, MANIFEST_FILE, RECORDS_FILE, REPORT_JSON,
    REPORT_MD,
};
use foresight_core::tools::{FixtureSearchProvider, SearchProvider};
use tempfile::TempDir;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn run_config(out: &Path) -> RunConfig {
    let mut c = RunConfig::load(&fixtures().join("run/config.toml")).unwrap();
    c.paths.out_dir = Some(out.to_path_buf());
    c
}

fn replay(c: &RunConfig) -> Arc<dyn Backend> {
    Arc::new(ReplayBackend::load(c.paths.cassette.as_ref().unwrap()).unwrap())
}

fn search(c: &RunConfig) -> Arc<dyn SearchProvider> {
    Arc::new(FixtureSearchProvider::load(c.paths.search_fixture.as_ref().unwrap()).unwrap())
}

fn forecast(c: &RunConfig) -> Result<foresight_core::pipeline::ForecastSummary, PipelineError> {
    cmd_forecast(c.paths.dataset.as_ref().unwrap(), c, replay(c), search(c))
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn replayed_run_is_complete_and_repeatable() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let first = forecast(&run_config(a.path())).unwrap();
    let second = forecast(&run_config(b.path())).unwrap();

    assert_eq!(first.records.len(), 5);
    assert!(first.records.iter().all(|r| r.aggregate.is_some()));
    assert_eq!(first.records, second.records);
    assert_eq!(read(&a.path().join(RECORDS_FILE)), read(&b.path().join(RECORDS_FILE)));

    let member_files: usize = first.records.iter().map(|r| r.members.len()).sum();
    assert_eq!(member_files, 15);
    for r in &first.records {
        for m in &r.members {
            assert!(a.path().join(m.transcript_ref.as_ref().unwrap()).is_file());
        }
    }
    assert_eq!(first.manifest.questions.len(), 5);
    assert!(first.manifest.questions.iter().all(|s| s.status == QuestionStatus::Forecasted));
    assert!(first.manifest.finished_at.is_some());
    assert!(first.manifest.token_usage.prompt_tokens > 0);

    // Manifests differ only in timing fields.
    let strip = |dir: &Path| {
        let mut m: RunManifest = serde_json::from_str(&read(&dir.join(MANIFEST_FILE))).unwrap();
        m.started_at = Utc.timestamp_opt(0, 0).unwrap();
        m.finished_at = None;
        m.wall_time_secs = 0.0;
        m.config.paths.out_dir = None;
        m
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn median_of_members_and_crowd_free_record_values() {
    let out = TempDir::new().unwrap();
    let s = forecast(&run_config(out.path())).unwrap();
    let by_id = |id: &str| s.records.iter().find(|r| r.question_id == id).unwrap().clone();
    let celtics = by_id("celtics-r1");
    assert_eq!(celtics.member_values(), vec![0.88, 0.9, 0.85]);
    assert_eq!(celtics.aggregate.unwrap().value(), 0.88);
    assert_eq!(by_id("fedcut").aggregate.unwrap().value(), 0.12);
    assert_eq!(by_id("eth3700").member_values(), vec![0.35; 3]);
}

#[test]
fn transcript_index_holds_nested_children() {
    let out = TempDir::new().unwrap();
    forecast(&run_config(out.path())).unwrap();
    let index: Vec<TranscriptIndexEntry> = jsonl::read(&out.path().join("transcripts/eth3700/index.jsonl")).unwrap();
    assert_eq!(index.len(), 3);
    let tree = &index[0].tree;
    assert_eq!(tree.children.len(), 2);
    assert_eq!(tree.depth(), 2);
    for child in &tree.children {
        let step = child.parent_step.unwrap();
        assert_eq!(tree.transcript.steps[step].action_input(), Some(child.transcript.task.as_str()));
    }
    assert!(out.path().join("transcripts/eth3700/eth3700.0.0.web_research.transcript").is_file());
    assert!(out.path().join("transcripts/eth3700/eth3700.0.1.web_research.transcript").is_file());
}

#[test]
fn resume_recomputes_only_missing_records() {
    let out = TempDir::new().unwrap();
    let config = run_config(out.path());
    forecast(&config).unwrap();
    let path = out.path().join(RECORDS_FILE);
    let full = read(&path);
    let records: Vec<ForecastRecord> = jsonl::read(&path).unwrap();
    let kept: Vec<&ForecastRecord> = records.iter().filter(|r| !["fedcut", "starship-orbit"].contains(&r.question_id.as_str())).collect();
    jsonl::write(&path, &kept).unwrap();

    let again = forecast(&config).unwrap();
    assert_eq!(again.computed, vec!["fedcut".to_string(), "starship-orbit".to_string()]);
    assert_eq!(again.reused, 3);
    assert_eq!(read(&path), full);

    // A run over a finished directory does nothing.
    let idle = forecast(&config).unwrap();
    assert!(idle.computed.is_empty());
}

#[test]
fn resume_refuses_changed_settings() {
    let out = TempDir::new().unwrap();
    let mut config = run_config(out.path());
    forecast(&config).unwrap();
    config.ensemble_size = 2;
    assert!(matches!(forecast(&config), Err(PipelineError::Config(_))));
}

#[test]
fn sampled_single_member_equals_member() {
    let out = TempDir::new().unwrap();
    let mut config = run_config(out.path());
    config.apply(&Overrides { ensemble: Some(1), aggregator: Some(Aggregator::Sampled), ..Overrides::default() });
    let s = forecast(&config).unwrap();
    for r in &s.records {
        assert_eq!(r.members.len(), 1);
        assert_eq!(r.aggregate, r.members[0].outcome.forecast());
        assert!(r.sample_seed.is_some());
    }
}

#[test]
fn question_errors_are_recorded_and_retried() {
    let out = TempDir::new().unwrap();
    let config = run_config(out.path());
    let dataset = config.paths.dataset.clone().unwrap();
    let s = cmd_forecast(&dataset, &config, Arc::new(ScriptedBackend::sequence(Vec::<String>::new())), search(&config)).unwrap();
    assert!(s.manifest.questions.iter().all(|q| q.status == QuestionStatus::Error));
    assert!(s.records.iter().all(|r| r.declined));
    assert!(matches!(s.records[0].members[0].outcome, MemberOutcome::Declined(DeclineReason::Backend(_))));

    // The same directory then completes from the cassette.
    let fixed = forecast(&config).unwrap();
    assert_eq!(fixed.computed.len(), 5);
    assert!(fixed.records.iter().all(|r| !r.declined));
}

#[test]
fn auth_failure_aborts_the_run() {
    let out = TempDir::new().unwrap();
    let config = run_config(out.path());
    let dataset = config.paths.dataset.clone().unwrap();
    let backend = Arc::new(ScriptedBackend::new(|_, _| Err(LlmError::Auth { status: 401 })));
    let err = cmd_forecast(&dataset, &config, backend, search(&config)).unwrap_err();
    assert!(matches!(err, PipelineError::Fatal(_)));
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn empty_dataset_is_an_empty_result() {
    let out = TempDir::new().unwrap();
    let empty = out.path().join("none.jsonl");
    std::fs::write(&empty, "").unwrap();
    let config = run_config(&out.path().join("run"));
    let err = cmd_forecast(&empty, &config, replay(&config), search(&config)).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

fn scored_run(dir: &Path) -> PathBuf {
    forecast(&run_config(dir)).unwrap();
    dir.join(RECORDS_FILE)
}

#[test]
fn score_adds_crowd_and_writes_reports() {
    let out = TempDir::new().unwrap();
    let records = scored_run(out.path());
    let dataset = fixtures().join("run/questions.jsonl");
    let inputs = [MethodInput { label: "RTF".into(), path: records.clone() }];
    let report = cmd_score(&inputs, &dataset, 10, Some(out.path())).unwrap();
    let labels: Vec<&str> = report.methods.iter().map(|m| m.method.as_str()).collect();
    assert_eq!(labels, vec!["RTF", CROWD_METHOD]);
    assert!(report.methods.iter().all(|m| m.n == 5));
    // Five questions are fewer than ten bins.
    assert!(report.methods.iter().all(|m| m.calibration_index.is_none()));
    assert!(report.methods[0].std.is_some());
    assert!(report.methods[1].std.is_none());

    // Outcomes 0,0,1,0,1 against medians .35,.12,.88,.35,.30.
    let want = ((0.35f64).powi(2) + 0.12f64.powi(2) + 0.12f64.powi(2) + 0.35f64.powi(2) + 0.7f64.powi(2)) / 5.0;
    assert!((report.methods[0].brier - want).abs() < 1e-12);
    assert!((report.methods[0].accuracy - 0.8).abs() < 1e-12);

    let md = read(&out.path().join(REPORT_MD));
    let tables = parse_report_tables(&md).unwrap();
    assert_eq!(tables.scores[0].0, "RTF");
    assert_eq!(tables.scores[0].1, format!("{:.3}", report.methods[0].brier).parse::<f64>().unwrap());
    assert!(out.path().join(REPORT_JSON).is_file());
}

#[test]
fn identical_files_score_identically() {
    let out = TempDir::new().unwrap();
    let records = scored_run(out.path());
    let copy = out.path().join("copy.jsonl");
    std::fs::copy(&records, &copy).unwrap();
    let dataset = fixtures().join("run/questions.jsonl");
    let report = cmd_score(&[MethodInput::parse(records.to_str().unwrap()), MethodInput::parse(copy.to_str().unwrap())], &dataset, 2, None)
        .unwrap();
    let (a, b) = (&report.methods[0], &report.methods[1]);
    assert_eq!((a.brier, a.accuracy, a.std, a.calibration_index), (b.brier, b.accuracy, b.std, b.calibration_index));
    assert!(a.calibration_index.is_some());
}

#[test]
fn a_declined_question_leaves_every_method() {
    let out = TempDir::new().unwrap();
    let records_path = scored_run(out.path());
    let mut records: Vec<ForecastRecord> = jsonl::read(&records_path).unwrap();
    let target = records.iter_mut().find(|r| r.question_id == "fedcut").unwrap();
    let mut members = target.members.clone();
    members[1].outcome = MemberOutcome::Declined(DeclineReason::NoNumber);
    *target = ForecastRecord::assemble("fedcut", members, Aggregator::Median, 0).unwrap();
    let declining = out.path().join("declining.jsonl");
    jsonl::write(&declining, &records).unwrap();

    let dataset = fixtures().join("run/questions.jsonl");
    let inputs = [MethodInput::parse(records_path.to_str().unwrap()), MethodInput::parse(declining.to_str().unwrap())];
    let report = cmd_score(&inputs, &dataset, 10, None).unwrap();
    assert_eq!(report.dropped, vec!["fedcut".to_string()]);
    assert!(report.methods.iter().all(|m| m.n == 4));
}

#[test]
fn unresolved_questions_are_excluded_and_nothing_scorable_is_empty() {
    let out = TempDir::new().unwrap();
    let records = scored_run(out.path());
    let mut questions: Vec<Question> = jsonl::read(&fixtures().join("run/questions.jsonl")).unwrap();
    questions[0].outcome = None;
    let partial = out.path().join("partial.jsonl");
    jsonl::write(&partial, &questions).unwrap();
    let report = cmd_score(&[MethodInput::parse(records.to_str().unwrap())], &partial, 10, None).unwrap();
    assert_eq!(report.unresolved_excluded, 1);
    assert_eq!(report.methods[0].n, 4);

    for q in questions.iter_mut() {
        q.outcome = None;
    }
    jsonl::write(&partial, &questions).unwrap();
    let err = cmd_score(&[MethodInput::parse(records.to_str().unwrap())], &partial, 10, None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

fn d(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

#[test]
fn curate_from_fixture_markets() {
    let out = TempDir::new().unwrap();
    let market = fixtures().join("market");
    let client = FixtureMarketClient::load(&market.join("manifold.json")).unwrap();
    let backend = ReplayBackend::load(&market.join("judges.jsonl")).unwrap();
    let at = Utc.with_ymd_and_hms(2024, 4, 15, 0, 0, 0).unwrap();
    let path = out.path().join("questions.jsonl");
    let s = cmd_curate(&client, &backend, &JudgeSettings::default(), d("2024-04-16"), d("2024-05-15"), at, &path).unwrap();
    assert_eq!(s.counts_line(), "kept 3 / dropped 2");
    let questions: Vec<Question> = jsonl::read(&path).unwrap();
    let ids: Vec<&str> = questions.iter().map(|q| q.id.as_str()).collect();
    assert_eq!(ids, vec!["fedcut", "eth3700", "nba"]);
    assert!(questions.iter().all(|q| q.outcome.is_none() && q.crowd_prob.is_some()));
    let audit: Vec<serde_json::Value> = jsonl::read(&s.audit_path).unwrap();
    assert_eq!(audit.len(), 5);
    assert!(s.category_table.contains("| Sports | 1 |"));

    // Resolution back-fill from the detail payloads.
    let report = cmd_resolve(&client, &path, Utc.with_ymd_and_hms(2024, 6, 1, 0, 0, 0).unwrap()).unwrap();
    assert_eq!((report.resolved, report.excluded), (2, 1));
    let resolved: Vec<Question> = jsonl::read(&path).unwrap();
    let eth = resolved.iter().find(|q| q.id == "eth3700").unwrap();
    assert_eq!(eth.outcome, Some(0));
}

#[test]
fn empty_window_writes_empty_dataset() {
    let out = TempDir::new().unwrap();
    let client = FixtureMarketClient::load(&fixtures().join("market/manifold.json")).unwrap();
    let backend = ScriptedBackend::new(|_, _| Ok("Yes".into()));
    let path = out.path().join("q.jsonl");
    let at = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let s = cmd_curate(&client, &backend, &JudgeSettings::default(), d("2030-01-01"), d("2030-01-31"), at, &path).unwrap();
    assert_eq!(s.counts_line(), "kept 0 / dropped 0");
    assert_eq!(read(&path), "");
}

#[test]
fn probe_classifies_recorded_replies() {
    let probe = fixtures().join("probe");
    let file = probe.join("probes.jsonl");
    let cutoff = cmd_probe(&file, &ReplayBackend::load(&probe.join("cutoff.jsonl")).unwrap(), "gpt-4o").unwrap();
    assert!(cutoff.iter().all(|r| r.result == Some(ProbeResult::CutoffRespected)));
    let leaked = cmd_probe(&file, &ReplayBackend::load(&probe.join("leaked.jsonl")).unwrap(), "gpt-4o").unwrap();
    assert!(leaked.iter().all(|r| r.result == Some(ProbeResult::Leaked)));
    // Unrecorded model: every row errors, the command still returns.
    let missing = cmd_probe(&file, &ReplayBackend::load(&probe.join("leaked.jsonl")).unwrap(), "other").unwrap();
    assert!(missing.iter().all(|r| r.result.is_none() && r.error.is_some()));

    let err = cmd_probe(&probe.join("empty.jsonl"), &ScriptedBackend::sequence(["x"]), "m").unwrap_err();
    assert_eq!(err.to_string(), "no probes");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn config_files_and_overrides() {
    let c = RunConfig::from_toml("ensemble_size = 5\n[sandbox]\ntimeout_secs = 2.5\n").unwrap();
    assert_eq!(c.ensemble_size, 5);
    assert_eq!(c.sandbox.timeout.as_millis(), 2500);
    assert_eq!(c.aggregator, Aggregator::Median);
    assert!(RunConfig::from_toml("ensemble = 5").is_err());
    let round = RunConfig::from_toml(&toml::to_string(&c).unwrap()).unwrap();
    assert_eq!(round, c);

    let mut c = RunConfig::default();
    c.apply(&Overrides { ensemble: Some(0), ..Overrides::default() });
    assert!(c.validate().is_err());
    let mut c = RunConfig::default();
    c.apply(&Overrides { cutoff: Some(d("2999-01-01")), ..Overrides::default() });
    assert!(c.validate().is_err());
    let mut c = RunConfig::default();
    c.apply(&Overrides { record: true, ..Overrides::default() });
    assert!(c.validate().is_err());

    let loaded = RunConfig::load(&fixtures().join("run/config.toml")).unwrap();
    assert!(loaded.paths.dataset.unwrap().is_absolute());
}

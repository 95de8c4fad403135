//! Rebuilds the recorded model exchanges under `fixtures/` by running each
//! pipeline command against a scripted backend while recording.
//!
//! cargo run -p foresight-core --example regen_fixtures

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{NaiveDate, TimeZone, Utc};
use foresight_core::hierarchy::{CODE_INTERPRETER, CODE_TOOL_NAME, PLANNER_ID, WEB_RESEARCH};
use foresight_core::llm::{Backend, ChatRequest, LlmError, RecordingBackend, Role, ScriptedBackend};
use foresight_core::market::FixtureMarketClient;
use foresight_core::pipeline::{cmd_curate, cmd_forecast, cmd_probe, JudgeSettings, RunConfig};
use foresight_core::tools::{FixtureSearchProvider, SEARCH_TOOL_NAME};

fn agent(req: &ChatRequest) -> &'static str {
    let system = &req.messages[0].content;
    if system.contains("research assistant") {
        WEB_RESEARCH
    } else if system.contains("computation assistant") {
        CODE_INTERPRETER
    } else {
        PLANNER_ID
    }
}

fn turns(req: &ChatRequest) -> usize {
    req.messages.iter().filter(|m| m.role == Role::Assistant).count()
}

fn task(req: &ChatRequest) -> &str {
    let t = req.messages[1].content.strip_prefix("Task:\n").unwrap_or_default();
    t.split("\n\n[").next().unwrap_or(t)
}

fn last_observation(req: &ChatRequest) -> &str {
    let last = &req.messages.last().unwrap().content;
    last.strip_prefix("Observation: ").unwrap_or(last)
}

fn research(req: &ChatRequest) -> String {
    if turns(req) == 0 {
        format!("Thought: Do I need to use a tool? Yes\nAction: {SEARCH_TOOL_NAME}\nAction Input: \"{}\"", task(req))
    } else {
        let found = last_observation(req).lines().next().unwrap_or_default();
        format!("Thought: Do I need to use a tool? No\nFinal Answer: {found}")
    }
}

fn program_for(task: &str) -> &'static str {
    if task.contains("2 cuts in 8 meetings") {
        "print(round((0.04 + 2 / 8) / 2, 3))"
    } else {
        "print(round(1 - (1 - 0.25) ** 1.5, 3))"
    }
}

fn compute(req: &ChatRequest) -> String {
    if turns(req) == 0 {
        format!(
            "Thought: Do I need to use a tool? Yes\nAction: {CODE_TOOL_NAME}\nAction Input: ```python\n{}\n```",
            program_for(task(req))
        )
    } else {
        format!("Thought: Do I need to use a tool? No\nFinal Answer: The program printed {}", last_observation(req).trim())
    }
}

fn act(tool: &str, input: &str, thought: &str) -> String {
    format!("{thought}\n\nThought: Do I need to use a tool? Yes\nAction: {tool}\nAction Input: {input}")
}

fn answer(value: &str, thought: &str) -> String {
    format!("{thought}\n\nThought: Do I need to use a tool? No\nFinal Answer: {value}")
}

/// Planner replies for the five-question run; `member` is how often this
/// exact request was seen before.
fn planner(req: &ChatRequest, member: usize) -> String {
    let title = task(req).lines().next().unwrap_or_default();
    let t = turns(req);
    let pick = |vals: [&str; 3]| vals[member.min(2)].to_string();
    if title.contains("ETH") {
        match t {
            0 => act(
                WEB_RESEARCH,
                "historical price data of Ethereum",
                "First, look at the price history of Ethereum to see how often it has closed above $3700.",
            ),
            1 => act(
                WEB_RESEARCH,
                "Ethereum historical price data 2021 2022 2023",
                "A base rate needs price levels for each of the last three years.",
            ),
            _ => answer("0.35", "ETH was above $3700 for only part of 2021 and rarely since; recent trading is lower."),
        }
    } else if title.contains("Fed") {
        match t {
            0 => act(CODE_INTERPRETER, "Average a 4% market price with a base rate of 2 cuts in 8 meetings", "Blend the market with a base rate."),
            _ => answer(&pick(["0.15", "0.1", "0.12"]), "A cut this early looks unlikely."),
        }
    } else if title.contains("Celtics") {
        match t {
            0 => "The Celtics are the top seed and heavy favourites in this series.".to_string(),
            _ => answer(&pick(["88%", "0.9", "85%"]), "Top seeds rarely lose in the first round."),
        }
    } else if title.contains("Starship") {
        match t {
            0 => act(WEB_RESEARCH, "Starship integrated flight test schedule 2024", "Check the flight schedule."),
            _ => answer(&pick(["0.4", "0.3", "0.35"]), "The next flight may slip past the deadline."),
        }
    } else {
        match t {
            0 => act(WEB_RESEARCH, "UK general election date announcement", "Look for signals on timing."),
            1 => act(
                CODE_INTERPRETER,
                "Chance of an announcement within 1.5 months at 25% per month",
                "Convert a monthly rate into the window.",
            ),
            _ => answer(&pick(["0.3", "0.25", "0.3"]), "Signals point to a later announcement."),
        }
    }
}

fn run_script(req: &ChatRequest, n: usize) -> Result<String, LlmError> {
    Ok(match agent(req) {
        WEB_RESEARCH => research(req),
        CODE_INTERPRETER => compute(req),
        _ => planner(req, n),
    })
}

fn ablation_script(req: &ChatRequest, _n: usize) -> Result<String, LlmError> {
    let t = turns(req);
    Ok(match agent(req) {
        WEB_RESEARCH => research(req),
        CODE_INTERPRETER => compute(req),
        _ if t < 2 && req.messages[0].content.contains(&format!("> {WEB_RESEARCH}")) => {
            act(WEB_RESEARCH, &format!("ETH market news week {t}"), "Gather recent coverage.")
        }
        _ if t < 2 => act(SEARCH_TOOL_NAME, &format!("ETH market news week {t}"), "Gather recent coverage."),
        _ => answer("0.3", "Coverage is mixed."),
    })
}

fn judge_script(req: &ChatRequest, _n: usize) -> Result<String, LlmError> {
    let prompt = &req.messages[0].content;
    let question = prompt.rsplit("Question: ").next().unwrap_or_default();
    Ok(if prompt.contains("Reply with the category name only") {
        if question.contains("Celtics") { "Sports" } else { "Economics & Business" }.to_string()
    } else if question.contains("thesis") || question.contains("traders") {
        "No".to_string()
    } else {
        "Yes".to_string()
    })
}

fn probe_script(leak: bool) -> impl Fn(&ChatRequest, usize) -> Result<String, LlmError> {
    move |req, _| {
        let q = &req.messages[0].content;
        Ok(match (leak, q) {
            (true, q) if q.contains("Super Bowl") => "The Kansas City Chiefs beat the 49ers in overtime.".into(),
            (true, q) if q.contains("Taiwanese") => "Lai Ching-te of the DPP won.".into(),
            (true, _) => "Oppenheimer won Best Picture.".into(),
            (false, _) => "I don't have information about events after my knowledge cutoff, so I cannot say.".into(),
        })
    }
}

fn recorder(script: impl Fn(&ChatRequest, usize) -> Result<String, LlmError> + Send + Sync + 'static, path: &Path) -> Arc<dyn Backend> {
    let _ = std::fs::remove_file(path);
    Arc::new(RecordingBackend::open(Arc::new(ScriptedBackend::new(script)), path).expect("open cassette"))
}

fn forecast_fixture(config_path: &Path, script: fn(&ChatRequest, usize) -> Result<String, LlmError>) {
    let mut config = RunConfig::load(config_path).expect("config");
    let scratch = tempfile::tempdir().expect("tempdir");
    config.workers = 1;
    config.paths.out_dir = Some(scratch.path().to_path_buf());
    let cassette = config.paths.cassette.clone().expect("cassette path");
    let search = Arc::new(FixtureSearchProvider::load(config.paths.search_fixture.as_ref().unwrap()).expect("search"));
    let dataset = config.paths.dataset.clone().unwrap();
    let summary = cmd_forecast(&dataset, &config, recorder(script, &cassette), search).expect("forecast");
    for r in &summary.records {
        println!("{}: {:?}", r.question_id, r.aggregate);
    }
}

fn main() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");

    forecast_fixture(&root.join("run/config.toml"), run_script);

    // Both ablation modes share one cassette; the second run appends.
    let ablation = root.join("ablation");
    let cassette = ablation.join("cassette.jsonl");
    let _ = std::fs::remove_file(&cassette);
    for mode in ["hierarchical", "single_agent"] {
        let mut config = RunConfig::load(&ablation.join(format!("{mode}.toml"))).expect("config");
        let scratch = tempfile::tempdir().expect("tempdir");
        config.paths.out_dir = Some(scratch.path().to_path_buf());
        let backend: Arc<dyn Backend> =
            Arc::new(RecordingBackend::open(Arc::new(ScriptedBackend::new(ablation_script)), &cassette).unwrap());
        let search = Arc::new(FixtureSearchProvider::load(&ablation.join("search.jsonl")).unwrap());
        let s = cmd_forecast(&ablation.join("questions.jsonl"), &config, backend, search).expect("ablation");
        println!("{mode}: {:?}", s.records[0].members[0].outcome);
    }

    let market = root.join("market");
    let client = FixtureMarketClient::load(&market.join("manifold.json")).expect("markets");
    let scratch = tempfile::tempdir().unwrap();
    let at = Utc.with_ymd_and_hms(2024, 4, 15, 0, 0, 0).unwrap();
    let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
    let backend = recorder(judge_script, &market.join("judges.jsonl"));
    let c = cmd_curate(&client, backend.as_ref(), &JudgeSettings::default(), d("2024-04-16"), d("2024-05-15"), at, &scratch.path().join("q.jsonl"))
        .expect("curate");
    println!("{}", c.counts_line());

    let probe = root.join("probe");
    for (name, leak) in [("cutoff", false), ("leaked", true)] {
        let backend = recorder(probe_script(leak), &probe.join(format!("{name}.jsonl")));
        for row in cmd_probe(&probe.join("probes.jsonl"), backend.as_ref(), "gpt-4o").expect("probe") {
            println!("{}", row.line());
        }
    }
}

use std::sync::Arc;

use chrono::{NaiveDate, TimeZone, Utc};
use foresight_core::domain::{Category, DeclineReason, MemberOutcome, Question};
use foresight_core::hierarchy::{
    forecast_one, AgentMode, AgentSettings, HierarchyError, LowLevelAgent, PlannerConfig, Toolkit, CODE_INTERPRETER,
    CODE_TOOL_NAME, NO_FINAL_ANSWER, WEB_RESEARCH,
};
use foresight_core::llm::{Backend, ChatRequest, LlmError, Role, ScriptedBackend};
use foresight_core::react::{render_task, ReactConfig};
use foresight_core::tools::{
    FixtureSearchProvider, Sandbox, SearchResult, ToolKind, ToolOutput, ToolRegistry, ToolSpec, SEARCH_TOOL_NAME,
};

fn cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 4, 15).unwrap()
}

fn toolkit() -> Toolkit {
    let result = |title: &str, snippet: &str| SearchResult {
        title: title.into(),
        url: "https://example.com".into(),
        snippet: snippet.into(),
        published: NaiveDate::from_ymd_opt(2024, 4, 2),
    };
    let provider = FixtureSearchProvider::from_results(vec![
        ("*".into(), result("ETH slides", "Ether fell 8% this week to $3,100 amid ETF doubts.")),
        ("*".into(), result("ETH outlook", "Analysts see resistance near $3,500.")),
    ]);
    Toolkit { search: Arc::new(provider), sandbox: Sandbox::default(), cutoff: cutoff() }
}

fn question() -> Question {
    Question {
        id: "eth".into(),
        title: "Will ETH close above 3700?".into(),
        background: None,
        resolution_criteria: None,
        close_time: Utc.with_ymd_and_hms(2024, 4, 30, 0, 0, 0).unwrap(),
        category: Category::EconomicsBusiness,
        crowd_prob: Some(0.3),
        outcome: Some(0),
        source: "test".into(),
        fetched_at: Utc.with_ymd_and_hms(2024, 4, 15, 0, 0, 0).unwrap(),
        flag: None,
    }
}

/// Which agent sent a request, judged from its system prompt.
fn agent(req: &ChatRequest) -> &'static str {
    let system = &req.messages[0].content;
    if system.contains("research assistant") {
        WEB_RESEARCH
    } else if system.contains("computation assistant") {
        CODE_INTERPRETER
    } else {
        "planner"
    }
}

fn turns(req: &ChatRequest) -> usize {
    req.messages.iter().filter(|m| m.role == Role::Assistant).count()
}

fn last_observation(req: &ChatRequest) -> String {
    req.messages.last().unwrap().content.clone()
}

fn research_script(req: &ChatRequest) -> String {
    if turns(req) == 0 {
        format!("Thought: search\nAction: {SEARCH_TOOL_NAME}\nAction Input: ETH price news")
    } else {
        let obs = last_observation(req);
        let first = obs.lines().next().unwrap_or_default().trim_start_matches("Observation: ").to_string();
        format!("Thought: done\nFinal Answer: Found: {first}")
    }
}

#[test]
fn low_level_agents_hold_raw_tools_only() {
    let inner_agent = ToolSpec::new("helper", "d", ToolKind::Agent, Arc::new(|_: &str| ToolOutput::default())).unwrap();
    let config = ReactConfig::new("x", "m", "p", ToolRegistry::new(vec![inner_agent]).unwrap()).unwrap();
    let err = LowLevelAgent::new("x", "d", config, 100).unwrap_err();
    assert!(matches!(err, HierarchyError::NestedAgent { .. }));

    let raw = toolkit().search_tool(&AgentSettings::default()).unwrap();
    let config = ReactConfig::new("planner", "m", "p", ToolRegistry::new(vec![raw]).unwrap()).unwrap();
    assert!(matches!(PlannerConfig::new(config, None), Err(HierarchyError::RawToolInPlanner(_))));
}

#[test]
fn default_hierarchy_shape() {
    let backend: Arc<dyn Backend> = Arc::new(ScriptedBackend::new(|_, _| Ok("Final Answer: 0.5".into())));
    let settings = AgentSettings::default();
    let planner = PlannerConfig::build(AgentMode::Hierarchical, &settings, &toolkit(), backend.clone()).unwrap();
    assert_eq!(planner.react.registry.names(), [WEB_RESEARCH, CODE_INTERPRETER]);
    assert!(planner.react.registry.iter().all(|t| t.kind() == ToolKind::Agent));
    let solo = PlannerConfig::build(AgentMode::SingleAgent, &settings, &toolkit(), backend).unwrap();
    assert_eq!(solo.react.registry.names(), [SEARCH_TOOL_NAME, CODE_TOOL_NAME]);
    // Raw tools carry their API schemas; sub-agent descriptions stay short.
    assert!(solo.react.system_message().len() > planner.react.system_message().len() + 2000);
}

#[test]
fn subagent_tool_returns_summary_of_fixture_snippets() {
    let backend: Arc<dyn Backend> = Arc::new(ScriptedBackend::new(|req, _| Ok(research_script(req))));
    let agent = LowLevelAgent::web_research(&AgentSettings::default(), &toolkit()).unwrap();
    let tool = agent.as_tool(backend).unwrap();
    let out = tool.invoke("find recent ETH price headlines");
    assert!(out.observation.contains("Ether fell 8% this week"), "{}", out.observation);
    assert_eq!(out.children.len(), 1);
    assert_eq!(out.children[0].transcript.task, "find recent ETH price headlines");
    assert_eq!(out.children[0].transcript.agent_id, WEB_RESEARCH);
}

#[test]
fn exhausted_subagent_reports_no_answer() {
    let backend: Arc<dyn Backend> = Arc::new(ScriptedBackend::new(|_, _| {
        Ok(format!("Action: {SEARCH_TOOL_NAME}\nAction Input: again"))
    }));
    let agent = LowLevelAgent::web_research(&AgentSettings::default(), &toolkit()).unwrap();
    let out = agent.as_tool(backend).unwrap().invoke("anything");
    assert_eq!(out.observation, NO_FINAL_ANSWER);
    assert_eq!(out.children[0].transcript.steps.len(), 5);
}

#[test]
fn failing_subagent_becomes_observation_and_planner_continues() {
    let backend: Arc<dyn Backend> = Arc::new(ScriptedBackend::new(|req, _| match agent(req) {
        WEB_RESEARCH => Err(LlmError::Status { status: 500, body: "boom".into() }),
        _ if turns(req) == 0 => Ok("Action: web_research\nAction Input: ETH news".into()),
        _ => Ok("Final Answer: 0.3".into()),
    }));
    let settings = AgentSettings::default();
    let planner = PlannerConfig::build(AgentMode::Hierarchical, &settings, &toolkit(), backend.clone()).unwrap();
    let run = forecast_one(&planner, backend.as_ref(), &question(), cutoff()).unwrap();
    assert_eq!(run.outcome.forecast().unwrap().value(), 0.3);
    let obs = &run.tree.transcript.steps[0].observation;
    assert!(obs.starts_with("[subagent error: "), "{obs}");
    assert!(obs.contains("boom"));
}

#[test]
fn direct_answer_has_no_children() {
    let backend: Arc<dyn Backend> = Arc::new(ScriptedBackend::new(|_, _| Ok("Final Answer: 0.5".into())));
    let planner = PlannerConfig::build(AgentMode::Hierarchical, &AgentSettings::default(), &toolkit(), backend.clone()).unwrap();
    let run = forecast_one(&planner, backend.as_ref(), &question(), cutoff()).unwrap();
    assert_eq!(run.outcome.forecast().unwrap().value(), 0.5);
    assert!(run.tree.children.is_empty());
    assert_eq!(run.tree.transcript.task, render_task(&question()));
}

#[test]
fn both_subagents_called_once() {
    let backend: Arc<dyn Backend> = Arc::new(ScriptedBackend::new(|req, _| {
        Ok(match (agent(req), turns(req)) {
            (WEB_RESEARCH, _) => research_script(req),
            (CODE_INTERPRETER, 0) => format!("Action: {CODE_TOOL_NAME}\nAction Input: print(3100 * 1.19)"),
            (CODE_INTERPRETER, _) => format!("Final Answer: computed {}", last_observation(req).trim_start_matches("Observation: ")),
            (_, 0) => "Thought: research\nAction: web_research\nAction Input: latest ETH price".into(),
            (_, 1) => "Thought: compute\nAction: code_interpreter\nAction Input: what is 3100 times 1.19".into(),
            _ => "Thought: Do I need to use a tool? No\nFinal Answer: 0.2".into(),
        })
    }));
    let planner = PlannerConfig::build(AgentMode::Hierarchical, &AgentSettings::default(), &toolkit(), backend.clone()).unwrap();
    let run = forecast_one(&planner, backend.as_ref(), &question(), cutoff()).unwrap();
    assert_eq!(run.outcome.forecast().unwrap().value(), 0.2);
    let tree = &run.tree;
    assert_eq!(tree.children.len(), 2);
    assert_eq!(tree.depth(), 2);
    for child in &tree.children {
        let step = &tree.transcript.steps[child.parent_step.unwrap()];
        assert_eq!(step.action_input(), Some(child.transcript.task.as_str()));
        assert!(child.children.is_empty());
    }
    assert_eq!(tree.children[0].transcript.agent_id, WEB_RESEARCH);
    assert_eq!(tree.children[1].transcript.agent_id, CODE_INTERPRETER);
    assert!(tree.transcript.steps[1].observation.contains("3689"), "{}", tree.transcript.steps[1].observation);
}

#[test]
fn cutoff_checks() {
    let backend: Arc<dyn Backend> = Arc::new(ScriptedBackend::new(|_, _| Ok("Final Answer: 0.5".into())));
    let planner = PlannerConfig::build(AgentMode::Hierarchical, &AgentSettings::default(), &toolkit(), backend.clone()).unwrap();
    let future = Utc::now().date_naive() + chrono::Days::new(2);
    assert!(matches!(forecast_one(&planner, backend.as_ref(), &question(), future), Err(HierarchyError::CutoffInFuture(_))));
    let other = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
    assert!(matches!(
        forecast_one(&planner, backend.as_ref(), &question(), other),
        Err(HierarchyError::CutoffMismatch { .. })
    ));
}

#[test]
fn single_agent_runs_out_of_budget_where_hierarchy_does_not() {
    let settings = AgentSettings { context_limit_tokens: 3000, ..AgentSettings::default() };
    // Eight long snippets: each raw observation is close to the 4000-char budget.
    let provider = Arc::new(FixtureSearchProvider::from_results(
        (0..8)
            .map(|i| {
                let snippet = format!("Ether market report {i}: {}", "price action and volume commentary ".repeat(12));
                let r = SearchResult { title: format!("Report {i}"), url: format!("https://example.com/{i}"), snippet, published: None };
                ("*".to_string(), r)
            })
            .collect(),
    ));
    let toolkit = || Toolkit { search: provider.clone(), sandbox: Sandbox::default(), cutoff: cutoff() };
    let backend: Arc<dyn Backend> = Arc::new(ScriptedBackend::new(|req, _| {
        Ok(match (agent(req), turns(req)) {
            (WEB_RESEARCH, _) => research_script(req),
            ("planner", n) if n < 2 && req.messages[0].content.contains("> web_research") => {
                format!("Action: web_research\nAction Input: ETH news {n}")
            }
            ("planner", n) if n < 2 => format!("Action: {SEARCH_TOOL_NAME}\nAction Input: ETH news {n}"),
            _ => "Final Answer: 0.3".into(),
        })
    }));
    let hier = PlannerConfig::build(AgentMode::Hierarchical, &settings, &toolkit(), backend.clone()).unwrap();
    let solo = PlannerConfig::build(AgentMode::SingleAgent, &settings, &toolkit(), backend.clone()).unwrap();
    let h = forecast_one(&hier, backend.as_ref(), &question(), cutoff()).unwrap();
    let s = forecast_one(&solo, backend.as_ref(), &question(), cutoff()).unwrap();
    assert_eq!(h.outcome.forecast().unwrap().value(), 0.3);
    assert_eq!(s.outcome, MemberOutcome::Declined(DeclineReason::Budget));
}


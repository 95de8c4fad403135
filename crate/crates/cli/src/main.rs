use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use clap::{Args, Parser, Subcommand};
use foresight_core::domain::Aggregator;
use foresight_core::metrics::format_report;
use foresight_core::pipeline::{
    cmd_curate, cmd_forecast, cmd_probe, cmd_resolve, cmd_score, MethodInput, Overrides, PipelineError, QuestionStatus,
    RunConfig, EXIT_FATAL,
};

#[derive(Parser)]
#[command(name = "foresight", version, about = "Forecast binary prediction-market questions with ReAct agents")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replay model exchanges from this file (or record into it with --record).
    #[arg(long, global = true)]
    cassette: Option<PathBuf>,
    /// Call the live model and append every exchange to the cassette.
    #[arg(long, global = true)]
    record: bool,
    /// Research cutoff date, YYYY-MM-DD.
    #[arg(long, global = true)]
    cutoff: Option<NaiveDate>,
    #[arg(long, global = true)]
    ensemble: Option<usize>,
    #[arg(long, global = true, value_parser = parse_aggregator)]
    aggregator: Option<Aggregator>,
    #[arg(long, global = true)]
    bins: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn parse_aggregator(s: &str) -> Result<Aggregator, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// Build a question file from markets closing in a date window.
    Curate {
        #[arg(long)]
        from: NaiveDate,
        #[arg(long)]
        to: NaiveDate,
        #[arg(long)]
        out: PathBuf,
        /// Snapshot time (RFC 3339 or YYYY-MM-DD); defaults to the start of
        /// the window or now, whichever is earlier.
        #[arg(long)]
        at: Option<String>,
        /// Canned market listing instead of the live API.
        #[arg(long)]
        market_fixture: Option<PathBuf>,
    },
    /// Back-fill outcomes into a question file.
    Resolve {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        market_fixture: Option<PathBuf>,
    },
    /// Run the forecasting ensemble over a question file.
    Forecast {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Output directory for records, transcripts and the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Canned search results instead of the live search API.
        #[arg(long)]
        search_fixture: Option<PathBuf>,
    },
    /// Score forecast files (`label=path` or `path`) against outcomes.
    Score {
        #[arg(required = true)]
        forecasts: Vec<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Directory for report.md and report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ask the model post-cutoff questions without search and classify the replies.
    Probe {
        #[arg(long)]
        file: Option<PathBuf>,
        /// Model to probe; defaults to the agent model.
        #[arg(long)]
        model: Option<String>,
    },
}

fn load_config(g: &Global) -> Result<RunConfig, PipelineError> {
    let mut config = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    config.apply(&Overrides {
        cassette: g.cassette.clone(),
        record: g.record,
        cutoff: g.cutoff,
        ensemble: g.ensemble,
        aggregator: g.aggregator,
        bins: g.bins,
        seed: g.seed,
        workers: g.workers,
    });
    config.validate()?;
    Ok(config)
}

fn required(opt: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
    opt.or_else(|| fallback.clone())
        .with_context(|| format!("no {what} given (flag or config paths)"))
}

fn parse_at(s: &str) -> anyhow::Result<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").with_context(|| format!("bad --at value {s:?}"))?;
    Ok(Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight")))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = load_config(&cli.global)?;
    match cli.command {
        Command::Curate { from, to, out, at, market_fixture } => {
            if market_fixture.is_some() {
                config.paths.market_fixture = market_fixture;
            }
            let at = match at {
                Some(s) => parse_at(&s)?,
                None => Utc::now().min(Utc.from_utc_datetime(&from.and_hms_opt(0, 0, 0).expect("midnight"))),
            };
            let markets = config.markets()?;
            let backend = config.backend()?;
            let s = cmd_curate(markets.as_ref(), backend.as_ref(), &config.judge, from, to, at, &out)?;
            for w in &s.warnings {
                eprintln!("warning: {w}");
            }
            if s.kept + s.dropped == 0 {
                eprintln!("warning: no markets in the window; wrote an empty dataset");
            }
            println!("{}", s.counts_line());
            println!("{} questions written to {}", s.snapshot.questions.len(), out.display());
            println!("audit log: {}", s.audit_path.display());
            print!("{}", s.category_table);
        }
        Command::Resolve { dataset, market_fixture } => {
            if market_fixture.is_some() {
                config.paths.market_fixture = market_fixture;
            }
            let dataset = required(dataset, &config.paths.dataset, "dataset")?;
            let r = cmd_resolve(config.markets()?.as_ref(), &dataset, Utc::now())?;
            println!(
                "resolved {} / excluded {} / pending {} / open {} / failed {}",
                r.resolved,
                r.excluded,
                r.pending,
                r.open,
                r.failed.len()
            );
        }
        Command::Forecast { dataset, out, search_fixture } => {
            if out.is_some() {
                config.paths.out_dir = out;
            }
            if search_fixture.is_some() {
                config.paths.search_fixture = search_fixture;
            }
            let dataset = required(dataset, &config.paths.dataset, "dataset")?;
            let s = cmd_forecast(&dataset, &config, config.backend()?, config.search()?)?;
            let count = |st: QuestionStatus| s.manifest.questions.iter().filter(|q| q.status == st).count();
            println!(
                "forecasted {} / declined {} / error {} ({} computed, {} reused)",
                count(QuestionStatus::Forecasted),
                count(QuestionStatus::Declined),
                count(QuestionStatus::Error),
                s.computed.len(),
                s.reused
            );
            println!("output: {}", config.out_dir().display());
        }
        Command::Score { forecasts, dataset, out } => {
            let dataset = required(dataset, &config.paths.dataset, "dataset")?;
            let inputs: Vec<MethodInput> = forecasts.iter().map(|f| MethodInput::parse(f)).collect();
            let report = cmd_score(&inputs, &dataset, config.bins, out.as_deref())?;
            print!("{}", format_report(&report));
        }
        Command::Probe { file, model } => {
            let file = required(file, &config.paths.probe_file, "probe file")?;
            let model = model.unwrap_or_else(|| config.agent.model_id.clone());
            let rows = cmd_probe(&file, config.backend()?.as_ref(), &model)?;
            for row in &rows {
                println!("{}", row.line());
            }
        }
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    e.downcast_ref::<PipelineError>().map_or(EXIT_FATAL, PipelineError::exit_code) as u8
}

fn main() -> ExitCode {
    // Usage errors exit 1; 2 is reserved for empty results.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_FATAL as u8) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use ehr_mcp::agent::ProviderConfig;
use ehr_mcp::bench::{build_report, load_runs, run_benchmark, write_runs, BenchConfig, Language, PolicySpec, TaskId};
use ehr_mcp::clinical_tools::ClinicalTools;
use ehr_mcp::mcp::{serve_http, serve_stdio, McpServer};
use ehr_mcp::warehouse::{generate_cohort, load_cohort, write_cohort, Cohort};

const DEFAULT_SEED: u64 = 42;
const DEFAULT_PATIENTS: usize = 8;
const REPORT_JSON: &str = "report.json";
const REPORT_TEXT: &str = "report.txt";

/// Synthetic clinical warehouse exposed as MCP tools, with an agent benchmark.
#[derive(Parser, Debug)]
#[command(name = "ehr-mcp", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Warehouse directory (ndjson tables plus cases). Without it, serve and
    /// bench use a cohort generated in memory from --seed.
    #[arg(long, global = true)]
    warehouse: Option<PathBuf>,
    /// Generator seed.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Prompt languages to benchmark.
    #[arg(long, global = true, value_enum, default_value_t = LangChoice::Both)]
    lang: LangChoice,
    /// Repetitions per (task, patient, language).
    #[arg(long, global = true, default_value_t = 10, value_parser = positive)]
    reps: usize,
    /// Benchmark worker threads [default: logical CPU count].
    #[arg(long, global = true, value_parser = positive)]
    jobs: Option<usize>,
    /// Output directory: the warehouse for `generate`, runs for `bench`,
    /// the runs to read for `report`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LangChoice {
    En,
    Ja,
    Both,
}

impl LangChoice {
    fn languages(self) -> Vec<Language> {
        match self {
            LangChoice::En => vec![Language::En],
            LangChoice::Ja => vec![Language::Ja],
            LangChoice::Both => vec![Language::En, Language::Ja],
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Transport {
    Stdio,
    Http,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic cohort as ndjson tables.
    Generate {
        /// Number of patients.
        #[arg(short = 'n', long = "patients", default_value_t = DEFAULT_PATIENTS, value_parser = positive)]
        patients: usize,
    },
    /// Serve the clinical tools over MCP.
    Serve {
        #[arg(long, value_enum, default_value_t = Transport::Stdio)]
        transport: Transport,
        /// Listen address for the http transport.
        #[arg(long, default_value = "127.0.0.1:8765")]
        bind: SocketAddr,
    },
    /// Run the task benchmark and write transcripts plus a report.
    Bench {
        /// oracle, fault:<tool_invocation|argument|interpretation|output_format>, or live.
        #[arg(long, default_value = "oracle")]
        policy: String,
        /// Provider config (JSON) for --policy live. The API key is read from
        /// the environment variable it names.
        #[arg(long)]
        provider: Option<PathBuf>,
        /// Restrict to these tasks (repeatable).
        #[arg(long = "task")]
        tasks: Vec<TaskId>,
    },
    /// Rebuild the report from stored transcripts.
    Report {
        /// Runs directory [default: --out].
        dir: Option<PathBuf>,
        /// Print JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
}

/// Bad invocation detected after argument parsing; exits like a clap error.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn init_logging(default: &str) {
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(io::stderr).init();
}

fn cohort(global: &Global) -> Result<Cohort> {
    match &global.warehouse {
        Some(dir) => load_cohort(dir).with_context(|| format!("loading warehouse from {}", dir.display())),
        None => Ok(generate_cohort(global.seed, DEFAULT_PATIENTS)?),
    }
}

fn server(cohort: &Cohort) -> McpServer {
    McpServer::new(ClinicalTools::new(Arc::new(cohort.warehouse.clone())))
}

fn generate(global: &Global, patients: usize) -> Result<ExitCode> {
    let out = global.out.clone().unwrap_or_else(|| PathBuf::from("warehouse"));
    let cohort = generate_cohort(global.seed, patients)?;
    write_cohort(&cohort, &out).with_context(|| format!("writing {}", out.display()))?;
    let t = cohort.warehouse.tables();
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "wrote {} patients (seed {}) to {}", cohort.cases.len(), global.seed, out.display())?;
    writeln!(
        stdout,
        "rows: somatometry {}, labs {}, cultures {}, antibiotics {}",
        t.somatometry.len(),
        t.labs.len(),
        t.cultures.len(),
        t.antibiotics.len()
    )?;
    for case in &cohort.cases {
        let p = cohort.warehouse.patient(&case.patient_id)?;
        writeln!(
            stdout,
            "  {}  intervention {}  age {}  sex {}{}",
            case.patient_id,
            case.intervention_date,
            p.age_on(case.intervention_date),
            p.sex.letter(),
            if p.on_dialysis { "  dialysis" } else { "" }
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(global: &Global, transport: Transport, bind: SocketAddr) -> Result<ExitCode> {
    let cohort = cohort(global)?;
    let server = server(&cohort);
    match transport {
        Transport::Stdio => {
            tracing::info!(patients = cohort.cases.len(), "serving on stdio");
            serve_stdio(&server, io::stdin().lock(), io::stdout().lock())?;
        }
        Transport::Http => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(bind).await.with_context(|| format!("binding {bind}"))?;
                tracing::info!(addr = %listener.local_addr()?, patients = cohort.cases.len(), "serving on http");
                serve_http(server, listener, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_policy(policy: &str, provider: Option<&Path>) -> Result<PolicySpec> {
    match (policy, provider) {
        ("oracle", None) => Ok(PolicySpec::Oracle),
        ("live", Some(path)) => Ok(PolicySpec::Live(ProviderConfig::load(path)?)),
        ("live", None) => Err(usage("--policy live requires --provider <config.json>")),
        (_, Some(_)) if policy != "live" => Err(usage("--provider only applies to --policy live")),
        _ => match policy.strip_prefix("fault:") {
            Some(cat) => Ok(PolicySpec::Fault(cat.parse().map_err(usage)?)),
            None => Err(usage(format!("unknown policy `{policy}` (expected oracle, fault:<category> or live)"))),
        },
    }
}

fn is_empty_dir(dir: &Path) -> io::Result<bool> {
    match fs::read_dir(dir) {
        Ok(mut entries) => Ok(entries.next().is_none()),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(true),
        Err(e) => Err(e),
    }
}

fn bench(global: &Global, policy: &str, provider: Option<&Path>, tasks: Vec<TaskId>) -> Result<ExitCode> {
    let spec = parse_policy(policy, provider)?;
    let out = global.out.clone().unwrap_or_else(|| PathBuf::from("runs"));
    if !is_empty_dir(&out)? {
        return Err(usage(format!("output directory {} is not empty", out.display())));
    }
    let mut config = BenchConfig {
        languages: global.lang.languages(),
        repetitions: global.reps,
        jobs: global.jobs,
        ..BenchConfig::default()
    };
    if !tasks.is_empty() {
        config.tasks = tasks;
    }
    if let PolicySpec::Live(cfg) = &spec {
        config.max_steps = cfg.max_steps;
    }
    let cohort = cohort(global)?;
    let outcome = run_benchmark(&server(&cohort), &cohort.cases, &spec, &config)?;
    write_runs(&out, &outcome.records, &outcome.excluded).with_context(|| format!("writing {}", out.display()))?;
    let text = outcome.report.to_text();
    fs::write(out.join(REPORT_JSON), format!("{}\n", serde_json::to_string_pretty(&outcome.report)?))?;
    fs::write(out.join(REPORT_TEXT), &text)?;
    print!("{text}");
    if outcome.report.run_errors > 0 {
        eprintln!(
            "{} run(s) ended without a final answer; see transcripts in {}",
            outcome.report.run_errors,
            out.display()
        );
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn report(global: &Global, dir: Option<PathBuf>, json: bool) -> Result<ExitCode> {
    let dir = dir
        .or_else(|| global.out.clone())
        .ok_or_else(|| usage("report needs a runs directory (positional or --out)"))?;
    if !dir.is_dir() {
        return Err(usage(format!("{} is not a directory", dir.display())));
    }
    let stored = load_runs(&dir).with_context(|| format!("reading runs from {}", dir.display()))?;
    if stored.records.is_empty() {
        return Err(usage(format!("no run transcripts under {}", dir.display())));
    }
    let report = build_report(&stored.records, &stored.excluded);
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.to_text());
    }
    Ok(if report.run_errors > 0 { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(if matches!(cli.command, Command::Serve { .. }) { "info" } else { "warn" });
    let g = &cli.global;
    let result = match cli.command {
        Command::Generate { patients } => generate(g, patients),
        Command::Serve { transport, bind } => serve(g, transport, bind),
        Command::Bench { policy, provider, tasks } => bench(g, &policy, provider.as_deref(), tasks),
        Command::Report { dir, json } => report(g, dir, json),
    };
    match result {
        Ok(code) => code,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

//! `twinqa`: simulate a bridge project, run an event log through the QA
//! twin, or serve the HTTP API.
//!
//! Exit codes: 0 success; 1 the run ended with an element on Hold or in
//! NonConformance; 2 bad flags, unreadable inputs, or a busy address.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use twinqa_core::engine::{
    parse_script, script_to_jsonl, EngineConfig, Project, QaState, ScriptOutcome, TwinState,
};
use twinqa_core::ingest::{ingest_stream, read_jsonl_file, IngestConfig, IngestReport};
use twinqa_core::rules::parse_ruleset;
use twinqa_core::simulator::{emit_event_stream, generate_project, responsive_script, Defect, SimConfig};
use twinqa_service::{AppState, ServiceConfig, Store, TokenTable};

#[derive(Parser)]
#[command(name = "twinqa", version, about = "Element-centric QA digital twin for bridge construction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic project, rule set and event stream.
    Simulate(SimulateArgs),
    /// Replay an event stream (plus scripted decisions) and report the final state.
    Run(RunArgs),
    /// Serve the HTTP API over a data directory.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    spans: u64,
    /// Defects to inject, as KIND:STAGE (e.g. WeakBatch:deck); comma separated.
    #[arg(long, value_delimiter = ',')]
    defects: Vec<Defect>,
    #[arg(long)]
    out: PathBuf,
    /// Also write decisions.jsonl: what a responsive engineer would decide.
    #[arg(long)]
    with_decisions: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    project: PathBuf,
    #[arg(long)]
    ruleset: PathBuf,
    #[arg(long)]
    events: PathBuf,
    /// JSON Lines decision script; each decision is anchored by `after_event_id`.
    #[arg(long)]
    decisions: Option<PathBuf>,
    /// Where to write the JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Listen address [env: TWINQA_ADDR, default 127.0.0.1:8787].
    #[arg(long)]
    addr: Option<std::net::SocketAddr>,
    /// Directory holding project.json, ruleset.json and the event log [env: TWINQA_DATA_DIR].
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Token file [env: TWINQA_TOKENS, default DATA_DIR/tokens.json].
    #[arg(long)]
    tokens: Option<PathBuf>,
}

/// Anything that ends the process with exit code 2.
struct Fatal(String);

impl<E: std::fmt::Display> From<E> for Fatal {
    fn from(e: E) -> Self {
        Fatal(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Fatal(msg)) => {
            eprintln!("twinqa: {msg}");
            ExitCode::from(2)
        }
    }
}

fn read(path: &Path) -> Result<String, Fatal> {
    std::fs::read_to_string(path).map_err(|e| Fatal(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<(), Fatal> {
    std::fs::write(path, contents).map_err(|e| Fatal(format!("{}: {e}", path.display())))
}

fn simulate(a: SimulateArgs) -> Result<u8, Fatal> {
    let cfg = SimConfig {
        seed: a.seed,
        n_spans: a.spans as usize,
        defects: a.defects,
        ..SimConfig::default()
    };
    cfg.validate().map_err(Fatal)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Fatal(format!("{}: {e}", a.out.display())))?;

    let sim = generate_project(&cfg);
    let raws = emit_event_stream(&sim, &cfg);
    write(&a.out.join("project.json"), &(serde_json::to_string_pretty(&sim.project)? + "\n"))?;
    write(
        &a.out.join("ruleset.json"),
        &(serde_json::to_string_pretty(&sim.ruleset.to_value())? + "\n"),
    )?;
    let stream: String = raws.iter().map(|r| format!("{}\n", r.body)).collect();
    write(&a.out.join("events.jsonl"), &stream)?;

    if a.with_decisions {
        let (events, _) = ingest_stream(&raws, &sim.project.graph, &BTreeSet::new(), &IngestConfig::default());
        let script = responsive_script(&sim, &events, EngineConfig::default())?;
        write(&a.out.join("decisions.jsonl"), &script_to_jsonl(&script))?;
    }
    println!(
        "wrote {} elements and {} events to {}",
        sim.project.graph.len(),
        raws.len(),
        a.out.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct RunReport<'a> {
    state_hash: String,
    events: usize,
    export: twinqa_core::engine::StateExport,
    warnings: Vec<twinqa_core::engine::Warning>,
    ingest: &'a IngestReport,
    decisions: &'a [ScriptOutcome],
    exit_code: u8,
}

fn run(a: RunArgs) -> Result<u8, Fatal> {
    let project: Project = serde_json::from_str(&read(&a.project)?)
        .map_err(|e| Fatal(format!("{}: {e}", a.project.display())))?;
    let ruleset = parse_ruleset(&read(&a.ruleset)?).map_err(|e| Fatal(format!("{}: {e}", a.ruleset.display())))?;
    let raws = read_jsonl_file(&a.events, chrono::Utc::now())
        .map_err(|e| Fatal(format!("{}: {e}", a.events.display())))?;
    let script = match &a.decisions {
        Some(p) => parse_script(&read(p)?).map_err(|e| Fatal(format!("{}: {e}", p.display())))?,
        None => Vec::new(),
    };

    let mut twin = TwinState::new(&project, ruleset, EngineConfig::default())?;
    let (events, ingest) = ingest_stream(&raws, twin.graph(), &BTreeSet::new(), &IngestConfig::default());
    let outcomes = twin.apply_with_script(&events, &script)?;

    let blocked = twin
        .graph()
        .ids()
        .any(|id| matches!(twin.state_of(id), Some(QaState::Hold | QaState::NonConformance)));
    let exit_code = u8::from(blocked);

    let mut out = std::io::stdout().lock();
    for id in twin.graph().topological_order() {
        writeln!(out, "{:<16} {}", id.as_str(), twin.state_of(id).expect("known"))?;
    }
    let warnings = twin.warnings();
    for w in &warnings {
        writeln!(out, "warning {:?} {}: {}", w.kind, w.element, w.detail)?;
    }
    let refused = outcomes.iter().filter(|o| o.result.is_err()).count();
    writeln!(
        out,
        "events {} accepted, {} duplicate, {} quarantined; decisions {} applied, {} refused",
        ingest.accepted,
        ingest.duplicates,
        ingest.quarantined.len(),
        outcomes.len() - refused,
        refused
    )?;
    writeln!(out, "state hash {}", twin.state_hash())?;

    if let Some(path) = &a.report {
        let report = RunReport {
            state_hash: twin.state_hash(),
            events: twin.log().count(),
            export: twin.export(),
            warnings,
            ingest: &ingest,
            decisions: &outcomes,
            exit_code,
        };
        write(path, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(exit_code)
}

fn serve(a: ServeArgs) -> Result<u8, Fatal> {
    let mut cfg = ServiceConfig::from_env().map_err(Fatal)?;
    if let Some(dir) = a.data_dir {
        if std::env::var_os("TWINQA_TOKENS").is_none() {
            cfg.tokens = dir.join("tokens.json");
        }
        cfg.data_dir = dir;
    }
    if let Some(addr) = a.addr {
        cfg.addr = addr;
    }
    if let Some(tokens) = a.tokens {
        cfg.tokens = tokens;
    }
    let tokens = TokenTable::load(&cfg.tokens)?;
    let store = Store::open(&cfg.data_dir, EngineConfig::default())?;
    let app = Arc::new(AppState::new(store, tokens));

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(cfg.addr)
            .await
            .map_err(|e| Fatal(format!("cannot listen on {}: {e}", cfg.addr)))?;
        let local = listener.local_addr()?;
        println!("listening on http://{local}");
        std::io::stdout().flush()?;
        twinqa_service::serve(listener, app, shutdown_signal()).await?;
        println!("{}", json!({"shutdown": "clean"}));
        Ok(0)
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

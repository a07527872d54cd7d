//! `payroute simulate | tune | serve | report`.
//!
//! Exit codes: 0 success, 1 user or config error, 2 internal error.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgAction, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;
use tracing_subscriber::EnvFilter;

use crate::bandit::{PolicyConfig, PolicyKind};
use crate::service::{self, Router, ServiceConfig};
use crate::sim::{
    emit_regret, load_regret_csv, load_trace, replay, Environment, GatewaySchedule,
    ProcessorLayout, SyntheticEnv, TraceEnv, TraceLayout, DEFAULT_HALF_WINDOW,
};
use crate::tuner::{emit_report, grid_search, Grid};
use crate::uplift;

#[derive(Debug, Parser)]
#[command(
    name = "payroute",
    version,
    about = "Non-stationary bandit routing for payment gateways"
)]
pub struct Cli {
    /// Repeat for more detail (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay policies on a trace or synthetic environment and write regret curves.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Grid-search hyperparameters and write the tuning report.
    Tune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replaces the grid's seeds with the same count starting here.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the HTTP decision service until SIGINT or SIGTERM.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        restore: Option<PathBuf>,
        #[arg(long)]
        port: Option<u16>,
    },
    /// Uplift table from outcome CSVs or metrics dumps, or a final-regret
    /// table from regret CSVs.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        baseline: Option<String>,
    },
}

#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::User(_) => 1,
            CliError::Internal(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::User(m) => write!(f, "error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

fn user(e: impl std::fmt::Display) -> CliError {
    CliError::User(e.to_string())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSpec {
    Synthetic {
        steps: usize,
        gateways: Vec<GatewaySchedule>,
        #[serde(default)]
        layout: ProcessorLayout,
    },
    Trace {
        path: PathBuf,
        #[serde(default = "default_half_window")]
        half_window: usize,
        #[serde(default)]
        layout: TraceLayout,
    },
}

fn default_half_window() -> usize {
    DEFAULT_HALF_WINDOW
}

impl EnvSpec {
    /// Builds the environment; trace paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Box<dyn Environment>, CliError> {
        match self {
            EnvSpec::Synthetic {
                steps,
                gateways,
                layout,
            } => {
                let env = SyntheticEnv::new(gateways.clone())
                    .build(*steps, layout)
                    .map_err(user)?;
                Ok(Box::new(env))
            }
            EnvSpec::Trace {
                path,
                half_window,
                layout,
            } => {
                let path = base_dir.join(path);
                let trace = load_trace(&path, layout)
                    .map_err(|e| user(format!("{}: {e}", path.display())))?;
                Ok(Box::new(TraceEnv::new(&trace, *half_window)))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub seed: u64,
    pub env: EnvSpec,
    pub policies: Vec<PolicyConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    pub env: EnvSpec,
    pub kinds: Vec<PolicyKind>,
    #[serde(default)]
    pub grid: Grid,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub parallelism: usize,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    let mut value: toml::Value =
        toml::from_str(&text).map_err(|e| user(format!("{}: {e}", path.display())))?;
    service::apply_env_overrides(&mut value, std::env::vars()).map_err(user)?;
    value
        .try_into()
        .map_err(|e| user(format!("{}: {e}", path.display())))
}

fn base_dir(config: &Path) -> &Path {
    config.parent().unwrap_or(Path::new("."))
}

pub fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let cfg: SimulateConfig = read_toml(config)?;
    if cfg.policies.is_empty() {
        return Err(user("config lists no policies"));
    }
    let env = cfg.env.build(base_dir(config))?;
    let seed = seed.unwrap_or(cfg.seed);
    let curves = cfg
        .policies
        .par_iter()
        .map(|p| replay(env.as_ref(), p, seed))
        .collect::<Result<Vec<_>, _>>()
        .map_err(user)?;
    let (csv, json) = emit_regret(&curves, out).map_err(user)?;
    for c in &curves {
        println!("{:<48} {:>12.3}", c.policy, c.final_regret());
    }
    tracing::info!(csv = %csv.display(), json = %json.display(), "wrote regret outputs");
    Ok(())
}

pub fn tune(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut cfg: TuneConfig = read_toml(config)?;
    if let Some(s) = seed {
        let n = cfg.grid.seeds.len() as u64;
        cfg.grid.seeds = (s..s + n).collect();
    }
    let env = cfg.env.build(base_dir(config))?;
    let threads = match cfg.parallelism {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    };
    let report = grid_search(env.as_ref(), &cfg.grid, &cfg.kinds, threads).map_err(user)?;
    emit_report(&report, out).map_err(user)?;
    for (kind, row) in report.best_per_kind() {
        match (row.mean_final_regret, row.stderr) {
            (Some(m), Some(se)) => {
                println!("{kind:<20} {:<28} {m:>12.3} ± {se:.3}", row.config.params())
            }
            _ => println!("{kind:<20} all cells failed"),
        }
    }
    Ok(())
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
        _ = ctrl_c => {}
        _ = term => {}
    }
    tracing::info!("shutting down");
}

pub fn serve(config: &Path, restore: Option<&Path>, port: Option<u16>) -> Result<(), CliError> {
    let mut cfg = ServiceConfig::load(config).map_err(user)?;
    if let Some(p) = port {
        cfg.server.port = p;
    }
    let router = Router::new(cfg.router.clone(), service::now_ms()).map_err(user)?;
    if let Some(path) = restore {
        let ts = router
            .restore_from(path)
            .map_err(|e| user(format!("{}: {e}", path.display())))?;
        tracing::info!(snapshot_ms = ts, "restored state");
    }
    let router = Arc::new(router);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    rt.block_on(async move {
        let addr = format!("{}:{}", cfg.server.host, cfg.server.port);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| user(format!("cannot bind {addr}: {e}")))?;
        let local: SocketAddr = listener
            .local_addr()
            .map_err(|e| CliError::Internal(e.to_string()))?;
        println!("listening on {local}");
        let snapshot = cfg
            .snapshot
            .path
            .clone()
            .map(|p| (p, cfg.snapshot.interval()));
        service::serve(router, listener, snapshot, shutdown_signal())
            .await
            .map_err(|e| CliError::Internal(e.to_string()))
    })
}

enum Inputs {
    Outcomes(Vec<uplift::Outcome>, Option<String>),
    Regret(std::collections::BTreeMap<String, Vec<f64>>),
}

fn is_regret_csv(path: &Path) -> Result<bool, CliError> {
    let mut rdr =
        csv::Reader::from_path(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| user(format!("{}: {e}", path.display())))?;
    Ok(headers.iter().any(|h| h == "cumulative_regret"))
}

fn load_inputs(paths: &[PathBuf]) -> Result<Inputs, CliError> {
    let mut outcomes = Vec::new();
    let mut baseline = None;
    let mut regret = std::collections::BTreeMap::new();
    for path in paths {
        let ctx = |e: &dyn std::fmt::Display| user(format!("{}: {e}", path.display()));
        if path.extension().is_some_and(|e| e == "json") {
            let m = uplift::load_metrics_json(path).map_err(|e| ctx(&e))?;
            let day = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("metrics");
            outcomes.extend(uplift::outcomes_from_metrics(&m, day));
            baseline = baseline.or(m.baseline_arm);
        } else if is_regret_csv(path)? {
            for (label, curve) in load_regret_csv(path).map_err(|e| ctx(&e))? {
                if regret.insert(label.clone(), curve).is_some() {
                    return Err(user(format!(
                        "policy {label} appears in more than one input"
                    )));
                }
            }
        } else {
            outcomes.extend(uplift::load_outcomes_csv(path).map_err(|e| ctx(&e))?);
        }
    }
    match (outcomes.is_empty(), regret.is_empty()) {
        (false, true) => Ok(Inputs::Outcomes(outcomes, baseline)),
        (true, false) => Ok(Inputs::Regret(regret)),
        (false, false) => Err(user("cannot mix regret curves with outcome inputs")),
        (true, true) => Err(user("inputs contain no rows")),
    }
}

pub fn report(inputs: &[PathBuf], out: &Path, baseline: Option<&str>) -> Result<(), CliError> {
    match load_inputs(inputs)? {
        Inputs::Outcomes(rows, from_metrics) => {
            let base = baseline
                .map(str::to_string)
                .or(from_metrics)
                .ok_or_else(|| user("--baseline is required for outcome CSVs"))?;
            let table = uplift::uplift_table(&rows, &base).map_err(user)?;
            fs::create_dir_all(out).map_err(user)?;
            uplift::write_uplift_csv(&table, &out.join(uplift::UPLIFT_CSV)).map_err(user)?;
            for r in table.rows.iter().filter(|r| r.day == uplift::CUMULATIVE) {
                let up = r
                    .uplift_pp
                    .map_or("-".to_string(), |u| format!("{u:+.3} pp"));
                println!("{:<20} {:>12} {:>10}", r.arm, r.attempts, up);
            }
        }
        Inputs::Regret(curves) => {
            let rows = uplift::regret_summary(&curves, baseline).map_err(user)?;
            fs::create_dir_all(out).map_err(user)?;
            uplift::write_regret_summary(&rows, &out.join(uplift::REGRET_SUMMARY_CSV))
                .map_err(user)?;
            for r in &rows {
                println!("{:<48} {:>12.3}", r.policy, r.final_regret);
            }
        }
    }
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    init_logging(cli.verbose);
    match cli.command {
        Command::Simulate { config, out, seed } => simulate(&config, &out, seed),
        Command::Tune { config, out, seed } => tune(&config, &out, seed),
        Command::Serve {
            config,
            restore,
            port,
        } => serve(&config, restore.as_deref(), port),
        Command::Report {
            inputs,
            out,
            baseline,
        } => report(&inputs, &out, baseline.as_deref()),
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("{e}");
            e.exit_code()
        }
        Err(_) => 2,
    }
}

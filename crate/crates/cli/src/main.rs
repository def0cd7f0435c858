//! `gasguard` — scripted leak scenarios against the detector stack, plus a
//! standalone telemetry gateway.
//!
//! Exit codes: 0 success, 2 load/validation error (bad usage, unreadable or
//! invalid scenario/config), 3 runtime error (gateway unreachable, modem
//! fault, storage failure).

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use gasguard_core::gateway::{GatewayServer, GatewayStore};
use gasguard_core::scenario::{
    load_scenario, report_render, run, run_remote, run_with_store, ReportFormat, RunError,
    RunOutcome, Scenario,
};

/// Environment override for the gateway's persistence log location.
const LOG_PATH_ENV: &str = "GASGW_LOG_PATH";

const DEFAULT_INGEST_ADDR: &str = "127.0.0.1:9000";
const DEFAULT_HTTP_ADDR: &str = "127.0.0.1:8080";

#[derive(Parser)]
#[command(
    name = "gasguard",
    version,
    about = "Desk-scale hazardous-gas detection stack: sensor model, alarm firmware, \
             GSM-style modem, and an IoT telemetry gateway, driven by scripted scenarios"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file end to end and print the run report.
    Run {
        /// Scenario file to execute.
        file: PathBuf,
        /// Send telemetry to a live gateway at HOST:PORT instead of the
        /// built-in in-process gateway.
        #[arg(long, value_name = "HOST:PORT", conflicts_with = "log_path")]
        remote: Option<String>,
        /// Persist the in-process gateway store to this append-only log.
        #[arg(long, value_name = "PATH")]
        log_path: Option<PathBuf>,
        /// Report style.
        #[arg(long, value_enum, default_value_t = ReportArg::Text)]
        report: ReportArg,
        /// Also print the full event log to stderr.
        #[arg(short, long)]
        verbose: bool,
    },
    /// Serve the telemetry gateway: line-oriented ingest plus HTTP queries.
    Gateway {
        /// Ingest socket address.
        #[arg(long, value_name = "ADDR")]
        listen_ingest: Option<String>,
        /// HTTP query address.
        #[arg(long, value_name = "ADDR")]
        listen_http: Option<String>,
        /// Persist accepted records to this append-only log.
        #[arg(long, value_name = "PATH")]
        log_path: Option<PathBuf>,
        /// key=value config file; keys: listen_ingest, listen_http, log_path.
        #[arg(long, value_name = "FILE")]
        config: Option<PathBuf>,
    },
    /// Check a scenario file and print a one-line summary.
    Validate {
        /// Scenario file to check.
        file: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportArg {
    Text,
    Machine,
}

impl From<ReportArg> for ReportFormat {
    fn from(arg: ReportArg) -> Self {
        match arg {
            ReportArg::Text => ReportFormat::Text,
            ReportArg::Machine => ReportFormat::Machine,
        }
    }
}

/// Failures split by exit code: `Load` exits 2, `Runtime` exits 3.
enum CliError {
    Load(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Load(msg) | CliError::Runtime(msg) => f.write_str(msg),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            file,
            remote,
            log_path,
            report,
            verbose,
        } => cmd_run(
            &file,
            remote.as_deref(),
            log_path.as_deref(),
            report,
            verbose,
        ),
        Command::Gateway {
            listen_ingest,
            listen_http,
            log_path,
            config,
        } => cmd_gateway(listen_ingest, listen_http, log_path, config.as_deref()),
        Command::Validate { file } => cmd_validate(&file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error}");
            match error {
                CliError::Load(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(3),
            }
        }
    }
}

fn load_scenario_file(path: &Path) -> Result<Scenario, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Load(format!("{}: {e}", path.display())))?;
    load_scenario(&text).map_err(|e| CliError::Load(format!("{}: {e}", path.display())))
}

fn cmd_run(
    file: &Path,
    remote: Option<&str>,
    log_path: Option<&Path>,
    report: ReportArg,
    verbose: bool,
) -> Result<(), CliError> {
    let scenario = load_scenario_file(file)?;

    let outcome: RunOutcome = match (remote, log_path) {
        (Some(addr), _) => run_remote(&scenario, addr),
        (None, Some(path)) => {
            let (store, recovery) = GatewayStore::recover(path)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            if recovery.recovered > 0 {
                eprintln!(
                    "recovered {} records from {}",
                    recovery.recovered,
                    path.display()
                );
            }
            run_with_store(&scenario, store)
        }
        (None, None) => run(&scenario),
    }
    .map_err(|e| match e {
        RunError::InvalidScenario(msg) => CliError::Load(msg),
        other => CliError::Runtime(other.to_string()),
    })?;

    if verbose {
        for line in &outcome.event_log {
            eprintln!("{line}");
        }
    }
    print!("{}", report_render(&outcome.report, report.into()));
    Ok(())
}

fn cmd_validate(file: &Path) -> Result<(), CliError> {
    let scenario = load_scenario_file(file)?;
    println!(
        "ok: device={} gas={} duration_ms={} ticks={} segments={}",
        scenario.device_id,
        scenario.active_gas,
        scenario.duration_ms,
        scenario.ticks(),
        scenario.segments.len(),
    );
    Ok(())
}

#[derive(Default)]
struct GatewayFileConfig {
    listen_ingest: Option<String>,
    listen_http: Option<String>,
    log_path: Option<PathBuf>,
}

fn parse_gateway_config(path: &Path) -> Result<GatewayFileConfig, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Load(format!("{}: {e}", path.display())))?;
    let mut config = GatewayFileConfig::default();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Load(format!(
                "{}: line {}: expected key=value, got {raw:?}",
                path.display(),
                index + 1
            )));
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "listen_ingest" => config.listen_ingest = Some(value.to_string()),
            "listen_http" => config.listen_http = Some(value.to_string()),
            "log_path" => config.log_path = Some(PathBuf::from(value)),
            other => {
                return Err(CliError::Load(format!(
                    "{}: line {}: unknown key {other:?}",
                    path.display(),
                    index + 1
                )));
            }
        }
    }
    Ok(config)
}

fn cmd_gateway(
    listen_ingest: Option<String>,
    listen_http: Option<String>,
    log_path: Option<PathBuf>,
    config: Option<&Path>,
) -> Result<(), CliError> {
    let file_config = match config {
        Some(path) => parse_gateway_config(path)?,
        None => GatewayFileConfig::default(),
    };

    // Precedence: command line, then environment, then config file, then
    // the built-in defaults.
    let ingest = listen_ingest
        .or(file_config.listen_ingest)
        .unwrap_or_else(|| DEFAULT_INGEST_ADDR.to_string());
    let http = listen_http
        .or(file_config.listen_http)
        .unwrap_or_else(|| DEFAULT_HTTP_ADDR.to_string());
    let log_path = log_path
        .or_else(|| std::env::var_os(LOG_PATH_ENV).map(PathBuf::from))
        .or(file_config.log_path);

    let store = match &log_path {
        Some(path) => {
            let (store, recovery) = GatewayStore::recover(path)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            eprintln!(
                "recovered {} records from {} ({} partial bytes dropped)",
                recovery.recovered,
                path.display(),
                recovery.truncated_bytes
            );
            store
        }
        None => GatewayStore::new(),
    };

    let server = GatewayServer::start(store, &ingest, &http)
        .map_err(|e| CliError::Runtime(format!("bind failed: {e}")))?;
    println!("ingest: {}", server.ingest_addr());
    println!("http: {}", server.http_addr());
    std::io::stdout()
        .flush()
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    // Serve until the process is killed.
    loop {
        thread::sleep(Duration::from_secs(3600));
    }
}

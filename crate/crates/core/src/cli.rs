//! Command-line front end: `run`, `compare`, `serve` and `client`.
//!
//! Exit codes: 0 on success, 1 on a runtime failure (including any
//! strategy run that aborted), 2 on a configuration error.

use std::ffi::OsString;
use std::net::{TcpListener, ToSocketAddrs};
use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info, warn};

use crate::config::ConfigMap;
use crate::error::{Error, Result};
use crate::federation::{
    self, accept_clients, Coordinator, ExperimentConfig, ExperimentReport, LocalClient,
};
use crate::metrics;
use crate::transport::TcpSession;

pub const OUT_DIR_ENV: &str = "FEDCOST_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Parser)]
#[command(name = "fedcost", version, about = "Federated averaging experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one strategy.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Run several strategies on identical data, initialisation and seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated strategy names.
        #[arg(long)]
        strategies: Option<String>,
    },
    /// Coordinate remote clients over TCP.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategies: Option<String>,
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        /// Number of clients to wait for; sets `n_centers`.
        #[arg(long)]
        expected_clients: Option<usize>,
        /// Seconds to wait for all clients to join.
        #[arg(long, default_value_t = 60)]
        join_timeout: u64,
    },
    /// Join a coordinator as one center.
    Client {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:7878")]
        connect: String,
        #[arg(long)]
        client_id: u64,
        /// Number of centers in the experiment; must match the server.
        #[arg(long)]
        expected_clients: Option<usize>,
        /// Seconds to keep retrying the initial connection.
        #[arg(long, default_value_t = 30)]
        connect_timeout: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransportKind {
    Inproc,
    Tcp,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Key-value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: $FEDCOST_OUT_DIR or ./out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TransportKind::Inproc)]
    pub transport: TransportKind,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl Common {
    fn config_map(&self) -> Result<ConfigMap> {
        let mut map = match &self.config {
            Some(path) => ConfigMap::load(path)?,
            None => ConfigMap::new(),
        };
        for pair in &self.overrides {
            map.set_pair(pair)?;
        }
        let flags = [
            ("alpha", self.alpha.map(|v| v.to_string())),
            ("window", self.window.map(|v| v.to_string())),
            ("rounds", self.rounds.map(|v| v.to_string())),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                map.set(key, &v)?;
            }
        }
        Ok(map)
    }

    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

fn experiment(
    common: &Common,
    strategies: Option<&str>,
    n_centers: Option<usize>,
) -> Result<ExperimentConfig> {
    let mut map = common.config_map()?;
    if let Some(s) = strategies {
        map.set("strategies", s)?;
    }
    if let Some(n) = n_centers {
        if n == 0 {
            return Err(Error::Config(
                "expected client count must be at least 1".into(),
            ));
        }
        map.set("n_centers", &n.to_string())?;
    }
    map.to_experiment()
}

fn finish(report: &ExperimentReport, common: &Common) -> Result<bool> {
    let out = common.out_dir();
    metrics::write_outputs(report, &out)?;
    for run in &report.runs {
        match &run.error {
            None => info!(
                "{} (alpha {}): val_loss {:.6} -> {:.6}",
                run.strategy.kind,
                run.strategy.alpha,
                run.initial_val_loss,
                run.final_val_loss()
            ),
            Some(e) => error!("{} failed: {e}", run.strategy.kind),
        }
    }
    info!("wrote {}", out.display());
    Ok(report.all_succeeded())
}

fn run_local(common: &Common, config: &ExperimentConfig) -> Result<bool> {
    let report = match common.transport {
        TransportKind::Inproc => federation::run_experiment(config)?,
        TransportKind::Tcp => federation::run_experiment_tcp(config)?,
    };
    finish(&report, common)
}

fn connect_with_retry(addr: &str, timeout: Duration) -> Result<TcpSession> {
    let deadline = Instant::now() + timeout;
    loop {
        let resolved: Vec<_> = addr
            .to_socket_addrs()
            .map_err(|e| Error::Config(format!("bad address `{addr}`: {e}")))?
            .collect();
        match TcpSession::connect(&resolved[..]) {
            Ok(s) => return Ok(s),
            Err(e) if Instant::now() < deadline => {
                warn!("connect to {addr} failed ({e}); retrying");
                thread::sleep(Duration::from_millis(100));
            }
            Err(e) => return Err(e),
        }
    }
}

/// Executes a parsed command. `Ok(false)` means the command ran but at
/// least one strategy run aborted.
pub fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { common, strategy } => {
            let config = experiment(&common, strategy.as_deref(), None)?;
            if config.strategies.len() != 1 {
                return Err(Error::Config(
                    "run takes exactly one strategy; use compare".into(),
                ));
            }
            run_local(&common, &config)
        }
        Command::Compare { common, strategies } => {
            let config = experiment(&common, strategies.as_deref(), None)?;
            run_local(&common, &config)
        }
        Command::Serve {
            common,
            strategies,
            listen,
            expected_clients,
            join_timeout,
        } => {
            let config = experiment(&common, strategies.as_deref(), expected_clients)?;
            let prepared = federation::prepare(&config)?;
            let listener = TcpListener::bind(&listen)?;
            info!(
                "listening on {}; waiting for {} clients",
                listener.local_addr()?,
                config.n_centers
            );
            let mut clients = accept_clients(
                &listener,
                config.n_centers,
                Duration::from_secs(join_timeout),
            )?;
            let report = Coordinator::new(&config, &prepared).run(&mut clients)?;
            finish(&report, &common)
        }
        Command::Client {
            common,
            connect,
            client_id,
            expected_clients,
            connect_timeout,
        } => {
            let config = experiment(&common, None, expected_clients)?;
            if client_id >= config.n_centers as u64 {
                return Err(Error::Config(format!(
                    "client id {client_id} out of range for {} centers",
                    config.n_centers
                )));
            }
            let prepared = federation::prepare(&config)?;
            let client = LocalClient::new(&config, &prepared, client_id)?;
            let mut session = connect_with_retry(&connect, Duration::from_secs(connect_timeout))?;
            client.serve(&mut session)?;
            info!("client {client_id} done");
            Ok(true)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if e.is_config() => {
            eprintln!("fedcost: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("fedcost: {e}");
            ExitCode::from(1)
        }
    }
}

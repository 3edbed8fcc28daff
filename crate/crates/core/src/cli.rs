//! Command-line entry point.
//!
//! Exit codes: 0 ok, 1 runtime error, 2 usage or bind error, 3 fault or
//! deadline exceeded in `run`, 4 invariant violation in `run`.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use crate::client::HttpClient;
use crate::gate::process_stream;
use crate::server::{ServeError, Server, ServerConfig, DEFAULT_PORT};
use crate::sim::{self, load_scenario, scenario::load_seed_file};
use crate::store::{Store, TagSeed, UserSeed};

pub const EXIT_ERROR: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "smartcart", version, about = "RFID smart-cart checkout tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the document store over HTTP.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        /// Also serve cart-control endpoints for the browser panel.
        #[arg(long)]
        panel: bool,
        /// Directory with the panel's static files.
        #[arg(long, requires = "panel")]
        panel_dir: Option<PathBuf>,
    },
    /// Bulk-load users and tags, either into a running server (--addr) or
    /// straight into a data directory.
    Seed {
        #[arg(long)]
        tags: Option<PathBuf>,
        #[arg(long)]
        users: Option<PathBuf>,
        /// Wipe both databases first.
        #[arg(long)]
        reset: bool,
        #[arg(long, conflicts_with = "data_dir")]
        addr: Option<String>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Run a scenario in the simulator.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Where to write the JSON report; stdout when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check a stream of gate events (JSON lines) against a served store.
    Gate {
        /// File of events, or `-` for stdin.
        #[arg(long, default_value = "-")]
        stream: String,
        #[arg(long, default_value_t = format!("127.0.0.1:{DEFAULT_PORT}"))]
        addr: String,
    },
}

/// Parses `std::env::args` and runs the command.
pub fn main() -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .try_init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    ExitCode::from(run(cli.command))
}

pub fn run(command: Command) -> u8 {
    match command {
        Command::Serve {
            port,
            data_dir,
            panel,
            panel_dir,
        } => serve(ServerConfig {
            port,
            data_dir,
            panel,
            panel_dir,
        }),
        Command::Seed {
            tags,
            users,
            reset,
            addr,
            data_dir,
        } => seed(tags.as_deref(), users.as_deref(), reset, addr, data_dir),
        Command::Run {
            scenario,
            seed,
            report,
        } => run_scenario(&scenario, seed, report.as_deref()),
        Command::Gate { stream, addr } => gate(&stream, addr),
    }
}

fn serve(config: ServerConfig) -> u8 {
    let server = match Server::bind(&config) {
        Ok(s) => s,
        Err(e @ ServeError::Bind { .. }) => {
            error!("{e}");
            return EXIT_USAGE;
        }
        Err(e) => {
            error!("{e}");
            return EXIT_ERROR;
        }
    };
    match server.serve() {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            EXIT_ERROR
        }
    }
}

fn seed(
    tags: Option<&Path>,
    users: Option<&Path>,
    reset: bool,
    addr: Option<String>,
    data_dir: Option<PathBuf>,
) -> u8 {
    let loaded = (|| -> Result<(Vec<UserSeed>, Vec<TagSeed>), String> {
        let users = match users {
            Some(p) => load_seed_file(p).map_err(|e| e.to_string())?,
            None => Vec::new(),
        };
        let tags = match tags {
            Some(p) => load_seed_file(p).map_err(|e| e.to_string())?,
            None => Vec::new(),
        };
        Ok((users, tags))
    })();
    let (users, tags) = match loaded {
        Ok(v) => v,
        Err(e) => {
            error!("{e}");
            return EXIT_ERROR;
        }
    };

    let result = match addr {
        Some(addr) => HttpClient::new(addr)
            .seed(&users, &tags, reset)
            .map_err(|e| e.to_string()),
        None => {
            let dir = data_dir.unwrap_or_else(|| PathBuf::from("data"));
            seed_dir(&dir, &users, &tags, reset)
        }
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            error!("seed rejected: {e}");
            EXIT_ERROR
        }
    }
}

fn seed_dir(
    dir: &Path,
    users: &[UserSeed],
    tags: &[TagSeed],
    reset: bool,
) -> Result<crate::store::SeedSummary, String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let store = Store::restore(dir).map_err(|e| e.to_string())?;
    let summary = store.seed(users, tags, reset).map_err(|e| e.to_string())?;
    store.persist(dir).map_err(|e| e.to_string())?;
    Ok(summary)
}

fn run_scenario(path: &Path, seed: u64, report_path: Option<&Path>) -> u8 {
    let scenario = match load_scenario(path) {
        Ok(s) => s,
        Err(e) => {
            error!("{e}");
            return EXIT_ERROR;
        }
    };
    let report = sim::run(&scenario, seed);
    let json = report.to_json();
    let written = match report_path {
        Some(p) => std::fs::write(p, &json).map_err(|e| format!("{}: {e}", p.display())),
        None => io::stdout()
            .lock()
            .write_all(json.as_bytes())
            .map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        error!("{e}");
        return EXIT_ERROR;
    }
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    for s in &report.stuck {
        eprintln!("stuck: {s}");
    }
    eprintln!(
        "outcome {:?} at {} ms, {} session(s)",
        report.outcome,
        report.end_ms,
        report.sessions.len()
    );
    report.outcome.exit_code() as u8
}

fn gate(stream: &str, addr: String) -> u8 {
    let mut client = HttpClient::new(addr);
    let stdout = io::stdout();
    let result = if stream == "-" {
        process_stream(io::stdin().lock(), &mut client, stdout.lock())
    } else {
        match File::open(stream) {
            Ok(f) => process_stream(BufReader::new(f), &mut client, stdout.lock()),
            Err(e) => {
                error!("{stream}: {e}");
                return EXIT_ERROR;
            }
        }
    };
    match result {
        Ok(summary) => {
            log::info!("{} pass, {} alarm", summary.passes, summary.alarms);
            0
        }
        Err(e) => {
            error!("{e}");
            EXIT_ERROR
        }
    }
}

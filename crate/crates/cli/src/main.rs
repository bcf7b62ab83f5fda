//! `starvol`: volumes, dual mixed volumes, Legendre duality, Reeb flows, systoles
//! and normal forms from a JSON run configuration, plus the acceptance report.

mod commands;
mod config;

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use starvol::suite::SuiteOptions;

use crate::config::{parse_config, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at {}: {message}", display_pointer(pointer))]
    Config { pointer: String, message: String },

    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },

    #[error(transparent)]
    Core(#[from] starvol::Error),

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("thread pool: {0}")]
    Threads(String),
}

fn display_pointer(p: &str) -> &str {
    if p.is_empty() {
        "the document root"
    } else {
        p
    }
}

impl CliError {
    /// 2 for configuration and input errors, 3 for numerical failures.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Notion {
    /// Holmes–Thompson
    Ht,
    Busemann,
}

#[derive(Debug, Clone, Default)]
pub struct SystoleFlags {
    pub class: Option<Vec<i64>>,
    pub m: Option<usize>,
    pub restarts: Option<usize>,
}

#[derive(Parser)]
#[command(name = "starvol", version, about = "Dual mixed volumes, Finsler volumes, Reeb flows and systoles")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration (optional for `report`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Size of the worker pool.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Multiplier on estimated quadrature errors used as tolerances.
    #[arg(long, global = true)]
    tolerance_scale: Option<f64>,

    /// Include wall-clock timings (makes reports run-dependent).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Volumes of configured bodies, or the Finsler volume of the metric.
    Volume {
        #[arg(long, value_enum)]
        notion: Option<Notion>,
    },
    /// Dual mixed volume of the bodies listed under `dmv.bodies`.
    Dmv,
    /// Numerical Legendre dual of the metric at sample points, with convexity certificates.
    Legendre,
    /// Reeb flow samples as CSV.
    Flow,
    /// Shortest non-contractible loop of the metric.
    Systole {
        /// Torus homology class, e.g. "1,0".
        #[arg(long, allow_hyphen_values = true)]
        class: Option<String>,
        /// Polygon vertices.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Orbit-average decomposition of a perturbation of the round flow.
    Normalform,
    /// Dual mixed volume inequalities for two bodies (random ones if none are configured).
    Check,
    /// The full acceptance suite.
    Report,
}

fn parse_class(text: &str) -> Result<Vec<i64>, CliError> {
    text.split(',')
        .map(|c| c.trim().parse::<i64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config {
            pointer: "/systole/class".into(),
            message: format!("bad --class `{text}`: {e}"),
        })
}

fn read_config(path: &PathBuf) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

fn emit(out: Option<&PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: out.map_or("stdout".into(), |p| p.display().to_string()),
        source,
    };
    match out {
        Some(p) => fs::write(p, bytes).map_err(io_err),
        None => io::stdout().write_all(bytes).map_err(io_err),
    }
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Threads(e.to_string()))?;
    }
    let started = Instant::now();
    let config = match (&cli.command, &cli.config) {
        (_, Some(path)) => Some(read_config(path)?),
        (Command::Report, None) => None,
        (_, None) => {
            return Err(CliError::Config {
                pointer: String::new(),
                message: "this command needs --config".into(),
            })
        }
    };
    let seed = cli
        .seed
        .or(config.as_ref().and_then(|c| c.seed))
        .unwrap_or(SuiteOptions::default().seed);
    let scale = cli
        .tolerance_scale
        .or(config.as_ref().map(|c| c.tolerances.scale))
        .unwrap_or(SuiteOptions::default().tolerance_scale);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(CliError::Config {
            pointer: "/tolerances/scale".into(),
            message: "--tolerance-scale must be positive".into(),
        });
    }

    let (name, output) = match &cli.command {
        Command::Flow => {
            let mut buf = Vec::new();
            commands::flow_cmd(config.as_ref().expect("config is loaded"), &mut buf)?;
            emit(cli.out.as_ref(), &buf)?;
            return Ok(ExitCode::SUCCESS);
        }
        Command::Report => ("report", commands::report_cmd(seed, scale, cli.timing)?),
        command => {
            let config = config.as_ref().expect("config is loaded");
            match command {
                Command::Volume { notion } => ("volume", commands::volume_cmd(config, *notion)?),
                Command::Dmv => ("dmv", commands::dmv_cmd(config)?),
                Command::Legendre => ("legendre", commands::legendre_cmd(config, seed)?),
                Command::Systole { class, m, restarts } => {
                    let flags = SystoleFlags {
                        class: class.as_deref().map(parse_class).transpose()?,
                        m: *m,
                        restarts: *restarts,
                    };
                    ("systole", commands::systole_cmd(config, &flags, seed)?)
                }
                Command::Normalform => ("normalform", commands::normalform_cmd(config, seed)?),
                Command::Check => ("check", commands::check_cmd(config, seed, scale)?),
                Command::Flow | Command::Report => unreachable!("handled above"),
            }
        }
    };

    let mut report = json!({
        "command": name,
        "config": config.as_ref().map(serde_json::to_value).transpose()?,
        "seed": seed,
        "tolerance_scale": scale,
        "results": output.results,
        "all_hold": output.all_hold,
        "versions": { "starvol": env!("CARGO_PKG_VERSION") },
    });
    if cli.timing {
        report["timing"] = json!({ "seconds": started.elapsed().as_secs_f64() });
    }
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    emit(cli.out.as_ref(), &bytes)?;
    Ok(if output.all_hold {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

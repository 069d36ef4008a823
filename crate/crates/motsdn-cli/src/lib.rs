//! Command line driver: configuration, subcommands, run manifests and
//! table output for the experiments of the `motsdn` library.
//!
//! Exit status: `0` on success, `2` for configuration errors, `3` for
//! numerical failures (with `diagnostic.json` in the output directory) and
//! `1` for I/O errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod commands;
pub mod config;
pub mod field;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{ConfigError, InputRecord, RunConfig};
use crate::output::{write_manifest, OutputDir};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// A run that completed but did not meet its success criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

#[derive(Debug, Parser)]
#[command(name = "motsdn", version, about = "Marginally outer trapped surfaces near the Schwarzschild horizon in double null gauge")]
pub struct Cli {
    /// TOML configuration, or a manifest.json of an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: motsdn-out/<command>].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed of every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true, env = "MOTSDN_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

/// Provider selection shared by the subcommands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ProviderArgs {
    /// Recipe file (TOML), `default` for the built-in recipe or `schwarzschild`.
    #[arg(long)]
    pub recipe: Option<String>,
    /// Perturbation size; implies the default recipe when none is given.
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Tabulates the Schwarzschild double null gauge.
    Background {
        /// Mass `m`; `r₀ = 2m`.
        #[arg(long)]
        m: Option<f64>,
        /// `s` values as `a:b:n` in units of `r₀`.
        #[arg(long, allow_hyphen_values = true)]
        s_grid: Option<String>,
        /// `ū` values as `a:b:n` in units of `r₀`.
        #[arg(long, allow_hyphen_values = true)]
        us_grid: Option<String>,
    },
    /// Checks a recipe against its envelopes and prints the report as CSV.
    Validate {
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Transports an incoming null hypersurface along the foliation.
    Transport {
        #[command(flatten)]
        provider: ProviderArgs,
        /// `f̄₀`: expression in units of `r₀` or snapshot file.
        #[arg(long, allow_hyphen_values = true)]
        f0: Option<String>,
        /// Target `s` in units of `r₀`.
        #[arg(long, allow_hyphen_values = true)]
        s: Option<f64>,
    },
    /// Evaluates `tr χ̃̃′` of a surface and its low/high degree split.
    Expansion {
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long, allow_hyphen_values = true)]
        f0: Option<String>,
        /// `f̃̃`: expression in units of `r₀` or snapshot file.
        #[arg(long, allow_hyphen_values = true)]
        ftt: Option<String>,
    },
    /// Convergence checks of the linearisations and the eigencheck.
    Gradcheck {
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Solves for the MOTS in an incoming null hypersurface.
    FindMots {
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long, allow_hyphen_values = true)]
        f0: Option<String>,
        /// Initial iterate.
        #[arg(long, allow_hyphen_values = true)]
        seed_field: Option<String>,
        /// Residual tolerance in units of `1/r₀`.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Solves from several seeds and compares the limits.
    Uniqueness {
        #[command(flatten)]
        provider: ProviderArgs,
        #[arg(long, allow_hyphen_values = true)]
        f0: Option<String>,
        /// Seeds (repeatable); replaces the configured list.
        #[arg(long = "seed-field", allow_hyphen_values = true)]
        seeds: Vec<String>,
    },
    /// Solution map over several values of `ε` with a log–log fit.
    SweepEps {
        /// Recipe whose `epsilon` is replaced by each sweep value.
        #[arg(long)]
        recipe_template: Option<String>,
        /// Comma separated list, e.g. `1e-2,1e-3,1e-4`.
        #[arg(long, allow_hyphen_values = true)]
        eps: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        f0: Option<String>,
    },
    /// Runs the full verification suite.
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Background { .. } => "background",
            Command::Validate { .. } => "validate",
            Command::Transport { .. } => "transport",
            Command::Expansion { .. } => "expansion",
            Command::Gradcheck { .. } => "gradcheck",
            Command::FindMots { .. } => "find-mots",
            Command::Uniqueness { .. } => "uniqueness",
            Command::SweepEps { .. } => "sweep-eps",
            Command::Verify => "verify",
        }
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<ConfigError>().is_some() {
        EXIT_CONFIG
    } else if err.downcast_ref::<motsdn::Error>().is_some() || err.downcast_ref::<NumericalFailure>().is_some() {
        EXIT_NUMERICAL
    } else {
        EXIT_IO
    }
}

#[derive(Serialize)]
struct Diagnostic<'a> {
    command: &'a str,
    error: String,
}

/// Runs a parsed command line and returns the exit status.
pub fn run(cli: Cli) -> i32 {
    let mut inputs: Vec<InputRecord> = Vec::new();
    let name = cli.command.name();
    let cfg = match prepare(&cli, &mut inputs) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("motsdn {name}: {e:#}");
            return exit_code(&e);
        }
    };
    let root = cli.out.clone().unwrap_or_else(|| PathBuf::from("motsdn-out").join(name));
    let mut out = match OutputDir::create(&root) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("motsdn {name}: {e:#}");
            return EXIT_IO;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("motsdn {name}: cannot start worker threads: {e}");
            return EXIT_IO;
        }
    };
    let result = pool.install(|| commands::execute(&cli.command, &cfg, &mut out));
    let code = match &result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("motsdn {name}: {e:#}");
            let code = exit_code(e);
            if code == EXIT_NUMERICAL {
                if let Err(w) = out.write_json("diagnostic.json", &Diagnostic { command: name, error: format!("{e:#}") }) {
                    eprintln!("motsdn {name}: {w:#}");
                }
            }
            code
        }
    };
    let arguments = arguments(&cli);
    if let Err(e) = write_manifest(&mut out, name, &arguments, &cfg, &inputs) {
        eprintln!("motsdn {name}: {e:#}");
        return EXIT_IO;
    }
    code
}

/// The command line as recorded in manifests; output location and thread
/// count do not affect results and are left out.
fn arguments(cli: &Cli) -> serde_json::Value {
    serde_json::json!({
        "config": cli.config.as_ref().map(|p| p.display().to_string()),
        "seed": cli.seed,
        "command": cli.command,
    })
}

/// Loads the configuration, applies command line overrides and resolves it.
pub fn prepare(cli: &Cli, inputs: &mut Vec<InputRecord>) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path, inputs)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    commands::apply_overrides(&cli.command, &mut cfg)?;
    Ok(cfg.resolve(inputs)?)
}

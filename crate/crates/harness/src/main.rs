use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use finrep::config::ConfigError;
use finrep::tables::{TableError, FINITE_REPLICATIONS};
use finrep::{
    compare_theory_mc, load_config, reproduce_table, run_experiment, write_outputs, ExperimentConfig, TableOptions,
    OUTPUT_DIR_ENV,
};
use finrep_core::analysis::write_equilibrium_csv;
use finrep_core::{find_equilibria, predict_limit, AnalysisError};

const DEFAULT_OUT: &str = "finrep-out";

#[derive(Debug, Parser)]
#[command(name = "finrep", version, about = "Clearing, replicator dynamics and equilibrium analysis of a growing financial network")]
struct Cli {
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides FINREP_OUTPUT_DIR and the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Number of replications.
    #[arg(long, global = true)]
    replications: Option<usize>,
    /// Clear a sampled finite network every round.
    #[arg(long, global = true)]
    finite: bool,
    /// Worker threads for replications.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run replicated trajectories and write them with a summary.
    Simulate { config: PathBuf },
    /// List the equilibria of the mean ODE.
    Equilibria { config: PathBuf },
    /// Report the limit implied by the limit rules.
    Predict { config: PathBuf },
    /// Reproduce reference table 1, 2, 3 or 4.
    Table { k: u32 },
    /// Compare the predicted limit with Monte Carlo.
    Compare { config: PathBuf },
}

enum Failure {
    /// Bad input: malformed flags, config or parameters.
    Config(String),
    /// A reproduction or comparison did not meet its tolerances.
    Mismatch(String),
}

impl Failure {
    fn other(e: impl std::fmt::Display) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn out_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| cfg.and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig, Failure> {
    let mut cfg = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(r) = cli.replications {
        cfg.replications = r;
    }
    if cli.finite {
        cfg.finite = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(Failure::other)?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(Failure::other)?;
    Ok(path)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut stdout = io::stdout().lock();
    match &cli.command {
        Command::Simulate { config } => {
            let cfg = load(cli, config)?;
            let result = run_experiment(&cfg, cli.jobs).map_err(Failure::other)?;
            let dir = out_dir(cli, Some(&cfg));
            let summary = write_outputs(&result, &dir).map_err(Failure::other)?;
            let text = fs::read_to_string(&summary).map_err(Failure::other)?;
            write!(stdout, "{text}").map_err(Failure::other)?;
        }
        Command::Equilibria { config } => {
            let cfg = load(cli, config)?;
            let set = find_equilibria(&cfg.params, cfg.kind).map_err(Failure::other)?;
            let pred = predict_limit(&cfg.params, cfg.kind).ok();
            let mut buf = Vec::new();
            write_equilibrium_csv(&set, pred.as_ref(), &mut buf).map_err(Failure::other)?;
            write_file(&out_dir(cli, Some(&cfg)), "equilibria.csv", &buf)?;
            stdout.write_all(&buf).map_err(Failure::other)?;
        }
        Command::Predict { config } => {
            let cfg = load(cli, config)?;
            match predict_limit(&cfg.params, cfg.kind) {
                Ok(p) => {
                    write!(
                        stdout,
                        "kind={} clause={} eps_star={} limit={}",
                        cfg.kind.label(),
                        p.rule_fired,
                        p.predicted.eps_star,
                        p.predicted.kind.label()
                    )
                    .map_err(Failure::other)?;
                    if let Some(a) = p.approx_eps_star {
                        write!(stdout, " approx_eps_star={a}").map_err(Failure::other)?;
                    }
                    writeln!(stdout).map_err(Failure::other)?;
                }
                Err(AnalysisError::NoClauseApplies(reason)) => {
                    writeln!(stdout, "kind={} clause=none ({reason})", cfg.kind.label()).map_err(Failure::other)?;
                }
                Err(e) => return Err(Failure::other(e)),
            }
        }
        Command::Table { k } => {
            let opts = TableOptions {
                replications: cli.replications.unwrap_or(finrep::config::DEFAULT_REPLICATIONS),
                jobs: cli.jobs,
                master_seed: cli.seed.unwrap_or(finrep::config::DEFAULT_SEED),
                finite: cli.finite,
                finite_replications: FINITE_REPLICATIONS,
            };
            if opts.replications == 0 {
                return Err(Failure::Config("invalid `replications`: must be at least 1".into()));
            }
            let report = reproduce_table(*k, &opts).map_err(|e| match e {
                TableError::UnknownTable(_) => Failure::Config(e.to_string()),
                other => Failure::other(other),
            })?;
            let mut buf = Vec::new();
            report.write_csv(&mut buf).map_err(Failure::other)?;
            write_file(&out_dir(cli, None), &format!("table{k}.csv"), &buf)?;
            stdout.write_all(&buf).map_err(Failure::other)?;
            if !report.pass() {
                let n = report.failures().count();
                return Err(Failure::Mismatch(format!("table {k}: {n} value(s) outside tolerance")));
            }
        }
        Command::Compare { config } => {
            let cfg = load(cli, config)?;
            let report = compare_theory_mc(&cfg, cli.jobs).map_err(Failure::other)?;
            let mut buf = Vec::new();
            report.write_csv(&mut buf).map_err(Failure::other)?;
            write_file(&out_dir(cli, Some(&cfg)), "comparison.csv", &buf)?;
            stdout.write_all(&buf).map_err(Failure::other)?;
            if !report.all_agree() {
                return Err(Failure::Mismatch("Monte Carlo attractor differs from the predicted limit".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Mismatch(msg)) => {
            eprintln!("mismatch: {msg}");
            ExitCode::from(2)
        }
    }
}

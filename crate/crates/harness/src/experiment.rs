//! Replicated simulation runs and their summaries.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use finrep_core::analysis::{integrate_ode, Equilibrium};
use finrep_core::dynamics::write_trajectory_csv;
use finrep_core::rng::replication_seed;
use finrep_core::scalar::format_sig;
use finrep_core::{
    find_equilibria, predict_limit, simulate, simulate_finite, AnalysisError, Clause, DynamicsError, DynamicsKind,
    FiniteOptions, SimulationSpec64, Trajectory64,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

/// Limit the theory predicts for a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theory {
    pub eps_star: f64,
    /// `None` when no limit rule applies and the limit comes from
    /// integrating the mean ODE from `eps0` instead.
    pub clause: Option<Clause>,
    pub equilibrium: Equilibrium<f64>,
}

/// Horizon of the fallback ODE integration.
const ODE_HORIZON: f64 = 1000.0;

/// Limit-rule prediction, or the stable equilibrium the mean ODE reaches
/// from `eps0` when no clause applies.
pub fn theory_limit(cfg: &ExperimentConfig, kind: DynamicsKind) -> Result<Theory, AnalysisError> {
    match predict_limit(&cfg.params, kind) {
        Ok(pred) => Ok(Theory {
            eps_star: pred.predicted.eps_star,
            clause: Some(pred.rule_fired),
            equilibrium: pred.predicted,
        }),
        Err(AnalysisError::NoClauseApplies(_)) => {
            let end = integrate_ode(&cfg.params, kind, cfg.eps0, ODE_HORIZON, 0.1)?.final_eps();
            let set = find_equilibria(&cfg.params, kind)?;
            let eq = *set.nearest_stable(end);
            Ok(Theory {
                eps_star: eq.eps_star,
                clause: None,
                equilibrium: eq,
            })
        }
        Err(e) => Err(e),
    }
}

/// Mean and standard deviation of final `ε` across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub config_hash: String,
    pub kind: String,
    pub eps_star_theory: f64,
    pub clause: Option<Clause>,
    pub eps_final_mean: f64,
    pub eps_final_std: f64,
    pub replications: usize,
    pub truncated: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// In replication-index order.
    pub trajectories: Vec<Trajectory64>,
    pub summary: SummaryRow,
}

impl ExperimentResult {
    pub fn final_eps(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.final_eps()).collect()
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn run_one(cfg: &ExperimentConfig, index: usize) -> Result<Trajectory64, DynamicsError> {
    let spec = SimulationSpec64 {
        kind: cfg.kind,
        eps0: cfg.eps0,
        n0: cfg.n0,
        rounds: cfg.rounds,
        seed: replication_seed(cfg.master_seed, index as u64),
        stride: cfg.stride,
        observation: cfg.observation,
    };
    if cfg.finite {
        let opts = FiniteOptions {
            network_cap: cfg.network_cap,
            edge_budget: cfg.edge_budget,
        };
        simulate_finite(&cfg.params, &spec, &opts)
    } else {
        simulate(&cfg.params, &spec)
    }
}

/// Runs every replication of `cfg` on `jobs` worker threads. Output order
/// and content do not depend on `jobs`.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentResult, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let trajectories = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|i| run_one(cfg, i))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let theory = theory_limit(cfg, cfg.kind)?;
    let finals: Vec<f64> = trajectories.iter().map(|t| t.final_eps()).collect();
    let (mean, std) = mean_std(&finals);
    let kind = if cfg.finite {
        format!("finite_{}", cfg.kind.label())
    } else {
        cfg.kind.label().to_string()
    };
    let summary = SummaryRow {
        config_hash: cfg.hash(),
        kind,
        eps_star_theory: theory.eps_star,
        clause: theory.clause,
        eps_final_mean: mean,
        eps_final_std: std,
        replications: trajectories.len(),
        truncated: trajectories.iter().filter(|t| t.truncated.is_some()).count(),
    };
    Ok(ExperimentResult {
        config: cfg.clone(),
        trajectories,
        summary,
    })
}

pub const SUMMARY_HEADER: [&str; 8] = [
    "config_hash",
    "kind",
    "eps_star_theory",
    "eps_final_mean",
    "eps_final_std",
    "replications",
    "clause",
    "truncated",
];

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.config_hash.clone(),
            r.kind.clone(),
            format_sig(r.eps_star_theory, 6),
            format_sig(r.eps_final_mean, 6),
            format_sig(r.eps_final_std, 6),
            r.replications.to_string(),
            r.clause.map(|c| c.label().to_string()).unwrap_or_default(),
            r.truncated.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `summary.csv` and one `trajectory_<index>.csv` per replication
/// into `dir`; returns the summary path.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<PathBuf, ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, traj) in result.trajectories.iter().enumerate() {
        let path = dir.join(format!("trajectory_{i:03}.csv"));
        let file = fs::File::create(&path).map_err(io_err(&path))?;
        let mut buf = io::BufWriter::new(file);
        write_trajectory_csv(traj, &mut buf).map_err(io_err(&path))?;
        buf.flush().map_err(io_err(&path))?;
    }
    let path = dir.join("summary.csv");
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    write_summary_csv(std::slice::from_ref(&result.summary), file).map_err(|e| ExperimentError::Io {
        path: path.clone(),
        source: io::Error::other(e),
    })?;
    Ok(path)
}

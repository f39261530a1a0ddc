//! Theory against Monte Carlo for a single configuration.

use std::io::Write;

use finrep_core::scalar::format_sig;
use finrep_core::{find_equilibria, Clause};

use crate::config::ExperimentConfig;
use crate::experiment::{run_experiment, theory_limit, ExperimentError};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub config_hash: String,
    /// `asymptotic` or `finite`.
    pub mode: &'static str,
    pub kind: &'static str,
    pub eps_star_theory: f64,
    pub clause: Option<Clause>,
    pub mc_mean: f64,
    pub mc_std: f64,
    pub replications: usize,
    /// Equilibrium nearest to the Monte Carlo mean.
    pub attractor: f64,
}

impl ComparisonRow {
    pub fn agrees(&self) -> bool {
        (self.attractor - self.eps_star_theory).abs() <= 1e-9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn all_agree(&self) -> bool {
        self.rows.iter().all(ComparisonRow::agrees)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "config_hash",
            "mode",
            "kind",
            "eps_star_theory",
            "clause",
            "eps_final_mean",
            "eps_final_std",
            "replications",
            "attractor",
            "agrees",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.config_hash.clone(),
                r.mode.to_string(),
                r.kind.to_string(),
                format_sig(r.eps_star_theory, 6),
                r.clause.map(|c| c.label().to_string()).unwrap_or_default(),
                format_sig(r.mc_mean, 6),
                format_sig(r.mc_std, 6),
                r.replications.to_string(),
                format_sig(r.attractor, 6),
                r.agrees().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the configured dynamics with limiting returns and, when
/// `cfg.finite` is set, the finite-network Monte Carlo as well, and
/// compares each with the predicted limit.
pub fn compare_theory_mc(cfg: &ExperimentConfig, jobs: usize) -> Result<ComparisonReport, ExperimentError> {
    let theory = theory_limit(cfg, cfg.kind)?;
    let set = find_equilibria(&cfg.params, cfg.kind)?;
    let mut modes = vec![false];
    if cfg.finite {
        modes.push(true);
    }
    let mut rows = Vec::new();
    for finite in modes {
        let run_cfg = ExperimentConfig {
            finite,
            ..cfg.clone()
        };
        let res = run_experiment(&run_cfg, jobs)?;
        rows.push(ComparisonRow {
            config_hash: cfg.hash(),
            mode: if finite { "finite" } else { "asymptotic" },
            kind: cfg.kind.label(),
            eps_star_theory: theory.eps_star,
            clause: theory.clause,
            mc_mean: res.summary.eps_final_mean,
            mc_std: res.summary.eps_final_std,
            replications: res.summary.replications,
            attractor: set.nearest_stable(res.summary.eps_final_mean).eps_star,
        });
    }
    Ok(ComparisonReport { rows })
}

//! Iteration error against a converged reference, swept over source
//! amplitudes. The fitted log-log slope for iterate n sits near n when the
//! amplitudes stay inside the contraction regime.

use crate::config::{experiment, GridSpec, NonlinSpec, SourceSpec, SpeedSpec};
use crate::report::{fmt, RunCtx};
use phasewave::fit::log_log_slope;
use phasewave::{picard_iterate, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub grid: GridSpec,
    pub speed: SpeedSpec,
    pub nonlinearity: NonlinSpec,
    /// Unit-amplitude source profile; each run scales it by one eps value.
    pub source: SourceSpec,
    pub eps: Vec<f64>,
    /// Slopes are fitted for iterates 1..=n_fit.
    pub n_fit: usize,
    /// Iteration depth for the reference solve.
    pub n_ref: usize,
    pub seed: u64,
    pub out_dir: String,
}
experiment!(ConvergenceConfig);

pub fn run(cfg: &ConvergenceConfig, ctx: &RunCtx) -> Result<()> {
    if cfg.eps.is_empty() || cfg.eps.iter().any(|&e| !(e.is_finite() && e > 0.0)) {
        return Err(Error::SourceValidation("eps must be a nonempty positive list".into()));
    }
    if cfg.n_fit == 0 || cfg.n_ref <= cfg.n_fit {
        return Err(Error::SourceValidation(
            "need n_fit >= 1 and a deeper reference n_ref > n_fit".into(),
        ));
    }
    let grid = cfg.grid.build()?;
    let c = cfg.speed.build(&grid)?;
    let nl = cfg.nonlinearity.build(&grid)?;
    let profile = cfg.source.build(&grid, cfg.seed)?;

    // errors[n-1][k]: iterate n against the reference at eps[k]
    let mut errors = vec![Vec::with_capacity(cfg.eps.len()); cfg.n_fit];
    for &eps in &cfg.eps {
        let trace = picard_iterate(&profile.scaled(eps), &c, &nl, cfg.n_ref)?;
        let reference = trace.u_ref().unwrap_or_else(|| {
            trace.iterates.last().expect("trace holds the zeroth iterate")
        });
        // The zero initial guess is the first trace entry, so iterate n
        // lives at index n - 1 and its error scales like eps^n.
        for n in 1..=cfg.n_fit {
            let u_n = &trace.iterates[(n - 1).min(trace.iterates.len() - 1)];
            errors[n - 1].push(u_n.sub(reference)?.h1_norm());
        }
    }

    let mut rows = Vec::new();
    for n in 1..=cfg.n_fit {
        let slope = log_log_slope(&cfg.eps, &errors[n - 1]).unwrap_or(f64::NAN);
        for (k, &eps) in cfg.eps.iter().enumerate() {
            rows.push(vec![n.to_string(), fmt(eps), fmt(errors[n - 1][k]), fmt(slope)]);
        }
    }
    ctx.csv("convergence.csv", "n,eps,error,slope", &rows)
}

//! Causal solve of one configured source. Writes the solution field and a
//! one-row report; in oracle mode the report also carries the relative error
//! against the closed-form constant-speed solve.

use crate::config::{experiment, GridSpec, SourceSpec, SpeedSpec};
use crate::report::{fmt, RunCtx};
use phasewave::{modal_oracle, solve_causal, Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub grid: GridSpec,
    pub speed: SpeedSpec,
    pub source: SourceSpec,
    pub seed: u64,
    pub out_dir: String,
    #[serde(default)]
    pub oracle_check: bool,
}
experiment!(SolveConfig);

pub fn run(cfg: &SolveConfig, ctx: &RunCtx) -> Result<()> {
    let grid = cfg.grid.build()?;
    let c = cfg.speed.build(&grid)?;
    let f = cfg.source.build(&grid, cfg.seed)?;
    let (u, rep) = solve_causal(&f, &c)?;
    ctx.field("solution.pwf", &u)?;
    let mut header = String::from("cfl,residual");
    let mut row = vec![fmt(rep.cfl), fmt(rep.residual)];
    if cfg.oracle_check {
        let c0 = cfg.speed.constant_value().ok_or_else(|| {
            Error::Unsupported("the modal oracle cross-check needs a constant speed".into())
        })?;
        let reference = modal_oracle(&f, c0)?;
        let denom = reference.l2_norm();
        let rel = if denom > 0.0 { u.sub(&reference)?.l2_norm() / denom } else { u.l2_norm() };
        header.push_str(",oracle_rel_error");
        row.push(fmt(rel));
    }
    ctx.csv("solve_report.csv", &header, &[row])
}

//! Mixed-derivative interaction terms against their closed forms. Sources
//! are normalized internally, so the comparison is amplitude-free.

use crate::config::{experiment, GridSpec, NonlinSpec, SourceSpec, SpeedSpec};
use crate::report::{fmt, RunCtx};
use phasewave::{interaction_oracle, mixed_eps_derivative, Error, MultiSource, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionConfig {
    pub grid: GridSpec,
    pub speed: SpeedSpec,
    pub nonlinearity: NonlinSpec,
    /// Two sources probe the pair term, three the triple term.
    pub sources: Vec<SourceSpec>,
    /// Central-difference step in the amplitude hypercube.
    pub h: f64,
    /// Also run at h/2 and report the defect ratio (near 4 for a clean
    /// second-order stencil).
    #[serde(default = "default_true")]
    pub halving_check: bool,
    pub seed: u64,
    pub out_dir: String,
}
experiment!(InteractionConfig);

fn default_true() -> bool {
    true
}

pub fn run(cfg: &InteractionConfig, ctx: &RunCtx) -> Result<()> {
    if cfg.sources.len() < 2 || cfg.sources.len() > 3 {
        return Err(Error::SourceValidation(format!(
            "interaction needs 2 or 3 sources, got {}",
            cfg.sources.len()
        )));
    }
    let grid = cfg.grid.build()?;
    let c = cfg.speed.build(&grid)?;
    let nl = cfg.nonlinearity.build(&grid)?;
    let parts = cfg
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| Ok((s.build(&grid, cfg.seed.wrapping_add(i as u64))?, 0.0)))
        .collect::<Result<Vec<_>>>()?;
    let ms = MultiSource::new(parts)?;
    let profiles: Vec<_> = (0..ms.len()).map(|i| ms.part(i).0.clone()).collect();
    let subset: Vec<usize> = (0..ms.len()).collect();

    let oracle = interaction_oracle(&profiles, &c, &nl)?;
    let scale = oracle.l2_norm();
    let fd = mixed_eps_derivative(&ms, &c, &nl, &subset, cfg.h)?;
    let defect = fd.sub(&oracle)?.l2_norm();
    let rel = if scale > 0.0 { defect / scale } else { f64::NAN };

    ctx.field("mixed_derivative.pwf", &fd)?;
    ctx.field("oracle.pwf", &oracle)?;

    let (defect_half, ratio) = if cfg.halving_check {
        let fd2 = mixed_eps_derivative(&ms, &c, &nl, &subset, cfg.h / 2.0)?;
        let d2 = fd2.sub(&oracle)?.l2_norm();
        (d2, if d2 > 0.0 { defect / d2 } else { f64::NAN })
    } else {
        (f64::NAN, f64::NAN)
    };

    let row = vec![
        cfg.sources.len().to_string(),
        fmt(cfg.h),
        fmt(scale),
        fmt(fd.l2_norm()),
        fmt(defect),
        fmt(rel),
        fmt(defect_half),
        fmt(ratio),
    ];
    ctx.csv(
        "interaction.csv",
        "parts,h,oracle_norm,fd_norm,defect,rel_error,defect_half,halving_ratio",
        &[row],
    )
}

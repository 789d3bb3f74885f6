//! Fit network parameters to observed solves. Data comes either from causal
//! solves of configured sources under a stated truth, or from field files
//! prepared elsewhere; the starting parameters are read off the configured
//! guesses.

use crate::config::{experiment, GridSpec, NonlinSpec, RegionSpec, SourceSpec, SpeedSpec};
use crate::report::{fmt, RunCtx};
use phasewave::microlocal::init_theta;
use phasewave::{
    build_covering, train, Error, Field, ParamSubset, Result, TrainConfig, WeightSpec,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub source: String,
    pub solution: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    /// Solve each source under the stated truth; sources see seed, seed+1, ..
    Solve {
        speed: SpeedSpec,
        nonlinearity: NonlinSpec,
        sources: Vec<SourceSpec>,
    },
    /// Precomputed (source, solution) field files.
    Files { pairs: Vec<PairSpec> },
}

/// Optimizer settings; the run seed comes from the top-level config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub max_iters: usize,
    pub fd_step: f64,
    pub step0: f64,
    pub active_subsets: Vec<ParamSubset>,
    pub weight: WeightSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCliConfig {
    pub grid: GridSpec,
    pub region: RegionSpec,
    pub delta_m: f64,
    pub gamma_delta: f64,
    /// Network depth the parameters are sized for.
    pub m: usize,
    pub init_speed: SpeedSpec,
    pub init_nonlinearity: NonlinSpec,
    pub data: DataSpec,
    pub train: TrainSection,
    pub seed: u64,
    pub out_dir: String,
}
experiment!(TrainCliConfig);

fn read_field_input(path: &str, grid: &phasewave::Grid) -> Result<Field> {
    let f = phasewave::io::read_field(path)
        .map_err(|e| Error::SourceValidation(format!("field file {path}: {e}")))?;
    if f.grid() != grid {
        return Err(Error::SourceValidation(format!(
            "field file {path} was sampled on a different grid"
        )));
    }
    Ok(f)
}

pub fn run(cfg: &TrainCliConfig, ctx: &RunCtx) -> Result<()> {
    let grid = cfg.grid.build()?;
    let cov = build_covering(&grid, &cfg.region.build(), cfg.delta_m)?;
    let c_init = cfg.init_speed.build(&grid)?;
    let nl_init = cfg.init_nonlinearity.build(&grid)?;
    let theta0 = init_theta(&cov, &c_init, &nl_init, cfg.m, cfg.gamma_delta)?;

    let dataset: Vec<(Field, Field)> = match &cfg.data {
        DataSpec::Solve { speed, nonlinearity, sources } => {
            if sources.is_empty() {
                return Err(Error::TrainValidation("data.sources is empty".into()));
            }
            let c_true = speed.build(&grid)?;
            let nl_true = nonlinearity.build(&grid)?;
            sources
                .iter()
                .enumerate()
                .map(|(i, spec)| {
                    let f = spec.build(&grid, cfg.seed.wrapping_add(i as u64))?;
                    let u = phasewave::picard_iterate(&f, &c_true, &nl_true, 12)?
                        .iterates
                        .last()
                        .expect("trace holds the zeroth iterate")
                        .clone();
                    Ok((f, u))
                })
                .collect::<Result<Vec<_>>>()?
        }
        DataSpec::Files { pairs } => pairs
            .iter()
            .map(|p| Ok((read_field_input(&p.source, &grid)?, read_field_input(&p.solution, &grid)?)))
            .collect::<Result<Vec<_>>>()?,
    };

    let tc = TrainConfig {
        seed: cfg.seed,
        max_iters: cfg.train.max_iters,
        fd_step: cfg.train.fd_step,
        step0: cfg.train.step0,
        active_subsets: cfg.train.active_subsets.clone(),
        weight: cfg.train.weight,
    };
    let (theta, report) = train(&dataset, &theta0, &cov, &tc)?;

    std::fs::write(ctx.path("theta.json"), theta.to_json()?)?;
    let rows: Vec<Vec<String>> = report
        .cost_trajectory
        .iter()
        .enumerate()
        .map(|(i, &cost)| vec![i.to_string(), fmt(cost)])
        .collect();
    ctx.csv("train_report.csv", "iter,cost", &rows)?;
    let rows: Vec<Vec<String>> = report
        .final_patch_costs
        .iter()
        .enumerate()
        .map(|(i, &cost)| vec![i.to_string(), fmt(cost)])
        .collect();
    ctx.csv("patch_costs.csv", "patch,cost", &rows)
}

//! Null ray trajectory from a configured phase-space start, with symbol
//! conservation along the curve and a forward-backward reversal check.

use crate::config::{experiment, GridSpec, SpeedSpec};
use crate::report::{fmt, fmt_row, RunCtx};
use phasewave::{flow, hamiltonian_eval, Error, PhasePoint, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSpec {
    pub z_m: Vec<f64>,
    pub zeta: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub grid: GridSpec,
    pub speed: SpeedSpec,
    pub start: StartSpec,
    pub s_end: f64,
    pub ds: f64,
    #[serde(default = "default_true")]
    pub reversal_check: bool,
    pub seed: u64,
    pub out_dir: String,
}
experiment!(FlowConfig);

fn default_true() -> bool {
    true
}

fn to_coord(v: &[f64], axes: usize, what: &str) -> Result<[f64; 3]> {
    if v.len() != axes {
        return Err(Error::SourceValidation(format!(
            "{what} needs {axes} components, got {}",
            v.len()
        )));
    }
    let mut out = [0.0; 3];
    out[..axes].copy_from_slice(v);
    Ok(out)
}

pub fn run(cfg: &FlowConfig, ctx: &RunCtx) -> Result<()> {
    let grid = cfg.grid.build()?;
    let c = cfg.speed.build(&grid)?;
    let axes = grid.axes();
    let start = PhasePoint::new(
        to_coord(&cfg.start.z_m, axes, "start position")?,
        to_coord(&cfg.start.zeta, axes, "start covector")?,
    );
    let curve = flow(&start, &c, cfg.s_end, cfg.ds)?;
    let p0 = hamiltonian_eval(&curve.samples[0].1, &c);

    let mut header = String::from("s,t_m");
    for a in 1..axes {
        header.push_str(&format!(",x{a}_m"));
    }
    header.push_str(",tau");
    for a in 1..axes {
        header.push_str(&format!(",xi{a}"));
    }
    header.push_str(",amp_re,amp_im,drift");
    let rows: Vec<Vec<String>> = curve
        .samples
        .iter()
        .map(|(s, p, amp)| {
            let mut vals = vec![*s];
            vals.extend_from_slice(&p.z[..axes]);
            vals.extend_from_slice(&p.zeta[..axes]);
            vals.push(amp.re);
            vals.push(amp.im);
            vals.push((hamiltonian_eval(p, &c) - p0).abs());
            fmt_row(&vals)
        })
        .collect();
    ctx.csv("trajectory.csv", &header, &rows)?;

    let reversal = if cfg.reversal_check {
        let end = curve.samples.last().expect("flow emits samples").1;
        let back = flow(&end, &c, -cfg.s_end, cfg.ds)?;
        let home = back.samples.last().expect("flow emits samples").1;
        let mut defect = 0.0f64;
        for a in 0..axes {
            defect = defect
                .max((home.z[a] - start.z[a]).abs())
                .max((home.zeta[a] - start.zeta[a]).abs());
        }
        defect
    } else {
        f64::NAN
    };
    ctx.csv(
        "flow_summary.csv",
        "hamiltonian_drift,reversal_defect",
        &[vec![fmt(curve.hamiltonian_drift), fmt(reversal)]],
    )
}

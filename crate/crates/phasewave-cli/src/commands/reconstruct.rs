//! Read physical unknowns back out of a trained parameter file and compare
//! them against a stated truth: per-patch speed with its Lipschitz sampling
//! bound, and the expanded nonlinearity with its sup misfit on a small ball.

use crate::config::{experiment, GridSpec, NonlinSpec, RegionSpec, SpeedSpec};
use crate::report::{fmt, RunCtx};
use phasewave::{
    build_covering, reconstruct_nonlinearity, reconstruct_speed, Error, Result, Theta, WaveSpeed,
};
use serde::{Deserialize, Serialize};

fn default_u_bound() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructConfig {
    pub grid: GridSpec,
    pub region: RegionSpec,
    pub theta_path: String,
    pub speed_true: SpeedSpec,
    #[serde(default)]
    pub nonlinearity_true: Option<NonlinSpec>,
    /// Radius of the amplitude ball the nonlinearity misfit is taken over.
    #[serde(default = "default_u_bound")]
    pub u_bound: f64,
    pub seed: u64,
    pub out_dir: String,
}
experiment!(ReconstructConfig);

/// Largest |grad c| over the grid nodes, read off the smooth interpolant of
/// c^2 via grad c = grad(c^2) / 2c.
fn max_speed_gradient(c: &WaveSpeed) -> f64 {
    let grid = c.grid();
    let d = grid.dim();
    let counts: Vec<usize> = (0..d).map(|a| grid.n_x()[a]).collect();
    let total: usize = counts.iter().product();
    let mut g = vec![0.0; d];
    let mut worst = 0.0f64;
    for flat in 0..total {
        let mut rest = flat;
        let mut x = vec![0.0; d];
        for a in (0..d).rev() {
            x[a] = (rest % counts[a]) as f64 * grid.spacing(a + 1);
            rest /= counts[a];
        }
        c.grad_c2_smooth(&x, &mut g);
        let speed = c.c2_smooth(&x).sqrt();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt() / (2.0 * speed);
        worst = worst.max(norm);
    }
    worst
}

fn eval_poly_ascending(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
}

pub fn run(cfg: &ReconstructConfig, ctx: &RunCtx) -> Result<()> {
    let grid = cfg.grid.build()?;
    let text = std::fs::read_to_string(&cfg.theta_path)
        .map_err(|e| Error::SourceValidation(format!("theta file {}: {e}", cfg.theta_path)))?;
    let theta = Theta::from_json(&text)?;
    let cov = build_covering(&grid, &cfg.region.build(), theta.delta)?;
    let pairs = reconstruct_speed(&theta, &cov)?;
    let c_true = cfg.speed_true.build(&grid)?;
    let lip_bound = 2.0 * theta.delta * max_speed_gradient(&c_true);

    // F(u) = a2 u^2 + a3 u^3 + .. stated ascending from u^0 for comparison.
    let target_poly: Option<Vec<f64>> = cfg.nonlinearity_true.as_ref().map(|nl| {
        let mut asc = vec![0.0, 0.0];
        asc.extend_from_slice(&nl.poly_coeffs());
        asc
    });

    let d = grid.dim();
    let mut header = String::from("patch,center_t_m,center_x_m");
    if d > 1 {
        header.push_str(",center_y_m");
    }
    header.push_str(",delta_m,c_ii,c_true,abs_c_err,lip_bound");
    if target_poly.is_some() {
        header.push_str(",f_sup_err");
    }
    let poly_len = reconstruct_nonlinearity(&theta, 0)?.len();
    for p in 0..poly_len {
        header.push_str(&format!(",p{p}"));
    }

    let mut rows = Vec::with_capacity(pairs.len());
    for (i, (center, c_ii)) in pairs.iter().enumerate() {
        let truth = c_true.c2_smooth(&center[1..=d]).sqrt();
        let poly = reconstruct_nonlinearity(&theta, i)?;
        let mut row = vec![i.to_string()];
        for a in 0..=d {
            row.push(fmt(center[a]));
        }
        row.push(fmt(theta.delta));
        row.push(fmt(*c_ii));
        row.push(fmt(truth));
        row.push(fmt((c_ii - truth).abs()));
        row.push(fmt(lip_bound));
        if let Some(target) = &target_poly {
            let sup = (0..=100)
                .map(|k| {
                    let u = cfg.u_bound * (k as f64 / 50.0 - 1.0);
                    (eval_poly_ascending(target, u) - eval_poly_ascending(&poly, u)).abs()
                })
                .fold(0.0f64, f64::max);
            row.push(fmt(sup));
        }
        row.extend(poly.iter().map(|&p| fmt(p)));
        rows.push(row);
    }
    ctx.csv("reconstruct.csv", &header, &rows)
}

//! Dyadic decomposition suite: exact resynthesis, shell decay against the
//! field's regularity, kernel support spot checks, frequency-filtered
//! remainder profiles, and the Taylor truncation error of chained products.

use crate::config::{experiment, GridSpec};
use crate::report::{fmt, fmt_row, RunCtx};
use phasewave::fit::log_log_slope;
use phasewave::synthetic::gen_power_law;
use phasewave::{
    build_dyadic_covering, decompose, horner_params, paraproduct_chi, remainder_profile, Error,
    Field, FrequencyWeight, ParaKernel, Result,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellSection {
    /// Random fields checked for exact resynthesis.
    pub trials: usize,
    pub exponent: f64,
    /// Sobolev index of the synthetic decay field; its shells are built with
    /// spectral profile matching that regularity.
    pub sobolev_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemainderRow {
    /// Nominal Holder regularity of the coefficient field.
    pub r: f64,
    pub exponent_a: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemainderSection {
    pub rows: Vec<RemainderRow>,
    pub exponent_f: f64,
    pub radii: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParalinSection {
    /// Overall strength of the model nonlinearity a u^2/(1+u).
    pub a: f64,
    /// Truncation degree N: the chain keeps powers 2..=N.
    pub degree_n: usize,
    pub eps: Vec<f64>,
    pub exponent: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpConfig {
    pub grid: GridSpec,
    pub shell_constant: f64,
    pub shells: ShellSection,
    pub remainder: RemainderSection,
    pub paralin: ParalinSection,
    pub seed: u64,
    pub out_dir: String,
}
experiment!(LpConfig);

pub fn run(cfg: &LpConfig, ctx: &RunCtx) -> Result<()> {
    let grid = cfg.grid.build()?;
    let sys = build_dyadic_covering(&grid, cfg.shell_constant)?;
    let ker = ParaKernel::new(&grid);

    // Resynthesis: sum of shells against the field itself.
    if cfg.shells.trials == 0 {
        return Err(Error::SourceValidation("shells.trials must be positive".into()));
    }
    let mut rows = Vec::new();
    for t in 0..cfg.shells.trials {
        let u = gen_power_law(&grid, cfg.shells.exponent, cfg.seed.wrapping_add(t as u64));
        let pieces = decompose(&u, &sys)?;
        let mut acc = Field::zeros(&grid);
        for p in &pieces {
            acc = acc.add(p)?;
        }
        let rel = acc.sub(&u)?.l2_norm() / u.l2_norm();
        rows.push(vec![t.to_string(), fmt(rel)]);
    }
    ctx.csv("resynthesis.csv", "trial,rel_error", &rows)?;

    // Shell decay of a field with prescribed regularity. The synthesis
    // profile -s - axes/2 - 0.1 keeps the field just inside H^s.
    let axes = grid.axes() as f64;
    let s = cfg.shells.sobolev_s;
    let u = gen_power_law(&grid, -s - axes / 2.0 - 0.1, cfg.seed.wrapping_add(1000));
    let pieces = decompose(&u, &sys)?;
    let (mut xs, mut ns) = (Vec::new(), Vec::new());
    for (j, p) in pieces.iter().enumerate().skip(1) {
        let n = p.l2_norm();
        if n > 0.0 {
            xs.push(2f64.powi(j as i32));
            ns.push(n);
        }
    }
    let decay = -log_log_slope(&xs, &ns).unwrap_or(f64::NAN);
    let rows: Vec<Vec<String>> = pieces
        .iter()
        .enumerate()
        .map(|(j, p)| vec![j.to_string(), fmt(p.l2_norm()), fmt(decay)])
        .collect();
    ctx.csv("shells.csv", "j,norm,decay_exponent", &rows)?;

    // Kernel spot checks: saturated for |xi| < |eta|/16, dead past |eta|/2,
    // bounded in the band between.
    let mut rows = Vec::new();
    for eta in [4.0, 8.0, 16.0] {
        for (ratio, expect) in
            [(1.0 / 32.0, "one"), (0.06, "one"), (0.18, "band"), (0.51, "zero"), (1.0, "zero")]
        {
            let xi = ratio * eta;
            let v = ker.eval(xi, eta);
            let ok = match expect {
                "one" => v == 1.0,
                "zero" => v == 0.0,
                _ => (0.0..=1.0).contains(&v),
            };
            rows.push(vec![fmt(xi), fmt(eta), fmt(v), expect.into(), ok.to_string()]);
        }
    }
    ctx.csv("chi_checks.csv", "xi,eta,value,expected,ok", &rows)?;

    // Remainder of the two-sided split of a product a*f, profiled over the
    // configured cut radii. Decay tracks the coefficient regularity.
    let weights: Vec<FrequencyWeight> =
        cfg.remainder.radii.iter().map(|&r| FrequencyWeight::new(0.0, r)).collect();
    let f = gen_power_law(&grid, cfg.remainder.exponent_f, cfg.seed.wrapping_add(2000));
    let mut rows = Vec::new();
    for (i, row) in cfg.remainder.rows.iter().enumerate() {
        let a = gen_power_law(&grid, row.exponent_a, cfg.seed.wrapping_add(3000 + i as u64));
        let target = a.mul_pointwise(&f)?;
        let approx = paraproduct_chi(&a, &f, &ker)?.add(&paraproduct_chi(&f, &a, &ker)?)?;
        let prof = remainder_profile(&target, &approx, &weights)?;
        let slope = log_log_slope(&cfg.remainder.radii, &prof).unwrap_or(f64::NAN);
        for (k, &radius) in cfg.remainder.radii.iter().enumerate() {
            rows.push(fmt_row(&[row.r, radius, prof[k], slope]));
        }
    }
    ctx.csv("remainder.csv", "r,radius,value,slope", &rows)?;

    // Taylor truncation of F(u) = a u^2/(1+u) at degree N: the sup-norm
    // remainder is the next Taylor band, so it scales like eps^(N+1).
    if cfg.paralin.degree_n < 2 {
        return Err(Error::SourceValidation("paralin.degree_n must be at least 2".into()));
    }
    let n_deg = cfg.paralin.degree_n;
    let coeffs: Vec<f64> =
        (2..=n_deg).map(|k| cfg.paralin.a * if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let chain = horner_params(&coeffs)?;
    let f_exact = |u: f64| cfg.paralin.a * u * u / (1.0 + u);
    let raw = gen_power_law(&grid, cfg.paralin.exponent, cfg.seed.wrapping_add(4000));
    let raw_sup = raw.linf_norm();
    let mut sups = Vec::new();
    for &eps in &cfg.paralin.eps {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::SourceValidation("paralin.eps must sit in (0, 1)".into()));
        }
        let u = raw.scaled(eps / raw_sup);
        let mut worst = 0.0f64;
        for &v in u.values() {
            worst = worst.max((f_exact(v) - chain.eval_poly(v)).abs());
        }
        sups.push(worst);
    }
    let slope = log_log_slope(&cfg.paralin.eps, &sups).unwrap_or(f64::NAN);
    let rows: Vec<Vec<String>> = cfg
        .paralin
        .eps
        .iter()
        .zip(&sups)
        .map(|(&eps, &sup)| fmt_row(&[eps, sup, sup / eps.powi(n_deg as i32 + 1), slope]))
        .collect();
    ctx.csv("paralin.csv", "eps,sup_remainder,c_f,slope", &rows)
}

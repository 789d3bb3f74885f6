//! Slope fitting helpers for convergence and decay measurements.

use crate::error::{Error, Result};
use crate::grid::SpectralField;

/// Least-squares slope of ln(y) against ln(x). All samples must be positive.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::FitDomain(format!(
            "need at least 2 paired samples, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let mut lx = Vec::with_capacity(xs.len());
    let mut ly = Vec::with_capacity(ys.len());
    for (&x, &y) in xs.iter().zip(ys) {
        if !(x > 0.0) || !(y > 0.0) || !x.is_finite() || !y.is_finite() {
            return Err(Error::FitDomain(format!(
                "log-log fit needs positive finite samples, got ({x}, {y})"
            )));
        }
        lx.push(x.ln());
        ly.push(y.ln());
    }
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::FitDomain("all abscissae equal".into()));
    }
    Ok(sxy / sxx)
}

/// Successive ratios v[i+1]/v[i], for Richardson-style refinement checks.
pub fn halving_ratios(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| w[1] / w[0]).collect()
}

/// Fitted exponent p of the radial amplitude profile |v(zeta)| ~ |zeta|^p over
/// the band of lattice radii [band.0, band.1]. Bins are quarter-octave shells;
/// each shell contributes the rms amplitude at its geometric center radius.
pub fn spectral_decay_exponent(sf: &SpectralField, band: (f64, f64)) -> Result<f64> {
    let (lo, hi) = band;
    if !(lo > 0.0) || !(hi > lo) {
        return Err(Error::FitDomain(format!("bad band [{lo}, {hi}]")));
    }
    let grid = sf.grid();
    let ratio = 2f64.powf(0.25);
    let n_bins = ((hi / lo).ln() / ratio.ln()).ceil() as usize;
    let mut sums = vec![0.0f64; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (i, v) in sf.values().iter().enumerate() {
        let z = grid.zeta(i);
        let rho = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]).sqrt();
        if rho < lo || rho >= hi {
            continue;
        }
        let b = ((rho / lo).ln() / ratio.ln()).floor() as usize;
        let b = b.min(n_bins - 1);
        sums[b] += v.norm_sqr();
        counts[b] += 1;
    }
    let mut radii = Vec::new();
    let mut amps = Vec::new();
    for b in 0..n_bins {
        if counts[b] == 0 {
            continue;
        }
        let center = lo * ratio.powf(b as f64 + 0.5);
        let rms = (sums[b] / counts[b] as f64).sqrt();
        if rms > 0.0 {
            radii.push(center);
            amps.push(rms);
        }
    }
    if radii.len() < 3 {
        return Err(Error::FitDomain(format!(
            "band [{lo}, {hi}] holds only {} populated shells, need 3",
            radii.len()
        )));
    }
    log_log_slope(&radii, &amps)
}

//! Seeded synthetic fields with prescribed spectral decay.

use crate::grid::{inverse_fourier, Field, Grid, SpectralField};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use crate::smooth::smooth_step;

/// Real random-phase field whose spectral amplitude follows <zeta>^exponent.
/// Nyquist rows are zeroed so the Hermitian pairing is exact and the synthesis
/// has no imaginary residue. Deterministic in (grid, exponent, seed).
pub fn gen_power_law(grid: &Grid, exponent: f64, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = grid.shape();
    let mut values = vec![Complex64::default(); grid.len()];
    let mut assigned = vec![false; grid.len()];
    let norm2 = grid.zeta_norm2_table();
    for flat in 0..grid.len() {
        if assigned[flat] {
            continue;
        }
        let idx = grid.flat_to_multi(flat);
        if (0..grid.axes()).any(|a| idx[a] == shape[a] / 2) {
            assigned[flat] = true;
            continue;
        }
        let mut mirror = [0usize; 3];
        for a in 0..grid.axes() {
            mirror[a] = (shape[a] - idx[a]) % shape[a];
        }
        let partner = grid.multi_to_flat(&mirror[..grid.axes()]);
        let amp = (1.0 + norm2[flat]).powf(exponent / 2.0);
        if partner == flat {
            // DC (all components zero): real sample.
            values[flat] = Complex64::new(amp * rng.gen_range(-1.0..1.0f64), 0.0);
            assigned[flat] = true;
        } else {
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            values[flat] = Complex64::from_polar(amp, theta);
            values[partner] = values[flat].conj();
            assigned[flat] = true;
            assigned[partner] = true;
        }
    }
    let sf = SpectralField::from_values(grid, values).expect("matching length");
    inverse_fourier(&sf).expect("Hermitian spectrum synthesizes real")
}

/// Smooth switch-on in time: 0 for t <= t_on, 1 for t >= t_on + t_width,
/// constant in space. Exactly zero (bitwise) below t_on.
pub fn time_ramp(grid: &Grid, t_on: f64, t_width: f64) -> Field {
    Field::from_fn(grid, |z| smooth_step((z[0] - t_on) / t_width))
}

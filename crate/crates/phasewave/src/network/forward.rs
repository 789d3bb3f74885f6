//! Layer units and the forward pass: spectral propagation between patches,
//! division by the frozen symbol away from the characteristic cone, and
//! paraproduct activations, assembled layer by layer.

use crate::error::{Error, Result};
use crate::grid::{fourier, inverse_fourier, weighted_norm, Field, FrequencyWeight, SpectralField};
use crate::microlocal::CanonicalLink;
use crate::network::covering::{localize, Covering, LayerState};
use crate::network::theta::Theta;
use crate::paraproduct::{para_forward, ParaKernel, ParaNetParams};
use crate::smooth::smooth_step;
use num_complex::Complex64;
use rayon::prelude::*;

/// A signed mode is pairable when its mirror is also on the lattice; the
/// lone -n/2 row of an even axis is not, and any content placed there
/// cannot stay conjugate-symmetric. Those rows are dropped on both ends of
/// the resampling.
#[inline]
fn pairable(k: i64, n: usize) -> bool {
    2 * (k.unsigned_abs() as usize) < n
}

/// One propagation unit: contribution at the link's target patch from a
/// source patch spectrum, out(zeta) = c <zeta>^{-1} source(S zeta), with
/// bilinear interpolation on the frequency lattice and zero extension past
/// the representable modes. A masked link contributes nothing.
pub fn propagate_unit(source: &SpectralField, link: &CanonicalLink) -> Result<SpectralField> {
    let grid = source.grid().clone();
    if link.dim + 1 != grid.axes() {
        return Err(Error::GridMismatch("link rank does not match grid".into()));
    }
    if !link.causal {
        return Ok(SpectralField::zeros(&grid));
    }
    let det = link.det();
    if det.abs() <= 1e-9 {
        return Err(Error::GlancingConfiguration { det });
    }
    let axes = grid.axes();
    let shape = grid.shape();
    let src = source.values();
    let spacings: Vec<f64> = (0..axes).map(|a| grid.freq_spacing(a)).collect();
    let c_amp = link.c_amp;

    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    out.par_iter_mut().enumerate().for_each(|(flat, slot)| {
        let multi = grid.flat_to_multi(flat);
        let mut zeta = [0.0; 3];
        let mut z2 = 0.0;
        for a in 0..axes {
            let k = grid.signed_mode(a, multi[a]);
            if !pairable(k, shape[a]) {
                return;
            }
            zeta[a] = k as f64 * spacings[a];
            z2 += zeta[a] * zeta[a];
        }
        let mapped = link.apply(&zeta[..axes]);

        // corner gather: per axis the two nodes floor(s) and floor(s)+1
        let mut acc = Complex64::new(0.0, 0.0);
        let corners = 1usize << axes;
        for corner in 0..corners {
            let mut weight = 1.0;
            let mut index = 0usize;
            let mut alive = true;
            for a in 0..axes {
                let s = mapped[a] / spacings[a];
                let k0 = s.floor();
                let t = s - k0;
                let k = k0 as i64 + ((corner >> a) & 1) as i64;
                let w = if (corner >> a) & 1 == 1 { t } else { 1.0 - t };
                if !pairable(k, shape[a]) {
                    alive = false;
                    break;
                }
                weight *= w;
                index = index * shape[a] + k.rem_euclid(shape[a] as i64) as usize;
            }
            if alive && weight != 0.0 {
                acc += src[index] * weight;
            }
        }
        *slot = acc * (c_amp / (1.0 + z2).sqrt());
    });
    SpectralField::from_values(&grid, out)
}

/// Diagonal unit: division by the constant-speed wave multiplier, cut off
/// smoothly on the band |symbol| < 2 delta_gamma around the cone.
///
/// On the mode e^{i<zeta,z>} the operator d_t^2 - c^2 Lap multiplies by
/// c^2|xi|^2 - tau^2, so that is the divisor; dividing by tau^2 - c^2|xi|^2
/// would negate the output and nothing downstream could absorb the sign.
pub fn diagonal_unit(
    source: &SpectralField,
    c_jj: f64,
    delta_gamma: f64,
) -> Result<SpectralField> {
    if !(c_jj.is_finite() && c_jj > 0.0) {
        return Err(Error::NetworkValidation("diagonal speed must be positive".into()));
    }
    if !(delta_gamma.is_finite() && delta_gamma > 0.0) {
        return Err(Error::NetworkValidation("gamma_delta must be positive".into()));
    }
    let grid = source.grid().clone();
    let axes = grid.axes();
    let c2 = c_jj * c_jj;
    let values = source
        .values()
        .par_iter()
        .enumerate()
        .map(|(flat, &v)| {
            let zeta = grid.zeta(flat);
            let xi2: f64 = (1..axes).map(|a| zeta[a] * zeta[a]).sum();
            let symbol = c2 * xi2 - zeta[0] * zeta[0];
            let gamma = smooth_step(symbol.abs() / delta_gamma - 1.0);
            if gamma > 0.0 {
                v * (gamma / symbol)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    SpectralField::from_values(&grid, values)
}

/// Activation unit: synthesize the patch spectrum, push it through the
/// paraproduct chain, and transform back.
pub fn activation_unit(
    h: &SpectralField,
    params: &ParaNetParams,
    ker: &ParaKernel,
) -> Result<SpectralField> {
    let u = inverse_fourier(h)?;
    Ok(fourier(&para_forward(&u, params, ker)?))
}

/// Sum of all units applied to per-patch inputs: out_i = sum_j unit_ij in_j,
/// diagonal division for j = i, propagation links otherwise. The j order is
/// fixed, so the reduction is deterministic.
fn apply_units(inputs: &[SpectralField], theta: &Theta) -> Result<Vec<SpectralField>> {
    let k = theta.k();
    if inputs.len() != k {
        return Err(Error::NetworkValidation("unit count does not match patches".into()));
    }
    (0..k)
        .into_par_iter()
        .map(|i| {
            let mut acc = SpectralField::zeros(inputs[i].grid());
            for j in 0..k {
                let contrib = if j == i {
                    diagonal_unit(&inputs[i], theta.c_diag[i], theta.gamma_delta)?
                } else {
                    propagate_unit(&inputs[j], theta.link(i, j))?
                };
                acc = acc.add(&contrib)?;
            }
            Ok(acc)
        })
        .collect()
}

/// One network layer: h_i minus the summed units of the activations.
pub fn assemble_layer(
    prev: &LayerState,
    activations: &[SpectralField],
    theta: &Theta,
) -> Result<LayerState> {
    if prev.units.len() != theta.k() {
        return Err(Error::NetworkValidation("layer width does not match patches".into()));
    }
    let applied = apply_units(activations, theta)?;
    let units = prev
        .units
        .iter()
        .zip(&applied)
        .map(|(h, a)| h.sub(a))
        .collect::<Result<Vec<_>>>()?;
    Ok(LayerState { units, layer: prev.layer + 1 })
}

/// Depth-m forward pass. Layer one applies the linear units to the
/// localized source; each further layer subtracts the units of the
/// previous layer's activations.
pub fn forward(f: &Field, theta: &Theta, cov: &Covering, m: usize) -> Result<LayerState> {
    if m == 0 {
        return Err(Error::NetworkValidation("need at least one layer".into()));
    }
    if theta.k() != cov.k() {
        return Err(Error::NetworkValidation("parameter patch count differs".into()));
    }
    if m > theta.m() {
        return Err(Error::NetworkValidation(format!(
            "depth {m} exceeds the {}-layer parameter pack",
            theta.m()
        )));
    }
    let h0 = localize(f, cov)?;
    let mut state = LayerState { units: apply_units(&h0.units, theta)?, layer: 1 };
    if m == 1 {
        return Ok(state);
    }
    let ker = ParaKernel::new(cov.grid());
    for layer in 2..=m {
        let stage = layer - 2;
        let activations: Vec<SpectralField> = (0..theta.k())
            .into_par_iter()
            .map(|j| activation_unit(&state.units[j], theta.chain(j, stage), &ker))
            .collect::<Result<Vec<_>>>()?;
        state = assemble_layer(&state, &activations, theta)?;
    }
    Ok(state)
}

/// Squared-misfit cost over the observed patches:
/// sum_i || fourier(bump_i * truth) - h_i ||_w^2.
pub fn cost(
    state: &LayerState,
    truth: &Field,
    cov: &Covering,
    w: &FrequencyWeight,
    observed: &[usize],
) -> Result<f64> {
    if observed.is_empty() {
        return Err(Error::EmptyObservedSet);
    }
    if state.units.len() != cov.k() {
        return Err(Error::NetworkValidation("state width does not match covering".into()));
    }
    if truth.grid() != cov.grid() {
        return Err(Error::GridMismatch("truth grid differs from covering".into()));
    }
    let mut idx: Vec<usize> = observed.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if *idx.last().unwrap() >= cov.k() {
        return Err(Error::NetworkValidation("observed index out of range".into()));
    }
    let parts = idx
        .par_iter()
        .map(|&i| {
            let target = fourier(&truth.mul_pointwise(cov.bump(i))?);
            let n = weighted_norm(&target.sub(&state.units[i])?, w)?;
            Ok(n * n)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum())
}

/// Per-patch cost terms over every patch, in patch order.
pub(crate) fn patch_costs(
    state: &LayerState,
    truth: &Field,
    cov: &Covering,
    w: &FrequencyWeight,
) -> Result<Vec<f64>> {
    (0..cov.k())
        .into_par_iter()
        .map(|i| {
            let target = fourier(&truth.mul_pointwise(cov.bump(i))?);
            let n = weighted_norm(&target.sub(&state.units[i])?, w)?;
            Ok(n * n)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::network::covering::{build_covering, Region};
    use std::f64::consts::TAU;

    fn torus(n: usize) -> Grid {
        Grid::new(n, &[n], TAU, &[TAU]).unwrap()
    }

    fn mode_field(grid: &Grid, kt: i64, kx: i64) -> Field {
        Field::from_fn(grid, |z| (kt as f64 * z[0] + kx as f64 * z[1]).cos())
    }

    fn open_link(i: usize, j: usize, c_amp: f64) -> CanonicalLink {
        let mut l = CanonicalLink::identity(i, j, 1);
        l.causal = true;
        l.c_amp = c_amp;
        l
    }

    /// Fully connected identity-map parameters on a covering, unit speeds.
    fn plain_theta(cov: &Covering, m: usize, chain: Vec<(f64, f64)>) -> Theta {
        let k = cov.k();
        let mut links = Vec::new();
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    links.push(open_link(i, j, 0.5));
                }
            }
        }
        let activ = (0..k)
            .map(|_| {
                (0..m - 1)
                    .map(|_| ParaNetParams::new(chain.clone()).unwrap())
                    .collect()
            })
            .collect();
        Theta::new(m, cov.delta(), 0.5, vec![1.0; k], links, activ).unwrap()
    }

    #[test]
    fn identity_link_applies_bracket_weight() {
        let g = torus(16);
        let f = mode_field(&g, 2, 3).add(&mode_field(&g, 1, -4).scaled(0.3)).unwrap();
        let src = fourier(&f);
        let out = propagate_unit(&src, &open_link(0, 1, 2.0)).unwrap();
        for (flat, (&o, &s)) in out.values().iter().zip(src.values()).enumerate() {
            let multi = g.flat_to_multi(flat);
            if (0..2).any(|a| !pairable(g.signed_mode(a, multi[a]), 16)) {
                assert_eq!(o, Complex64::new(0.0, 0.0));
                continue;
            }
            let zeta = g.zeta(flat);
            let z2 = zeta[0] * zeta[0] + zeta[1] * zeta[1];
            let want = s * (2.0 / (1.0 + z2).sqrt());
            assert!((o - want).norm() <= 1e-12 * (1.0 + s.norm()));
        }
    }

    #[test]
    fn masked_link_contributes_nothing() {
        let g = torus(16);
        let src = fourier(&mode_field(&g, 1, 2));
        let out = propagate_unit(&src, &CanonicalLink::identity(0, 1, 1)).unwrap();
        assert_eq!(out.l2_norm(), 0.0);
    }

    #[test]
    fn doubling_map_pulls_from_doubled_modes() {
        let g = torus(32);
        // source holds only the mode (2, 4); the doubling map reads it at (1, 2)
        let src = fourier(&mode_field(&g, 2, 4));
        let peak = src.values()[g.multi_to_flat(&[2, 4])].re;
        assert!(peak > 1.0);
        let mut link = open_link(0, 1, 1.0);
        link.s = vec![2.0, 0.0, 0.0, 2.0];
        let out = propagate_unit(&src, &link).unwrap();
        let h = g.freq_spacing(0);
        for (flat, &o) in out.values().iter().enumerate() {
            let zeta = g.zeta(flat);
            let kt = (zeta[0] / h).round() as i64;
            let kx = (zeta[1] / h).round() as i64;
            if (kt, kx) == (1, 2) || (kt, kx) == (-1, -2) {
                let z2 = zeta[0] * zeta[0] + zeta[1] * zeta[1];
                let want = peak / (1.0 + z2).sqrt();
                assert!((o.re - want).abs() <= 1e-10 && o.im.abs() <= 1e-10);
            } else {
                assert!(o.norm() <= 1e-10 * peak, "leak at ({kt}, {kx})");
            }
        }
    }

    #[test]
    fn contraction_past_nyquist_reads_zero() {
        let g = torus(16);
        // halving map reads source at zeta/2 ... doubling map reads at 2 zeta,
        // which exceeds the lattice for most cells; a pure Nyquist-adjacent
        // mode must not alias back in.
        let src = fourier(&mode_field(&g, 7, 7));
        let mut link = open_link(0, 1, 1.0);
        link.s = vec![2.0, 0.0, 0.0, 2.0];
        let out = propagate_unit(&src, &link).unwrap();
        assert!(out.l2_norm() <= 1e-12);
    }

    #[test]
    fn fractional_map_keeps_synthesis_real() {
        let g = torus(16);
        let src = fourier(&mode_field(&g, 3, 2).add(&mode_field(&g, 2, -5).scaled(0.7)).unwrap());
        let mut link = open_link(0, 1, 1.3);
        link.s = vec![1.0, 0.3, -0.2, 1.1];
        let out = propagate_unit(&src, &link).unwrap();
        let back = inverse_fourier(&out).unwrap();
        assert!(back.l2_norm() > 0.0);
    }

    #[test]
    fn glancing_link_is_rejected() {
        let g = torus(16);
        let src = fourier(&mode_field(&g, 1, 1));
        let mut link = open_link(0, 1, 1.0);
        link.s = vec![1.0, 1.0, 1.0, 1.0];
        assert!(matches!(
            propagate_unit(&src, &link),
            Err(Error::GlancingConfiguration { .. })
        ));
    }

    #[test]
    fn diagonal_unit_inverts_where_open() {
        let g = torus(32);
        let src = fourier(&Field::from_fn(&g, |z| {
            (z[0].sin() + (3.0 * z[1]).cos()) * (0.5 + 0.1 * (2.0 * z[0]).cos())
        }));
        let c = 0.8;
        let dg = 0.6;
        let out = diagonal_unit(&src, c, dg).unwrap();
        for (flat, (&o, &s)) in out.values().iter().zip(src.values()).enumerate() {
            let zeta = g.zeta(flat);
            let symbol = c * c * zeta[1] * zeta[1] - zeta[0] * zeta[0];
            let gamma = smooth_step(symbol.abs() / dg - 1.0);
            if gamma == 0.0 {
                assert_eq!(o, Complex64::new(0.0, 0.0));
            } else {
                // symbol * output recovers gamma * source exactly
                assert!((o * symbol - s * gamma).norm() <= 1e-12 * (1.0 + s.norm()));
            }
        }
    }

    #[test]
    fn activation_output_scales_quadratically() {
        let g = torus(32);
        let ker = ParaKernel::new(&g);
        let params = ParaNetParams::new(vec![(1.0, 0.0)]).unwrap();
        let u = Field::from_fn(&g, |z| 0.02 * (z[0].sin() + (2.0 * z[1]).cos()));
        let h = fourier(&u);
        let once = activation_unit(&h, &params, &ker).unwrap();
        let twice = activation_unit(&h.scaled(2.0), &params, &ker).unwrap();
        let quad = once.scaled(4.0);
        let rel = twice.sub(&quad).unwrap().l2_norm() / quad.l2_norm();
        assert!(rel <= 0.1, "quadratic scaling defect {rel}");
    }

    #[test]
    fn assembled_layer_is_linear_in_activations() {
        let g = torus(32);
        let region = Region { lo: vec![1.0, 1.0], hi: vec![3.0, 3.0] };
        let cov = build_covering(&g, &region, 1.7).unwrap();
        let theta = plain_theta(&cov, 1, vec![]);
        let f = Field::from_fn(&g, |z| (z[0] - 2.0).sin() * (z[1] - 1.5).cos());
        let prev = localize(&f, &cov).unwrap();
        let v: Vec<SpectralField> = (0..cov.k())
            .map(|i| fourier(&mode_field(&g, 1 + (i % 3) as i64, 2)))
            .collect();
        let w: Vec<SpectralField> = (0..cov.k())
            .map(|i| fourier(&mode_field(&g, 2, -1 - (i % 2) as i64)).scaled(0.6))
            .collect();
        let both: Vec<SpectralField> =
            v.iter().zip(&w).map(|(a, b)| a.add(b).unwrap()).collect();
        let l_v = assemble_layer(&prev, &v, &theta).unwrap();
        let l_w = assemble_layer(&prev, &w, &theta).unwrap();
        let l_b = assemble_layer(&prev, &both, &theta).unwrap();
        for i in 0..cov.k() {
            // prev - U(v+w) vs (prev - Uv) + (prev - Uw) - prev
            let want = l_v.units[i]
                .add(&l_w.units[i])
                .unwrap()
                .sub(&prev.units[i])
                .unwrap();
            let err = l_b.units[i].sub(&want).unwrap().l2_norm();
            assert!(err <= 1e-12 * (1.0 + want.l2_norm()), "patch {i}: {err}");
        }
        assert_eq!(l_v.layer, 1);
    }

    #[test]
    fn depth_one_forward_is_linear_in_the_source() {
        let g = torus(32);
        let region = Region { lo: vec![1.0, 1.0], hi: vec![3.5, 3.5] };
        let cov = build_covering(&g, &region, 1.6).unwrap();
        let theta = plain_theta(&cov, 1, vec![]);
        let f = Field::from_fn(&g, |z| (2.0 * z[0]).sin() + 0.4 * z[1].cos());
        let gfield = Field::from_fn(&g, |z| (z[0] + 0.3 * z[1]).cos());
        let combo = f.scaled(1.7).add(&gfield.scaled(-0.6)).unwrap();
        let out_f = forward(&f, &theta, &cov, 1).unwrap();
        let out_g = forward(&gfield, &theta, &cov, 1).unwrap();
        let out_c = forward(&combo, &theta, &cov, 1).unwrap();
        for i in 0..cov.k() {
            let want = out_f.units[i].scaled(1.7).add(&out_g.units[i].scaled(-0.6)).unwrap();
            let err = out_c.units[i].sub(&want).unwrap().l2_norm();
            assert!(err <= 1e-12 * (1.0 + want.l2_norm()));
        }
        assert_eq!(out_c.layer, 1);
    }

    #[test]
    fn forward_depth_is_validated() {
        let g = torus(16);
        let region = Region { lo: vec![2.0, 2.0], hi: vec![2.5, 2.5] };
        let cov = build_covering(&g, &region, 2.0).unwrap();
        let theta = plain_theta(&cov, 1, vec![]);
        assert!(matches!(
            forward(&Field::zeros(&g), &theta, &cov, 2),
            Err(Error::NetworkValidation(_))
        ));
        assert!(matches!(
            forward(&Field::zeros(&g), &theta, &cov, 0),
            Err(Error::NetworkValidation(_))
        ));
    }

    #[test]
    fn late_source_leaves_early_patches_silent() {
        let g = torus(16);
        let cov = build_covering(&g, &Region::full(&g), 2.2).unwrap();
        let k = cov.k();
        // honest causal masks: flow only to patches strictly later in time
        let mut links = Vec::new();
        for i in 0..k {
            for j in 0..k {
                if i == j {
                    continue;
                }
                let dt = cov.patch(i).center[0] - cov.patch(j).center[0];
                let mut l = open_link(i, j, 0.7);
                l.causal = dt > 0.0;
                if !l.causal {
                    l.c_amp = 0.0;
                }
                links.push(l);
            }
        }
        let theta =
            Theta::new(1, cov.delta(), 0.4, vec![1.0; k], links, vec![vec![]; k]).unwrap();
        // pulse confined to (4.5, 5.5) so no bump reaches it across the
        // time wrap either
        let t0 = 4.5;
        let f = Field::from_fn(&g, |z| {
            if z[0] > t0 && z[0] < 5.5 {
                ((z[0] - 5.0) * 2.0).sin() * (3.0 * z[1]).cos()
            } else {
                0.0
            }
        });
        let state = forward(&f, &theta, &cov, 1).unwrap();
        for i in 0..k {
            if cov.patch(i).center[0] + cov.delta() < t0 {
                assert_eq!(state.units[i].l2_norm(), 0.0, "early patch {i} lit up");
            }
        }
    }

    #[test]
    fn cost_needs_observations_and_ignores_the_rest() {
        let g = torus(32);
        let region = Region { lo: vec![1.0, 1.0], hi: vec![3.0, 3.0] };
        let cov = build_covering(&g, &region, 1.7).unwrap();
        let theta = plain_theta(&cov, 1, vec![]);
        let f = Field::from_fn(&g, |z| (z[0] * 2.0).cos() * z[1].sin());
        let truth = Field::from_fn(&g, |z| 0.3 * (z[0] + z[1]).sin());
        let state = forward(&f, &theta, &cov, 1).unwrap();
        let w = FrequencyWeight::new(1.0, 0.0);
        assert!(matches!(
            cost(&state, &truth, &cov, &w, &[]),
            Err(Error::EmptyObservedSet)
        ));
        let observed = vec![0, 1];
        let base = cost(&state, &truth, &cov, &w, &observed).unwrap();
        // independent per-patch accumulation
        let mut manual = 0.0;
        for &i in &observed {
            let target = fourier(&truth.mul_pointwise(cov.bump(i)).unwrap());
            let n = weighted_norm(&target.sub(&state.units[i]).unwrap(), &w).unwrap();
            manual += n * n;
        }
        assert!((base - manual).abs() <= 1e-12 * (1.0 + manual));
        // wreck an unobserved unit: the cost must not move
        let mut tampered = state.clone();
        let last = cov.k() - 1;
        tampered.units[last] = tampered.units[last].scaled(5.0);
        let after = cost(&tampered, &truth, &cov, &w, &observed).unwrap();
        assert_eq!(base, after);
    }
}

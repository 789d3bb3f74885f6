//! Ray geometry for the variable-speed wave symbol: Hamilton flow on the
//! characteristic set, the time-slice canonical map and its patch-to-patch
//! linearization, and scalar amplitude transport along rays.

use crate::error::{Error, Result};
use crate::grid::Coord;
use crate::solver::WaveSpeed;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Fraction of a grid cell a single integration step may traverse.
const STEP_FRACTION: f64 = 0.02;

/// Relative drift budget for the conserved symbol along a flow.
const DRIFT_TOL: f64 = 1e-8;

/// Point (z, zeta) in phase space: z = (t, x), zeta = (tau, xi). Only the
/// leading 1+d entries of each array are meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub z: Coord,
    pub zeta: Coord,
}

impl PhasePoint {
    pub fn new(z: Coord, zeta: Coord) -> Self {
        PhasePoint { z, zeta }
    }
}

/// Sampled integral curve of the Hamilton field with a complex amplitude
/// slot per sample.
#[derive(Debug, Clone)]
pub struct Bicharacteristic {
    pub samples: Vec<(f64, PhasePoint, Complex64)>,
    pub hamiltonian_drift: f64,
}

/// Space-time patch: a ball in the grid's coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Patch {
    pub center: Coord,
    pub radius: f64,
}

/// Linearized covector map between two patches plus the transported
/// amplitude. Masked (identity map, zero amplitude) when no forward ray
/// connects them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinkWire", into = "LinkWire")]
pub struct CanonicalLink {
    pub i: usize,
    pub j: usize,
    /// row-major (1+d) x (1+d)
    pub s: Vec<f64>,
    pub dim: usize,
    pub c_amp: f64,
    pub causal: bool,
}

/// On-disk shape of a link row; the matrix dimension is implied by S.
#[derive(Serialize, Deserialize)]
struct LinkWire {
    i: usize,
    j: usize,
    #[serde(rename = "S")]
    s: Vec<f64>,
    c: f64,
    causal: bool,
}

impl From<CanonicalLink> for LinkWire {
    fn from(l: CanonicalLink) -> LinkWire {
        LinkWire { i: l.i, j: l.j, s: l.s, c: l.c_amp, causal: l.causal }
    }
}

impl TryFrom<LinkWire> for CanonicalLink {
    type Error = String;

    fn try_from(w: LinkWire) -> std::result::Result<CanonicalLink, String> {
        let n = (w.s.len() as f64).sqrt().round() as usize;
        if n * n != w.s.len() || !(2..=3).contains(&n) {
            return Err(format!("link matrix has {} entries, want 4 or 9", w.s.len()));
        }
        Ok(CanonicalLink { i: w.i, j: w.j, s: w.s, dim: n - 1, c_amp: w.c, causal: w.causal })
    }
}

impl CanonicalLink {
    pub fn identity(i: usize, j: usize, dim: usize) -> Self {
        let n = dim + 1;
        let mut s = vec![0.0; n * n];
        for k in 0..n {
            s[k * n + k] = 1.0;
        }
        CanonicalLink { i, j, s, dim, c_amp: 0.0, causal: false }
    }

    pub fn apply(&self, zeta: &[f64]) -> Vec<f64> {
        let n = self.dim + 1;
        (0..n)
            .map(|r| (0..n).map(|c| self.s[r * n + c] * zeta[c]).sum())
            .collect()
    }

    pub fn det(&self) -> f64 {
        let n = self.dim + 1;
        match n {
            2 => self.s[0] * self.s[3] - self.s[1] * self.s[2],
            3 => {
                let m = &self.s;
                m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                    + m[2] * (m[3] * m[7] - m[4] * m[6])
            }
            _ => unreachable!("dim is 1 or 2"),
        }
    }
}

fn zeta_norm(zeta: &Coord, n: usize) -> f64 {
    zeta[..n].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Principal symbol tau^2 - c(x)^2 |xi|^2 with the interpolated speed.
pub fn hamiltonian_eval(p: &PhasePoint, c: &WaveSpeed) -> f64 {
    let d = c.grid().dim();
    let c2 = c.c2_smooth(&p.z[1..=d]);
    let xi2: f64 = p.zeta[1..=d].iter().map(|v| v * v).sum();
    p.zeta[0] * p.zeta[0] - c2 * xi2
}

/// Positive-definite scale for relative drift comparisons.
fn hamiltonian_scale(p: &PhasePoint, c: &WaveSpeed) -> f64 {
    let d = c.grid().dim();
    let c2 = c.c2_smooth(&p.z[1..=d]);
    let xi2: f64 = p.zeta[1..=d].iter().map(|v| v * v).sum();
    p.zeta[0] * p.zeta[0] + c2 * xi2
}

/// Hamilton vector field of the symbol: dz/ds = dP/dzeta, dzeta/ds = -dP/dz.
fn hamilton_rhs(p: &PhasePoint, c: &WaveSpeed, grad: &mut [f64]) -> (Coord, Coord) {
    let d = c.grid().dim();
    let c2 = c.c2_smooth(&p.z[1..=d]);
    c.grad_c2_smooth(&p.z[1..=d], grad);
    let xi2: f64 = p.zeta[1..=d].iter().map(|v| v * v).sum();
    let mut dz = [0.0; 3];
    let mut dzeta = [0.0; 3];
    dz[0] = 2.0 * p.zeta[0];
    for k in 1..=d {
        dz[k] = -2.0 * c2 * p.zeta[k];
        dzeta[k] = grad[k - 1] * xi2;
    }
    (dz, dzeta)
}

fn rk4_step(p: &PhasePoint, c: &WaveSpeed, h: f64, grad: &mut [f64]) -> PhasePoint {
    let add = |p: &PhasePoint, k: &(Coord, Coord), w: f64| {
        let mut q = *p;
        for a in 0..3 {
            q.z[a] += w * k.0[a];
            q.zeta[a] += w * k.1[a];
        }
        q
    };
    let k1 = hamilton_rhs(p, c, grad);
    let k2 = hamilton_rhs(&add(p, &k1, 0.5 * h), c, grad);
    let k3 = hamilton_rhs(&add(p, &k2, 0.5 * h), c, grad);
    let k4 = hamilton_rhs(&add(p, &k3, h), c, grad);
    let mut q = *p;
    for a in 0..3 {
        q.z[a] += h / 6.0 * (k1.0[a] + 2.0 * k2.0[a] + 2.0 * k3.0[a] + k4.0[a]);
        q.zeta[a] += h / 6.0 * (k1.1[a] + 2.0 * k2.1[a] + 2.0 * k3.1[a] + k4.1[a]);
    }
    q
}

/// Integrate the Hamilton system without the characteristic-set gate;
/// the symbol value is conserved whatever it is.
fn flow_raw(start: &PhasePoint, c: &WaveSpeed, s_end: f64, ds: f64) -> Result<Bicharacteristic> {
    let d = c.grid().dim();
    if !(ds > 0.0) || !ds.is_finite() {
        return Err(Error::SpeedValidation("step must be positive".into()));
    }
    let n_steps = ((s_end.abs() / ds).ceil() as usize).max(1);
    let h = s_end / n_steps as f64;
    let scale = hamiltonian_scale(start, c).max(1e-300);
    let h0 = hamiltonian_eval(start, c);

    let mut grad = vec![0.0; d];
    let mut samples = Vec::with_capacity(n_steps + 1);
    samples.push((0.0, *start, Complex64::new(1.0, 0.0)));
    let mut p = *start;
    let mut drift = 0.0f64;
    for k in 1..=n_steps {
        p = rk4_step(&p, c, h, &mut grad);
        drift = drift.max((hamiltonian_eval(&p, c) - h0).abs());
        samples.push((k as f64 * h, p, Complex64::new(1.0, 0.0)));
    }
    if drift > DRIFT_TOL * scale {
        let suggested = 0.9 * ds * (DRIFT_TOL * scale / drift).powf(0.25);
        return Err(Error::StepTooLarge { drift, suggested_ds: suggested });
    }
    Ok(Bicharacteristic { samples, hamiltonian_drift: drift })
}

/// Null bicharacteristic from a start point on the characteristic set.
/// Starts within relative tolerance 1e-6 of the set are projected onto it
/// by rescaling tau; anything farther is rejected.
pub fn flow(start: &PhasePoint, c: &WaveSpeed, s_end: f64, ds: f64) -> Result<Bicharacteristic> {
    let d = c.grid().dim();
    if zeta_norm(&start.zeta, d + 1) == 0.0 {
        return Err(Error::OffCharacteristicSet { defect: 1.0 });
    }
    let scale = hamiltonian_scale(start, c);
    let defect = hamiltonian_eval(start, c).abs() / scale;
    if defect > 1e-6 {
        return Err(Error::OffCharacteristicSet { defect });
    }
    let mut p = *start;
    // project: set |tau| = c(x)|xi|, keeping the sign of tau
    let c2 = c.c2_smooth(&p.z[1..=d]);
    let xi2: f64 = p.zeta[1..=d].iter().map(|v| v * v).sum();
    let tau_mag = (c2 * xi2).sqrt();
    p.zeta[0] = if p.zeta[0] < 0.0 { -tau_mag } else { tau_mag };
    flow_raw(&p, c, s_end, ds)
}

fn auto_step(start: &PhasePoint, c: &WaveSpeed) -> f64 {
    let d = c.grid().dim();
    let c2max = c.c_max() * c.c_max();
    let xi = zeta_norm(&[0.0, start.zeta[1], start.zeta[2]], 3).max(
        start.zeta[1..=d].iter().map(|v| v.abs()).fold(0.0, f64::max),
    );
    let speed = 2.0 * (start.zeta[0].abs().max(c2max * xi)).max(1e-12);
    STEP_FRACTION * c.grid().min_dx() / speed
}

/// Follow the null flow to the first crossing of the target time slice.
/// The time coordinate moves linearly in the flow parameter (tau is
/// conserved), so the secant step on the bracketing interval is exact.
pub fn canonical_map(start: &PhasePoint, c: &WaveSpeed, target_time: f64) -> Result<PhasePoint> {
    canonical_map_with_step(start, c, target_time, auto_step(start, c))
}

pub fn canonical_map_with_step(
    start: &PhasePoint,
    c: &WaveSpeed,
    target_time: f64,
    ds: f64,
) -> Result<PhasePoint> {
    map_to_slice(start, c, target_time, ds, true)
}

/// Same crossing but without the on-set gate; used where the covector is
/// deliberately perturbed off the characteristic set.
fn map_to_slice_raw(
    start: &PhasePoint,
    c: &WaveSpeed,
    target_time: f64,
    ds: f64,
) -> Result<PhasePoint> {
    map_to_slice(start, c, target_time, ds, false)
}

fn map_to_slice(
    start: &PhasePoint,
    c: &WaveSpeed,
    target_time: f64,
    ds: f64,
    gate: bool,
) -> Result<PhasePoint> {
    let dt = target_time - start.z[0];
    if dt == 0.0 {
        return Ok(*start);
    }
    let tau = start.zeta[0];
    if tau == 0.0 {
        return Err(Error::TargetSliceNotReached { target: target_time });
    }
    // t(s) = t0 + 2 tau s exactly, so the crossing parameter is known
    let s_cross = dt / (2.0 * tau);
    let run = |s_end: f64| {
        if gate {
            flow(start, c, s_end, ds)
        } else {
            flow_raw(start, c, s_end, ds)
        }
    };
    // integrate just past the slice, then secant-correct the last interval
    let curve = run(1.0001 * s_cross)?;
    let cross = curve
        .samples
        .windows(2)
        .find(|w| {
            let (ta, tb) = (w[0].1.z[0], w[1].1.z[0]);
            (ta - target_time) * (tb - target_time) <= 0.0
        })
        .map(|w| (w[0].0, w[0].1, w[1].0, w[1].1));
    let (s_a, p_a, s_b, p_b) = match cross {
        Some(v) => v,
        None => return Err(Error::TargetSliceNotReached { target: target_time }),
    };
    let t_a = p_a.z[0];
    let t_b = p_b.z[0];
    let s_star = if t_b == t_a {
        s_a
    } else {
        s_a + (target_time - t_a) * (s_b - s_a) / (t_b - t_a)
    };
    if s_star == s_a {
        return Ok(p_a);
    }
    let tail = flow_raw(&p_a, c, s_star - s_a, ds)?;
    Ok(tail.samples.last().expect("nonempty").1)
}

/// Subprincipal symbol: -(1/2i) sum_j d^2 P / dx_j dxi_j, purely imaginary
/// for real data.
pub fn subprincipal_eval(p: &PhasePoint, c: &WaveSpeed) -> Complex64 {
    let d = c.grid().dim();
    let mut grad = vec![0.0; d];
    c.grad_c2_smooth(&p.z[1..=d], &mut grad);
    let dot: f64 = grad.iter().zip(&p.zeta[1..=d]).map(|(g, xi)| g * xi).sum();
    // -(1/2i)(-2 dot) = dot / i = -i dot
    Complex64::new(0.0, -dot)
}

/// Amplitude transport along a sampled curve: d sigma / ds = i P_sub sigma,
/// integrated by exponentiating a cumulative 4th-order quadrature of the
/// multiplier over the uniform samples.
pub fn transport_symbol(
    curve: &Bicharacteristic,
    c: &WaveSpeed,
    init: Complex64,
) -> Result<Bicharacteristic> {
    if init.norm() == 0.0 {
        return Err(Error::NetworkValidation(
            "transport needs a nonzero initial amplitude".into(),
        ));
    }
    let n = curve.samples.len();
    let mut out = curve.clone();
    if n == 0 {
        return Ok(out);
    }
    let mult: Vec<Complex64> = curve
        .samples
        .iter()
        .map(|(_, p, _)| Complex64::new(0.0, 1.0) * subprincipal_eval(p, c))
        .collect();
    // cumulative integral of the multiplier; 3-point end-corrected rule,
    // locally O(h^4) on the uniform parameter grid
    let mut integral = vec![Complex64::default(); n];
    for k in 0..n - 1 {
        let h = curve.samples[k + 1].0 - curve.samples[k].0;
        let inc = if k + 2 < n {
            (mult[k] * 5.0 + mult[k + 1] * 8.0 - mult[k + 2]) * (h / 12.0)
        } else if k >= 1 {
            (-mult[k - 1] + mult[k] * 8.0 + mult[k + 1] * 5.0) * (h / 12.0)
        } else {
            (mult[k] + mult[k + 1]) * (h / 2.0)
        };
        integral[k + 1] = integral[k] + inc;
    }
    for (k, s) in out.samples.iter_mut().enumerate() {
        s.2 = init * integral[k].exp();
    }
    Ok(out)
}

/// Linearized covector transfer from patch j to patch i across their time
/// separation, with the transported amplitude. Pairs that are not linked by
/// a forward null ray landing near the target center are masked.
pub fn linearize_canonical(
    i: usize,
    patch_i: &Patch,
    j: usize,
    patch_j: &Patch,
    c: &WaveSpeed,
) -> Result<CanonicalLink> {
    let grid = c.grid();
    let d = grid.dim();
    let n = d + 1;
    let masked = CanonicalLink::identity(i, j, d);

    let dt = patch_i.center[0] - patch_j.center[0];
    if dt <= 0.0 {
        return Ok(masked);
    }
    // discrete cone: one lattice cell per time step, padded by one cell
    let rate = grid.min_dx() / grid.dt();
    let mut dx = [0.0; 3];
    let mut dist2 = 0.0;
    for k in 1..=d {
        // shortest periodic displacement
        let raw = patch_i.center[k] - patch_j.center[k];
        let l = grid.extent(k);
        let wrapped = raw - (raw / l).round() * l;
        dx[k] = wrapped;
        dist2 += wrapped * wrapped;
    }
    let dist = dist2.sqrt();
    if dist > rate * dt + grid.min_dx() {
        return Ok(masked);
    }

    // reference null covector: ray from z_j toward z_i, time-positive
    let x_j = &patch_j.center[1..=d];
    let c_j = c.c2_smooth(x_j).sqrt();
    let mut zeta_ref = [0.0; 3];
    zeta_ref[0] = 1.0;
    if dist > 1e-12 {
        for k in 1..=d {
            zeta_ref[k] = -dx[k] / dist / c_j;
        }
    } else {
        zeta_ref[1] = -1.0 / c_j;
    }
    let start = PhasePoint::new(patch_j.center, zeta_ref);
    let ds = auto_step(&start, c);
    let target = patch_i.center[0];

    let landed = match map_to_slice_raw(&start, c, target, ds) {
        Ok(p) => p,
        Err(Error::TargetSliceNotReached { .. }) => return Ok(masked),
        Err(e) => return Err(e),
    };
    let mut miss2 = 0.0;
    for k in 1..=d {
        let raw = landed.z[k] - patch_i.center[k];
        let l = grid.extent(k);
        let wrapped = raw - (raw / l).round() * l;
        miss2 += wrapped * wrapped;
    }
    if miss2.sqrt() > patch_i.radius + patch_j.radius + grid.min_dx() {
        return Ok(masked);
    }

    // central differences of the covector transfer around zeta_ref
    let h = 1e-4 * zeta_norm(&zeta_ref, n);
    let mut s = vec![0.0; n * n];
    for col in 0..n {
        let mut plus = start;
        plus.zeta[col] += h;
        let mut minus = start;
        minus.zeta[col] -= h;
        let zp = map_to_slice_raw(&plus, c, target, ds)?;
        let zm = map_to_slice_raw(&minus, c, target, ds)?;
        for row in 0..n {
            s[row * n + col] = (zp.zeta[row] - zm.zeta[row]) / (2.0 * h);
        }
    }
    let mut link = CanonicalLink { i, j, s, dim: d, c_amp: 0.0, causal: true };
    let det = link.det();
    if det.abs() <= 1e-9 {
        return Err(Error::GlancingConfiguration { det });
    }

    // amplitude: transport along the connecting ray
    let s_cross = dt / (2.0 * zeta_ref[0]);
    let curve = flow_raw(&start, c, s_cross, ds)?;
    let transported = transport_symbol(&curve, c, Complex64::new(1.0, 0.0))?;
    link.c_amp = transported.samples.last().expect("nonempty").2.re;
    Ok(link)
}

fn nearest_flat(grid: &crate::grid::Grid, z: &Coord) -> usize {
    let mut idx = [0usize; 3];
    for a in 0..grid.axes() {
        let n = grid.count(a) as i64;
        idx[a] = ((z[a] / grid.spacing(a)).round() as i64).rem_euclid(n) as usize;
    }
    grid.multi_to_flat(&idx[..grid.axes()])
}

/// Oracle initializer for the patch network: diagonal speeds read from the
/// guess at patch centers, links linearized along center-to-center rays,
/// and every activation chain built from the guess nonlinearity's Taylor
/// coefficients at the patch center. The depth m and the cone-cut width
/// gamma_delta fill the parameter fields the geometry does not determine.
pub fn init_theta(
    cov: &crate::network::Covering,
    c_guess: &WaveSpeed,
    f_guess: &crate::nonlinear::Nonlinearity,
    m: usize,
    gamma_delta: f64,
) -> Result<crate::network::Theta> {
    let grid = cov.grid();
    if c_guess.grid() != grid || f_guess.grid() != grid {
        return Err(Error::GridMismatch("guesses live on a different grid".into()));
    }
    let degree = match f_guess.degree() {
        Some(n) => n,
        None => {
            return Err(Error::Unsupported(
                "initialization needs polynomial Taylor data".into(),
            ))
        }
    };
    let k = cov.k();
    let d = grid.dim();

    let c_diag: Vec<f64> = (0..k)
        .map(|i| {
            let z = cov.patch(i).center;
            c_guess.c2_smooth(&z[1..=d]).sqrt()
        })
        .collect();

    let index_pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let links = index_pairs
        .par_iter()
        .map(|&(i, j)| linearize_canonical(i, cov.patch(i), j, cov.patch(j), c_guess))
        .collect::<Result<Vec<_>>>()?;

    let activ = (0..k)
        .map(|i| {
            if m < 2 {
                return Ok(Vec::new());
            }
            let flat = nearest_flat(grid, &cov.patch(i).center);
            let taylor: Vec<f64> = (2..=degree)
                .map(|p| f_guess.coeff(p).expect("validated degree").values()[flat])
                .collect();
            let chain = crate::paraproduct::horner_params(&taylor)?;
            Ok(vec![chain; m - 1])
        })
        .collect::<Result<Vec<_>>>()?;

    crate::network::Theta::new(m, cov.delta(), gamma_delta, c_diag, links, activ)
}

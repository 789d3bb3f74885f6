//! Polynomial (and general smooth) nonlinearities, Picard iteration for
//! P u + F(t,x,u) = f, and extraction of the mixed-parameter interaction
//! terms by sign-hypercube finite differences with a closed-form oracle.

use crate::error::{Error, Result};
use crate::grid::{Coord, Field, Grid};
use crate::solver::{solve_causal, WaveSpeed};
use rayon::prelude::*;
use std::sync::Arc;

type Closure = Arc<dyn Fn(Coord, f64) -> f64 + Send + Sync>;

/// F(t,x,u) with F(.,0) = 0 and vanishing u-derivative at 0: either a
/// polynomial sum a_k(t,x) u^k for k = 2..N, or a smooth closure obeying the
/// same normalization.
#[derive(Clone)]
pub struct Nonlinearity {
    grid: Grid,
    coeffs: Vec<Field>,
    closure: Option<Closure>,
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("degree", &self.degree())
            .field("closure", &self.closure.is_some())
            .finish()
    }
}

impl Nonlinearity {
    /// Coefficient fields a_2..a_N in that order.
    pub fn polynomial(grid: &Grid, coeffs: Vec<Field>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::NonlinearityValidation(
                "need at least the quadratic coefficient (degree >= 2)".into(),
            ));
        }
        for (i, a) in coeffs.iter().enumerate() {
            if a.grid() != grid {
                return Err(Error::GridMismatch(format!(
                    "coefficient a_{} lives on a different grid",
                    i + 2
                )));
            }
            if !a.values().iter().all(|v| v.is_finite()) {
                return Err(Error::NonlinearityValidation(format!(
                    "coefficient a_{} has non-finite samples",
                    i + 2
                )));
            }
        }
        Ok(Nonlinearity { grid: grid.clone(), coeffs, closure: None })
    }

    /// Spatially constant coefficients [a_2, .., a_N].
    pub fn constant_coeffs(grid: &Grid, consts: &[f64]) -> Result<Self> {
        let coeffs = consts
            .iter()
            .map(|&a| Field::from_fn(grid, move |_| a))
            .collect();
        Self::polynomial(grid, coeffs)
    }

    /// General smooth F. Spot-checks the normalization F(z,0) = 0,
    /// dF/du(z,0) = 0 on a stride of lattice points.
    pub fn from_closure(
        grid: &Grid,
        f: impl Fn(Coord, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let stride = (grid.len() / 64).max(1);
        let h = 1e-6;
        for flat in (0..grid.len()).step_by(stride) {
            let z = grid.point(flat);
            let at0 = f(z, 0.0);
            if at0.abs() > 1e-12 {
                return Err(Error::NonlinearityValidation(format!(
                    "F(z, 0) = {at0} at z = {z:?}; must vanish"
                )));
            }
            let d0 = (f(z, h) - f(z, -h)) / (2.0 * h);
            if d0.abs() > 1e-5 {
                return Err(Error::NonlinearityValidation(format!(
                    "dF/du(z, 0) = {d0} at z = {z:?}; must vanish"
                )));
            }
        }
        Ok(Nonlinearity { grid: grid.clone(), coeffs: Vec::new(), closure: Some(Arc::new(f)) })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_polynomial(&self) -> bool {
        self.closure.is_none()
    }

    /// Polynomial degree N; None for closure form.
    pub fn degree(&self) -> Option<usize> {
        if self.is_polynomial() {
            Some(self.coeffs.len() + 1)
        } else {
            None
        }
    }

    /// Coefficient field of u^k.
    pub fn coeff(&self, k: usize) -> Option<&Field> {
        if k < 2 {
            return None;
        }
        self.coeffs.get(k - 2)
    }
}

/// Pointwise F(t,x,u) via Horner in u. Errors if any output is non-finite.
pub fn eval_nonlinearity(nl: &Nonlinearity, u: &Field) -> Result<Field> {
    if u.grid() != &nl.grid {
        return Err(Error::GridMismatch("field and nonlinearity grids differ".into()));
    }
    let mut out = Field::zeros(&nl.grid);
    if let Some(cl) = &nl.closure {
        let grid = nl.grid.clone();
        for (i, dst) in out.values_mut().iter_mut().enumerate() {
            *dst = cl(grid.point(i), u.values()[i]);
        }
    } else {
        let n = nl.coeffs.len();
        for (i, dst) in out.values_mut().iter_mut().enumerate() {
            let ui = u.values()[i];
            let mut acc = nl.coeffs[n - 1].values()[i];
            for k in (0..n - 1).rev() {
                acc = acc * ui + nl.coeffs[k].values()[i];
            }
            *dst = acc * ui * ui;
        }
    }
    if !out.values().iter().all(|v| v.is_finite()) {
        return Err(Error::BlowUp { degree: nl.coeffs.len() + 1 });
    }
    Ok(out)
}

/// Picard iterates for u = Q f - Q F(u), starting from u^(0) = 0.
#[derive(Debug, Clone)]
pub struct IterationTrace {
    /// u^(0), u^(1), ... in order; u^(0) is the zero field.
    pub iterates: Vec<Field>,
    /// norms[k] = H1-proxy norm of u^(k+1) - u^(k).
    pub norms: Vec<f64>,
}

impl IterationTrace {
    /// Converged reference solution: the last iterate, once the final
    /// successive difference is below 1e-10.
    pub fn u_ref(&self) -> Option<&Field> {
        match self.norms.last() {
            Some(&d) if d < 1e-10 => self.iterates.last(),
            _ => None,
        }
    }
}

/// Runs up to n_max Picard updates, stopping early once successive iterates
/// differ by less than 1e-10 in the H1 proxy norm. Fails if the updates are
/// not contracting by the third.
pub fn picard_iterate(
    f: &Field,
    c: &WaveSpeed,
    nl: &Nonlinearity,
    n_max: usize,
) -> Result<IterationTrace> {
    if n_max < 1 {
        return Err(Error::SourceValidation("n_max must be at least 1".into()));
    }
    let grid = f.grid().clone();
    let qf = solve_causal(f, c)?.0;
    let mut iterates = vec![Field::zeros(&grid)];
    let mut norms = Vec::new();
    let push = |iterates: &mut Vec<Field>, norms: &mut Vec<f64>, u: Field| {
        let d = u.sub(iterates.last().expect("nonempty")).expect("same grid");
        norms.push(d.h1_norm());
        iterates.push(u);
    };
    push(&mut iterates, &mut norms, qf.clone());
    for n in 2..=n_max {
        if norms.last().is_some_and(|&d| d < 1e-10) {
            break;
        }
        let fu = eval_nonlinearity(nl, iterates.last().expect("nonempty"))?;
        let correction = solve_causal(&fu, c)?.0;
        let u_next = qf.sub(&correction)?;
        push(&mut iterates, &mut norms, u_next);
        if n == 3 && norms[1] > 0.0 {
            let ratio = norms[2] / norms[1];
            if !(ratio < 1.0) {
                return Err(Error::OutsideSmallDataRegime { ratio });
            }
        }
    }
    Ok(IterationTrace { iterates, norms })
}

/// Up to four causal unit-norm source profiles with their amplitudes.
#[derive(Debug, Clone)]
pub struct MultiSource {
    parts: Vec<(Field, f64)>,
}

impl MultiSource {
    /// Normalizes every profile to unit H1-proxy norm, keeping amplitudes
    /// separate. Profiles must vanish on the first two time slices.
    pub fn new(parts: Vec<(Field, f64)>) -> Result<Self> {
        if parts.is_empty() || parts.len() > 4 {
            return Err(Error::SourceValidation(format!(
                "need 1 to 4 source parts, got {}",
                parts.len()
            )));
        }
        let mut normed = Vec::with_capacity(parts.len());
        for (i, (f, eps)) in parts.into_iter().enumerate() {
            for m in 0..2usize.min(f.grid().n_t()) {
                if f.time_slice(m).iter().any(|&v| v != 0.0) {
                    return Err(Error::NonCausalSource(format!(
                        "source part {i} is nonzero on time slice {m}"
                    )));
                }
            }
            let n = f.h1_norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::SourceValidation(format!(
                    "source part {i} has H1 norm {n}; need positive finite"
                )));
            }
            if !eps.is_finite() {
                return Err(Error::SourceValidation(format!(
                    "amplitude {i} is not finite"
                )));
            }
            normed.push((f.scaled(1.0 / n), eps));
        }
        Ok(MultiSource { parts: normed })
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn part(&self, i: usize) -> &(Field, f64) {
        &self.parts[i]
    }

    /// Sum of eps_i f_i over all parts.
    pub fn assemble(&self) -> Result<Field> {
        let mut acc = Field::zeros(self.parts[0].0.grid());
        for (f, eps) in &self.parts {
            acc = acc.add(&f.scaled(*eps))?;
        }
        Ok(acc)
    }

    fn assemble_scaled(&self, subset: &[usize], scales: &[f64]) -> Result<Field> {
        let mut acc = Field::zeros(self.parts[0].0.grid());
        for (&i, &s) in subset.iter().zip(scales) {
            acc = acc.add(&self.parts[i].0.scaled(s))?;
        }
        Ok(acc)
    }
}

/// Mixed derivative of the solution map at zero amplitude, taken over the
/// chosen parts by |subset|-dimensional central differences on the sign
/// hypercube with step h. Every nonlinear solve runs to 1e-10.
pub fn mixed_eps_derivative(
    sources: &MultiSource,
    c: &WaveSpeed,
    nl: &Nonlinearity,
    subset: &[usize],
    h: f64,
) -> Result<Field> {
    let mut order: Vec<usize> = subset.to_vec();
    order.sort_unstable();
    order.dedup();
    if order.len() != subset.len() || subset.len() < 2 || subset.len() > 4 {
        return Err(Error::SourceValidation(format!(
            "subset must hold 2 to 4 distinct part indices, got {subset:?}"
        )));
    }
    if order.last().copied().unwrap_or(0) >= sources.len() {
        return Err(Error::SourceValidation(format!(
            "subset {subset:?} indexes past the {} parts",
            sources.len()
        )));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::SourceValidation(format!("step h = {h} must be positive")));
    }
    let m = order.len();
    let solves: Vec<Result<Field>> = (0..1usize << m)
        .into_par_iter()
        .map(|bits| {
            let scales: Vec<f64> = (0..m)
                .map(|j| if bits >> j & 1 == 1 { h } else { -h })
                .collect();
            let f = sources.assemble_scaled(&order, &scales)?;
            let trace = picard_iterate(&f, c, nl, 60).map_err(|e| pattern_err(bits, m, e))?;
            trace
                .u_ref()
                .cloned()
                .ok_or_else(|| {
                    pattern_err(
                        bits,
                        m,
                        Error::SourceValidation(
                            "iteration did not reach 1e-10 within 60 updates".into(),
                        ),
                    )
                })
        })
        .collect();
    let mut acc = Field::zeros(sources.part(0).0.grid());
    for (bits, u) in solves.into_iter().enumerate() {
        let u = u?;
        let minus_count = (0..m).filter(|j| bits >> j & 1 == 0).count();
        let sign = if minus_count % 2 == 0 { 1.0 } else { -1.0 };
        acc = acc.add(&u.scaled(sign))?;
    }
    Ok(acc.scaled(1.0 / (2.0 * h).powi(m as i32)))
}

fn pattern_err(bits: usize, m: usize, e: Error) -> Error {
    let pattern: String = (0..m)
        .map(|j| if bits >> j & 1 == 1 { '+' } else { '-' })
        .collect();
    Error::SignPatternSolve { pattern, source: Box::new(e) }
}

/// Closed-form leading interaction of two or three unit sources:
/// pairs give -2 Q(a2 v_i v_j); triples add the cubic coefficient term and
/// the quadratic cascade through an inner solve. v_i = Q f_i.
pub fn interaction_oracle(
    f_list: &[Field],
    c: &WaveSpeed,
    nl: &Nonlinearity,
) -> Result<Field> {
    if !nl.is_polynomial() {
        return Err(Error::Unsupported(
            "closed-form interactions need polynomial coefficients".into(),
        ));
    }
    if f_list.len() < 2 || f_list.len() > 3 {
        return Err(Error::SourceValidation(format!(
            "interaction oracle takes 2 or 3 sources, got {}",
            f_list.len()
        )));
    }
    let a2 = nl.coeff(2).expect("polynomial degree >= 2").clone();
    let v: Vec<Field> = f_list
        .iter()
        .map(|f| solve_causal(f, c).map(|r| r.0))
        .collect::<Result<_>>()?;
    let q_a2 = |x: &Field, y: &Field| -> Result<Field> {
        let prod = a2.mul_pointwise(&x.mul_pointwise(y)?)?;
        Ok(solve_causal(&prod, c)?.0)
    };
    match v.len() {
        2 => Ok(q_a2(&v[0], &v[1])?.scaled(-2.0)),
        _ => {
            let mut acc = Field::zeros(v[0].grid());
            if let Some(a3) = nl.coeff(3) {
                let prod = a3.mul_pointwise(&v[0].mul_pointwise(&v[1])?.mul_pointwise(&v[2])?)?;
                acc = acc.add(&solve_causal(&prod, c)?.0.scaled(-6.0))?;
            }
            // Quadratic cascade: each leg pairs one wave with the inner
            // interaction of the other two. The inner (sum v)^2 supplies the
            // cross term twice and the outer 2uw product twice more.
            for leg in 0..3 {
                let (i, j, k) = match leg {
                    0 => (0, 1, 2),
                    1 => (1, 0, 2),
                    _ => (2, 0, 1),
                };
                let inner = q_a2(&v[j], &v[k])?;
                acc = acc.add(&q_a2(&v[i], &inner)?.scaled(4.0))?;
            }
            Ok(acc)
        }
    }
}

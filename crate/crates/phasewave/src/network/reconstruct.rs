//! Read the physical unknowns back out of a trained parameter pack: the
//! wave speed patch by patch, and the nonlinearity as expanded monomial
//! coefficients of the activation chain.

use crate::error::{Error, Result};
use crate::grid::Coord;
use crate::network::covering::Covering;
use crate::network::theta::Theta;
use crate::paraproduct::ParaNetParams;

/// Patch centers paired with the fitted diagonal speeds.
pub fn reconstruct_speed(theta: &Theta, cov: &Covering) -> Result<Vec<(Coord, f64)>> {
    if theta.k() != cov.k() {
        return Err(Error::NetworkValidation("parameter patch count differs".into()));
    }
    Ok(cov
        .patches()
        .iter()
        .zip(&theta.c_diag)
        .map(|(p, &c)| (p.center, c))
        .collect())
}

/// Monomial coefficients, ascending powers, of the nested chain
/// acc_n = u (a_n acc_{n-1} + b_n) from acc_0 = u.
pub fn expand_chain(params: &ParaNetParams) -> Vec<f64> {
    let mut acc = vec![0.0, 1.0];
    for &(a, b) in &params.pairs {
        let mut next = vec![0.0; acc.len() + 1];
        for (p, &c) in acc.iter().enumerate() {
            next[p + 1] += a * c;
        }
        next[1] += b;
        acc = next;
    }
    acc
}

/// Polynomial recovered for patch i, as coefficients c_0..c_N with
/// F(u) = sum c_p u^p. A depth-one network carries no activation chain and
/// reads back as the zero polynomial.
pub fn reconstruct_nonlinearity(theta: &Theta, i: usize) -> Result<Vec<f64>> {
    if i >= theta.k() {
        return Err(Error::NetworkValidation("patch index out of range".into()));
    }
    if theta.stages() == 0 {
        return Ok(vec![0.0]);
    }
    Ok(expand_chain(theta.chain(i, 0)))
}

//! The one smooth step everything else is built from: shell profiles,
//! frequency weights, packet envelopes, covering bumps, cone cutoffs.

/// exp(-1/t) for t > 0, zero otherwise. Smooth on all of R.
#[inline]
pub fn smooth_exp(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Monotone C-infinity step: 0 for t <= 0, 1 for t >= 1.
#[inline]
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = smooth_exp(t);
        let b = smooth_exp(1.0 - t);
        a / (a + b)
    }
}

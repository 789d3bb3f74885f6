//! Internal multi-axis FFT plumbing, unitary normalization.
//!
//! Plans are cached per (length, direction). Lines along each axis are
//! transformed independently and in parallel; every line is gathered into a
//! contiguous scratch buffer, so results are bit-identical for any thread
//! count.

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

static PLAN_CACHE: Lazy<Mutex<HashMap<(usize, bool), Arc<dyn Fft<f64>>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut cache = PLAN_CACHE.lock().expect("fft plan cache poisoned");
    cache
        .entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// In-place FFT along every axis of a row-major array with the given shape.
/// Applies the unitary scale 1/sqrt(total) at the end, so forward followed by
/// inverse is the identity and Parseval holds exactly.
pub(crate) fn fft_nd(data: &mut [Complex64], shape: &[usize], inverse: bool) {
    let total: usize = shape.iter().product();
    assert_eq!(data.len(), total, "fft_nd shape mismatch");
    for (axis, &len) in shape.iter().enumerate() {
        if len == 1 {
            continue;
        }
        let stride: usize = shape[axis + 1..].iter().product();
        let block = len * stride;
        let outer = total / block;
        let fft = plan(len, inverse);
        // Chunk by outer block so each task owns disjoint slices.
        data.par_chunks_mut(block).take(outer).for_each_init(
            || vec![Complex64::default(); len],
            |scratch, chunk| {
                for inner in 0..stride {
                    for k in 0..len {
                        scratch[k] = chunk[inner + k * stride];
                    }
                    fft.process(scratch);
                    for k in 0..len {
                        chunk[inner + k * stride] = scratch[k];
                    }
                }
            },
        );
    }
    let scale = 1.0 / (total as f64).sqrt();
    data.par_iter_mut().for_each(|v| *v *= scale);
}

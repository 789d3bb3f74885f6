//! Space-time coverings by overlapping balls with a subordinate partition
//! of unity, and the localization of a field onto the patches.

use crate::error::{Error, Result};
use crate::grid::{fourier, Field, Grid, SpectralField};
use crate::microlocal::Patch;
use crate::smooth::smooth_step;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Axis-aligned space-time box, one lo/hi pair per active axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn full(grid: &Grid) -> Region {
        let lo = vec![0.0; grid.axes()];
        let hi = (0..grid.axes()).map(|a| grid.extent(a)).collect();
        Region { lo, hi }
    }

    fn contains(&self, p: &[f64]) -> bool {
        (0..self.lo.len()).all(|a| self.lo[a] <= p[a] && p[a] <= self.hi[a])
    }
}

/// Ball support radius as a fraction of the separation scale delta. Kept
/// strictly below 1/2 so patch diameters stay under delta, and above
/// sqrt(3)/4 so a center lattice of spacing delta/2 still covers every
/// point in up to three axes.
const SUPPORT_FRACTION: f64 = 0.49;

/// Overlapping ball cover of a region with bump functions that sum to one
/// on every covered lattice point.
#[derive(Debug, Clone)]
pub struct Covering {
    grid: Grid,
    patches: Vec<Patch>,
    bumps: Vec<Field>,
    delta: f64,
}

impl Covering {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn k(&self) -> usize {
        self.patches.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn patch(&self, i: usize) -> &Patch {
        &self.patches[i]
    }

    /// Partition-of-unity weight of patch i, sampled on the grid.
    pub fn bump(&self, i: usize) -> &Field {
        &self.bumps[i]
    }
}

/// Cover `region` by balls of diameter just under `delta` centered on a
/// uniform lattice of spacing at most delta/2, and normalize the raw bumps
/// into a partition of unity. Distances wrap around the torus.
pub fn build_covering(grid: &Grid, region: &Region, delta: f64) -> Result<Covering> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::CoveringValidation("delta must be positive".into()));
    }
    if delta < 4.0 * grid.max_spacing() {
        return Err(Error::CoveringValidation(format!(
            "delta {} is under four grid spacings {}",
            delta,
            4.0 * grid.max_spacing()
        )));
    }
    let axes = grid.axes();
    if region.lo.len() != axes || region.hi.len() != axes {
        return Err(Error::CoveringValidation("region rank does not match grid".into()));
    }
    for a in 0..axes {
        if !(region.lo[a] <= region.hi[a]) || region.hi[a] - region.lo[a] > grid.extent(a) {
            return Err(Error::CoveringValidation("region box is malformed".into()));
        }
    }

    // Center lattice: per axis, the smallest count whose spacing is at most
    // delta/2; centers sit at cell midpoints so the box edges stay within a
    // quarter of delta of some center.
    let mut counts = vec![1usize; axes];
    let mut steps = vec![0.0; axes];
    for a in 0..axes {
        let ext = region.hi[a] - region.lo[a];
        let n = ((ext / (delta / 2.0)).ceil() as usize).max(1);
        counts[a] = n;
        steps[a] = ext / n as f64;
    }
    let k_total: usize = counts.iter().product();
    let rho = SUPPORT_FRACTION * delta;

    let mut patches = Vec::with_capacity(k_total);
    let mut idx = vec![0usize; axes];
    for _ in 0..k_total {
        let mut center = [0.0; 3];
        for a in 0..axes {
            center[a] = region.lo[a] + (idx[a] as f64 + 0.5) * steps[a];
        }
        patches.push(Patch { center, radius: rho });
        for a in (0..axes).rev() {
            idx[a] += 1;
            if idx[a] < counts[a] {
                break;
            }
            idx[a] = 0;
        }
    }

    let raw: Vec<Field> = patches
        .par_iter()
        .map(|p| {
            Field::from_fn(grid, |z| {
                let mut r2 = 0.0;
                for a in 0..axes {
                    let d = grid.wrap_delta(a, z[a], p.center[a]);
                    r2 += d * d;
                }
                1.0 - smooth_step(r2.sqrt() / rho)
            })
        })
        .collect();

    let mut sums = vec![0.0; grid.len()];
    for b in &raw {
        for (s, &v) in sums.iter_mut().zip(b.values()) {
            *s += v;
        }
    }
    for flat in 0..grid.len() {
        let p = grid.point(flat);
        if region.contains(&p[..axes]) && sums[flat] <= 1e-9 {
            return Err(Error::CoveringValidation("a region point escapes every ball".into()));
        }
    }
    let bumps: Vec<Field> = raw
        .into_iter()
        .map(|b| {
            let vals = b
                .values()
                .iter()
                .zip(&sums)
                .map(|(&v, &s)| if s > 0.0 { v / s } else { 0.0 })
                .collect();
            Field::from_values(grid, vals).expect("same grid")
        })
        .collect();

    Ok(Covering { grid: grid.clone(), patches, bumps, delta })
}

/// Per-patch spectra of a field plus the layer index they belong to.
#[derive(Debug, Clone)]
pub struct LayerState {
    pub units: Vec<SpectralField>,
    pub layer: usize,
}

/// Layer zero: transform each localized piece bump_i * f.
pub fn localize(f: &Field, cov: &Covering) -> Result<LayerState> {
    if f.grid() != cov.grid() {
        return Err(Error::GridMismatch("field grid differs from covering".into()));
    }
    let units = cov
        .bumps
        .par_iter()
        .map(|b| Ok(fourier(&f.mul_pointwise(b)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LayerState { units, layer: 0 })
}

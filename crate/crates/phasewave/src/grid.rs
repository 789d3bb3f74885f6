//! Periodic space-time grids, real fields, spectra, frequency weights.
//!
//! A grid covers `[0, extent_t) x [0, extent_x1) [x [0, extent_x2)]` with
//! power-of-two sample counts and is periodic in every axis. Fields are
//! row-major with the time index outermost. Spectra use standard DFT
//! ordering (index k holds wavenumber k for k < n/2, k - n otherwise) and
//! the unitary normalization, so analysis followed by synthesis is the
//! identity and Parseval holds exactly.

use crate::error::{Error, Result};
use crate::fft::fft_nd;
use crate::smooth::smooth_step;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Oscillations of a generated packet per envelope width; fixes the carrier
/// frequency |k| = PACKET_OSC_RATE / width along the packet direction.
pub const PACKET_OSC_RATE: f64 = 6.0;

/// Space-time coordinates or covectors, (t, x1, x2); trailing components
/// beyond the grid dimension stay zero.
pub type Coord = [f64; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    d: usize,
    n_t: usize,
    n_x: Vec<usize>,
    extent_t: f64,
    extent_x: Vec<f64>,
}

fn power_of_two_at_least_8(n: usize) -> bool {
    n >= 8 && n.is_power_of_two()
}

impl Grid {
    pub fn new(n_t: usize, n_x: &[usize], extent_t: f64, extent_x: &[f64]) -> Result<Self> {
        let d = n_x.len();
        if d != 1 && d != 2 {
            return Err(Error::GridValidation(format!(
                "spatial dimension must be 1 or 2, got {d}"
            )));
        }
        if n_x.len() != extent_x.len() {
            return Err(Error::GridValidation(
                "spatial counts and extents disagree in length".into(),
            ));
        }
        for &n in std::iter::once(&n_t).chain(n_x) {
            if !power_of_two_at_least_8(n) {
                return Err(Error::GridValidation(format!(
                    "sample counts must be powers of two >= 8, got {n}"
                )));
            }
        }
        for &e in std::iter::once(&extent_t).chain(extent_x) {
            if !(e.is_finite() && e > 0.0) {
                return Err(Error::GridValidation(format!(
                    "extents must be positive and finite, got {e}"
                )));
            }
        }
        Ok(Grid {
            d,
            n_t,
            n_x: n_x.to_vec(),
            extent_t,
            extent_x: extent_x.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Number of axes including time.
    pub fn axes(&self) -> usize {
        self.d + 1
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_x(&self) -> &[usize] {
        &self.n_x
    }

    pub fn extent_t(&self) -> f64 {
        self.extent_t
    }

    pub fn extent_x(&self) -> &[f64] {
        &self.extent_x
    }

    /// Samples per axis, time first.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.axes());
        s.push(self.n_t);
        s.extend_from_slice(&self.n_x);
        s
    }

    pub fn len(&self) -> usize {
        self.n_t * self.n_x.iter().product::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn count(&self, axis: usize) -> usize {
        if axis == 0 {
            self.n_t
        } else {
            self.n_x[axis - 1]
        }
    }

    pub fn extent(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.extent_t
        } else {
            self.extent_x[axis - 1]
        }
    }

    /// Sample spacing along an axis (axis 0 is time).
    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent(axis) / self.count(axis) as f64
    }

    pub fn dt(&self) -> f64 {
        self.spacing(0)
    }

    pub fn min_dx(&self) -> f64 {
        (1..self.axes())
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.axes()).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    /// Frequency lattice spacing along an axis.
    pub fn freq_spacing(&self, axis: usize) -> f64 {
        2.0 * std::f64::consts::PI / self.extent(axis)
    }

    /// Smallest per-axis Nyquist radius pi/spacing.
    pub fn nyquist_radius(&self) -> f64 {
        (0..self.axes())
            .map(|a| std::f64::consts::PI / self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest |zeta| on the frequency lattice (the corner radius).
    pub fn max_lattice_radius(&self) -> f64 {
        (0..self.axes())
            .map(|a| {
                let r = std::f64::consts::PI / self.spacing(a);
                r * r
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Volume of one space-time sample cell; both physical and spectral
    /// norms use it, which keeps them Parseval-comparable.
    pub fn sample_cell_volume(&self) -> f64 {
        (0..self.axes()).map(|a| self.spacing(a)).product()
    }

    pub fn flat_to_multi(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let shape = self.shape();
        let mut rem = flat;
        for a in (0..shape.len()).rev() {
            idx[a] = rem % shape[a];
            rem /= shape[a];
        }
        idx
    }

    pub fn multi_to_flat(&self, idx: &[usize]) -> usize {
        let shape = self.shape();
        let mut flat = 0;
        for a in 0..shape.len() {
            flat = flat * shape[a] + idx[a];
        }
        flat
    }

    /// Signed integer wavenumber for a DFT index along one axis.
    #[inline]
    pub fn signed_mode(&self, axis: usize, idx: usize) -> i64 {
        let n = self.count(axis) as i64;
        let k = idx as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    /// Physical covector of a flat spectral index.
    pub fn zeta(&self, flat: usize) -> Coord {
        let multi = self.flat_to_multi(flat);
        let mut z = [0.0; 3];
        for a in 0..self.axes() {
            z[a] = self.signed_mode(a, multi[a]) as f64 * self.freq_spacing(a);
        }
        z
    }

    /// Physical coordinates of a flat sample index.
    pub fn point(&self, flat: usize) -> Coord {
        let multi = self.flat_to_multi(flat);
        let mut p = [0.0; 3];
        for a in 0..self.axes() {
            p[a] = multi[a] as f64 * self.spacing(a);
        }
        p
    }

    /// Per-axis table of physical frequencies in DFT order.
    pub fn freq_table(&self, axis: usize) -> Vec<f64> {
        let n = self.count(axis);
        let h = self.freq_spacing(axis);
        (0..n).map(|i| self.signed_mode(axis, i) as f64 * h).collect()
    }

    /// |zeta|^2 for every flat spectral index.
    pub fn zeta_norm2_table(&self) -> Vec<f64> {
        let tables: Vec<Vec<f64>> = (0..self.axes()).map(|a| self.freq_table(a)).collect();
        let mut out = vec![0.0; self.len()];
        let shape = self.shape();
        let mut idx = [0usize; 3];
        for (flat, slot) in out.iter_mut().enumerate() {
            let mut rem = flat;
            for a in (0..shape.len()).rev() {
                idx[a] = rem % shape[a];
                rem /= shape[a];
            }
            let mut s = 0.0;
            for a in 0..shape.len() {
                let f = tables[a][idx[a]];
                s += f * f;
            }
            *slot = s;
        }
        out
    }

    /// Minimal-image displacement from b to a along an axis.
    #[inline]
    pub fn wrap_delta(&self, axis: usize, a: f64, b: f64) -> f64 {
        let ext = self.extent(axis);
        let mut da = (a - b) % ext;
        if da < -ext / 2.0 {
            da += ext;
        } else if da >= ext / 2.0 {
            da -= ext;
        }
        da
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "field length {} does not match grid length {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field {
            grid: grid.clone(),
            values,
        })
    }

    /// Sample a closure of physical space-time coordinates.
    pub fn from_fn(grid: &Grid, f: impl Fn(Coord) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Field {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn time_slice(&self, m: usize) -> &[f64] {
        let w = self.grid.len() / self.grid.n_t();
        &self.values[m * w..(m + 1) * w]
    }

    pub fn time_slice_mut(&mut self, m: usize) -> &mut [f64] {
        let w = self.grid.len() / self.grid.n_t();
        &mut self.values[m * w..(m + 1) * w]
    }

    pub fn l2_norm(&self) -> f64 {
        let v = self.grid.sample_cell_volume();
        (self.values.iter().map(|x| x * x).sum::<f64>() * v).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// L2 norm plus first-difference seminorm; the discrete H^1 proxy used
    /// for iteration traces and source normalization.
    pub fn h1_norm(&self) -> f64 {
        let mut total = self.values.iter().map(|x| x * x).sum::<f64>();
        let shape = self.grid.shape();
        for axis in 0..self.grid.axes() {
            let h = self.grid.spacing(axis);
            let stride: usize = shape[axis + 1..].iter().product();
            let n = shape[axis];
            let block = n * stride;
            for flat in 0..self.values.len() {
                let pos = (flat / stride) % n;
                let next = if pos + 1 == n {
                    flat + stride - block
                } else {
                    flat + stride
                };
                let d = (self.values[next] - self.values[flat]) / h;
                total += d * d;
            }
        }
        (total * self.grid.sample_cell_volume()).sqrt()
    }

    pub fn scaled(&self, a: f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|x| a * x).collect(),
        }
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul_pointwise(&self, other: &Field) -> Result<Field> {
        self.zip(other, |a, b| a * b)
    }

    fn zip(&self, other: &Field, op: impl Fn(f64, f64) -> f64) -> Result<Field> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("field grids differ".into()));
        }
        Ok(Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| op(*a, *b))
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: &Grid) -> Self {
        SpectralField {
            grid: grid.clone(),
            values: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "spectrum length {} does not match grid length {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(SpectralField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn l2_norm(&self) -> f64 {
        let v = self.grid.sample_cell_volume();
        (self.values.iter().map(|x| x.norm_sqr()).sum::<f64>() * v).sqrt()
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        SpectralField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|x| a * x).collect(),
        }
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(
        &self,
        other: &SpectralField,
        op: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<SpectralField> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("spectral grids differ".into()));
        }
        Ok(SpectralField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| op(*a, *b))
                .collect(),
        })
    }
}

/// High-pass weight: profile vanishes below R, equals one above 2R, with a
/// Sobolev exponent s entering through <zeta>^(s+1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyWeight {
    pub s: f64,
    pub r: f64,
}

impl FrequencyWeight {
    pub fn new(s: f64, r: f64) -> Self {
        FrequencyWeight { s, r }
    }

    /// Radial profile: 0 for rho <= R, 1 for rho >= 2R, smooth between.
    /// R = 0 means no high-pass cut at all.
    pub fn profile(&self, rho: f64) -> f64 {
        if self.r <= 0.0 {
            1.0
        } else {
            smooth_step(rho / self.r - 1.0)
        }
    }
}

/// Forward transform, unitary normalization.
pub fn fourier(field: &Field) -> SpectralField {
    let mut values: Vec<Complex64> = field
        .values()
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .collect();
    fft_nd(&mut values, &field.grid().shape(), false);
    SpectralField {
        grid: field.grid().clone(),
        values,
    }
}

/// Inverse transform back to a real field. The imaginary residue relative to
/// the synthesis magnitude must stay below 1e-10; larger residues mean the
/// spectrum was not conjugate-symmetric and the synthesis is not real.
pub fn inverse_fourier(sf: &SpectralField) -> Result<Field> {
    let mut values = sf.values().to_vec();
    fft_nd(&mut values, &sf.grid().shape(), true);
    let mag2: f64 = values.iter().map(|v| v.norm_sqr()).sum();
    let im2: f64 = values.iter().map(|v| v.im * v.im).sum();
    if mag2 > 0.0 {
        let residue = (im2 / mag2).sqrt();
        if residue >= 1e-10 {
            return Err(Error::NonRealSynthesis { residue });
        }
    }
    Ok(Field {
        grid: sf.grid().clone(),
        values: values.into_iter().map(|v| v.re).collect(),
    })
}

/// Weighted spectral norm
/// `sqrt( sum_zeta profile(|zeta|)^2 <zeta>^(s+1) |sf(zeta)|^2 cellvol )`.
pub fn weighted_norm(sf: &SpectralField, w: &FrequencyWeight) -> Result<f64> {
    let nyq = sf.grid().nyquist_radius();
    if w.r >= nyq {
        return Err(Error::WeightTruncatesSpectrum { r: w.r, nyquist: nyq });
    }
    let norm2 = sf.grid().zeta_norm2_table();
    let vol = sf.grid().sample_cell_volume();
    let mut total = 0.0;
    for (v, &z2) in sf.values().iter().zip(&norm2) {
        let p = w.profile(z2.sqrt());
        if p > 0.0 {
            let bracket = (1.0 + z2).powf((w.s + 1.0) / 2.0);
            total += p * p * bracket * v.norm_sqr();
        }
    }
    Ok((total * vol).sqrt())
}

/// Gaussian-enveloped oscillating pulse conormal to the hyperplane through
/// `center` with unit conormal `direction`. The carrier frequency is
/// PACKET_OSC_RATE/width along the conormal; the envelope is cut smoothly to
/// exact zero at 5 widths from the plane, so two packets with disjoint
/// 6-width slabs cannot interact at all.
pub fn gen_wavepacket(
    grid: &Grid,
    center: Coord,
    direction: Coord,
    width: f64,
    amplitude: f64,
) -> Result<Field> {
    let min_width = 3.0 * grid.max_spacing();
    if !(width.is_finite() && width >= min_width) {
        return Err(Error::UnresolvedPacket { width, min_width });
    }
    let half_extent = (0..grid.axes()).map(|a| grid.extent(a)).fold(f64::INFINITY, f64::min) / 2.0;
    if 6.0 * width > half_extent {
        return Err(Error::PacketTooWide {
            support: 6.0 * width,
            half_extent,
        });
    }
    let axes = grid.axes();
    let norm: f64 = direction[..axes].iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::SourceValidation(
            "packet direction must be a nonzero covector".into(),
        ));
    }
    if direction[axes..].iter().any(|&x| x != 0.0) {
        return Err(Error::SourceValidation(
            "packet direction has components beyond the grid dimension".into(),
        ));
    }
    let mut n = [0.0; 3];
    for a in 0..axes {
        n[a] = direction[a] / norm;
    }
    let carrier = PACKET_OSC_RATE / width;
    Ok(Field::from_fn(grid, |p| {
        let mut rho = 0.0;
        for a in 0..axes {
            rho += n[a] * grid.wrap_delta(a, p[a], center[a]);
        }
        let envelope = (-rho * rho / (2.0 * width * width)).exp()
            * (1.0 - smooth_step((rho.abs() - 4.0 * width) / width));
        amplitude * (carrier * rho).cos() * envelope
    }))
}

/// Pointwise restriction of a field by a patch window.
pub fn patch_restrict(f: &Field, window: &Field) -> Result<Field> {
    f.mul_pointwise(window)
}

//! JSON schemas shared across subcommands and their builders.
//!
//! Lengths and times in config keys carry the `_m` suffix: one model unit,
//! the dimensionless unit of the underlying equations. Unknown keys are
//! rejected everywhere.

use phasewave::{gen_wavepacket, Coord, Error, Field, Grid, Nonlinearity, Region, Result, WaveSpeed};
use phasewave::synthetic::{gen_power_law, time_ramp};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_t: usize,
    pub n_x: Vec<usize>,
    pub extent_t_m: f64,
    pub extent_x_m: Vec<f64>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.n_t, &self.n_x, self.extent_t_m, &self.extent_x_m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpeedSpec {
    Constant { c: f64 },
    /// base + amp * sin(2 pi cycles x / extent) along the first spatial axis.
    SineX { base: f64, amp: f64, cycles: f64 },
}

impl SpeedSpec {
    pub fn build(&self, grid: &Grid) -> Result<WaveSpeed> {
        match *self {
            SpeedSpec::Constant { c } => WaveSpeed::constant(grid, c),
            SpeedSpec::SineX { base, amp, cycles } => {
                let rate = std::f64::consts::TAU * cycles / grid.extent(1);
                WaveSpeed::from_fn(grid, |x| base + amp * (rate * x[0]).sin())
            }
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match *self {
            SpeedSpec::Constant { c } => Some(c),
            SpeedSpec::SineX { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Zero,
    /// PWF1 field file; the grid recorded in the file must match the config grid.
    File { path: String },
    /// Gaussian-enveloped pulse conormal to the hyperplane through center_m,
    /// gated by the smooth switch-on so the first slices vanish exactly.
    /// The gate defaults to onset at four time steps over eight.
    Packet {
        center_m: Vec<f64>,
        direction: Vec<f64>,
        width_m: f64,
        amplitude: f64,
        #[serde(default)]
        t_on_m: Option<f64>,
        #[serde(default)]
        t_width_m: Option<f64>,
    },
    /// amplitude * ramp(t) * cos(tau t + xi . x); bitwise zero before t_on_m.
    Modal {
        tau: f64,
        xi: Vec<f64>,
        amplitude: f64,
        t_on_m: f64,
        t_width_m: f64,
    },
    /// Random-phase field with spectral profile <zeta>^exponent, gated by the
    /// same smooth switch-on. Deterministic in the run seed.
    PowerLaw {
        exponent: f64,
        amplitude: f64,
        t_on_m: f64,
        t_width_m: f64,
    },
}

fn to_coord(v: &[f64], axes: usize, what: &str) -> Result<Coord> {
    if v.len() != axes {
        return Err(Error::SourceValidation(format!(
            "{what} needs {axes} components, got {}",
            v.len()
        )));
    }
    let mut out = [0.0; 3];
    out[..axes].copy_from_slice(v);
    Ok(out)
}

impl SourceSpec {
    pub fn build(&self, grid: &Grid, seed: u64) -> Result<Field> {
        match self {
            SourceSpec::Zero => Ok(Field::zeros(grid)),
            SourceSpec::File { path } => phasewave::io::read_field(path)
                .map_err(|e| Error::SourceValidation(format!("source file {path}: {e}")))
                .and_then(|f| {
                    if f.grid() != grid {
                        return Err(Error::SourceValidation(format!(
                            "source file {path} was sampled on a different grid"
                        )));
                    }
                    Ok(f)
                }),
            SourceSpec::Packet {
                center_m,
                direction,
                width_m,
                amplitude,
                t_on_m,
                t_width_m,
            } => {
                let center = to_coord(center_m, grid.axes(), "packet center")?;
                let dir = to_coord(direction, grid.axes(), "packet direction")?;
                let pulse = gen_wavepacket(grid, center, dir, *width_m, *amplitude)?;
                let t_on = t_on_m.unwrap_or(4.0 * grid.dt());
                let t_width = t_width_m.unwrap_or(8.0 * grid.dt());
                pulse.mul_pointwise(&time_ramp(grid, t_on, t_width))
            }
            SourceSpec::Modal { tau, xi, amplitude, t_on_m, t_width_m } => {
                if xi.len() != grid.dim() {
                    return Err(Error::SourceValidation(format!(
                        "modal source needs {} spatial frequencies, got {}",
                        grid.dim(),
                        xi.len()
                    )));
                }
                let (tau, amp) = (*tau, *amplitude);
                let xi = xi.clone();
                let carrier = Field::from_fn(grid, |z| {
                    let phase: f64 =
                        tau * z[0] + xi.iter().zip(&z[1..]).map(|(k, x)| k * x).sum::<f64>();
                    amp * phase.cos()
                });
                carrier.mul_pointwise(&time_ramp(grid, *t_on_m, *t_width_m))
            }
            SourceSpec::PowerLaw { exponent, amplitude, t_on_m, t_width_m } => {
                gen_power_law(grid, *exponent, seed)
                    .scaled(*amplitude)
                    .mul_pointwise(&time_ramp(grid, *t_on_m, *t_width_m))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinSpec {
    Zero,
    /// Spatially constant coefficients [a2, a3, ..] of a2 u^2 + a3 u^3 + ...
    Polynomial { coeffs: Vec<f64> },
}

impl NonlinSpec {
    pub fn build(&self, grid: &Grid) -> Result<Nonlinearity> {
        match self {
            NonlinSpec::Zero => Nonlinearity::constant_coeffs(grid, &[0.0]),
            NonlinSpec::Polynomial { coeffs } => Nonlinearity::constant_coeffs(grid, coeffs),
        }
    }

    pub fn poly_coeffs(&self) -> Vec<f64> {
        match self {
            NonlinSpec::Zero => vec![],
            NonlinSpec::Polynomial { coeffs } => coeffs.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub lo_m: Vec<f64>,
    pub hi_m: Vec<f64>,
}

impl RegionSpec {
    pub fn build(&self) -> Region {
        Region { lo: self.lo_m.clone(), hi: self.hi_m.clone() }
    }
}

/// Every subcommand config exposes its seed and output directory so the
/// global flag overrides have somewhere to land.
pub trait Experiment {
    fn seed_mut(&mut self) -> &mut u64;
    fn out_dir_mut(&mut self) -> &mut String;
    fn out_dir(&self) -> &str;
}

macro_rules! experiment {
    ($t:ty) => {
        impl $crate::config::Experiment for $t {
            fn seed_mut(&mut self) -> &mut u64 {
                &mut self.seed
            }
            fn out_dir_mut(&mut self) -> &mut String {
                &mut self.out_dir
            }
            fn out_dir(&self) -> &str {
                &self.out_dir
            }
        }
    };
}
pub(crate) use experiment;

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(32, &[32], 1.0, &[1.0]).unwrap()
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{"n_t": 8, "n_x": [8], "extent_t_m": 1.0, "extent_x_m": [1.0], "oops": 1}"#;
        assert!(serde_json::from_str::<GridSpec>(bad).is_err());
        let bad = r#"{"kind": "constant", "c": 1.0, "extra": 2}"#;
        assert!(serde_json::from_str::<SpeedSpec>(bad).is_err());
    }

    #[test]
    fn sine_speed_hits_requested_extremes() {
        let g = Grid::new(8, &[64], 1.0, &[std::f64::consts::TAU]).unwrap();
        let spec = SpeedSpec::SineX { base: 1.0, amp: 0.1, cycles: 1.0 };
        let c = spec.build(&g).unwrap();
        let max = c.values().iter().cloned().fold(0.0, f64::max);
        let min = c.values().iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((max - 1.1).abs() < 1e-3 && (min - 0.9).abs() < 1e-3);
    }

    #[test]
    fn modal_source_is_causal_and_oscillates() {
        let g = grid();
        let spec = SourceSpec::Modal {
            tau: 12.0,
            xi: vec![6.0 * std::f64::consts::TAU],
            amplitude: 0.5,
            t_on_m: 0.2,
            t_width_m: 0.3,
        };
        let f = spec.build(&g, 0).unwrap();
        assert!(f.time_slice(0).iter().all(|&v| v == 0.0));
        assert!(f.time_slice(1).iter().all(|&v| v == 0.0));
        assert!(f.linf_norm() > 0.4);
    }

    #[test]
    fn power_law_source_depends_on_seed_only_through_rng() {
        let g = grid();
        let spec = SourceSpec::PowerLaw {
            exponent: -1.0,
            amplitude: 1.0,
            t_on_m: 0.2,
            t_width_m: 0.2,
        };
        let a = spec.build(&g, 7).unwrap();
        let b = spec.build(&g, 7).unwrap();
        let c = spec.build(&g, 8).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
    }
}

//! Phase-space wave propagation on periodic space-time grids.
//!
//! The crate builds up from a shared grid/field layer: a causal solver for
//! variable-speed wave operators, Picard iteration for semilinear sources,
//! dyadic frequency decompositions and paraproducts, bicharacteristic flow
//! with transport along it, and patch networks that propagate localized data
//! through canonical links and train activations against observations.

pub mod error;
mod fft;
pub mod fit;
pub mod grid;
pub mod io;
pub mod microlocal;
pub mod network;
pub mod nonlinear;
pub mod paraproduct;
pub mod smooth;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};
pub use nonlinear::{
    eval_nonlinearity, interaction_oracle, mixed_eps_derivative, picard_iterate, IterationTrace,
    MultiSource, Nonlinearity,
};
pub use microlocal::{
    canonical_map, canonical_map_with_step, flow, hamiltonian_eval, linearize_canonical,
    subprincipal_eval, transport_symbol, Bicharacteristic, CanonicalLink, Patch, PhasePoint,
};
pub use network::{
    activation_unit, assemble_layer, build_covering, cost, diagonal_unit, forward, localize,
    propagate_unit, reconstruct_nonlinearity, reconstruct_speed, train, Covering, LayerState,
    ParamSubset, Region, Theta, TrainConfig, TrainReport, WeightSpec,
};
pub use paraproduct::{
    build_dyadic, build_dyadic_covering, decompose, horner_params, para_forward,
    paraproduct_chi, paraproduct_dyadic, remainder_profile, DyadicSystem, ParaKernel,
    ParaNetParams,
};
pub use solver::{apply_wave_operator, modal_oracle, solve_causal, SolveReport, WaveSpeed};
pub use grid::{
    fourier, gen_wavepacket, inverse_fourier, patch_restrict, weighted_norm, Coord, Field,
    FrequencyWeight, Grid, SpectralField, PACKET_OSC_RATE,
};

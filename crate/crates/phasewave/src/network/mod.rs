//! Patch-local spectral network: a covering of space-time with a partition
//! of unity, linear propagation and symbol-division units between patches,
//! paraproduct activations, misfit costs, coordinate-descent training, and
//! readout of the recovered speed and nonlinearity.

mod covering;
mod forward;
mod reconstruct;
mod theta;
mod train;

pub use covering::{build_covering, localize, Covering, LayerState, Region};
pub use forward::{
    activation_unit, assemble_layer, cost, diagonal_unit, forward, propagate_unit,
};
pub use reconstruct::{expand_chain, reconstruct_nonlinearity, reconstruct_speed};
pub use theta::{ParamSubset, Theta, TrainConfig, WeightSpec};
pub use train::{train, TrainReport};

pub mod convergence;
pub mod flow;
pub mod interaction;
pub mod lp;
pub mod reconstruct;
pub mod solve;
pub mod train;

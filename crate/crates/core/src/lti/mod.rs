//! Plant models, closed-loop FIR responses and their simulation.

mod graph;
mod polytope;
mod response;
mod support;
mod system;

pub use graph::Graph;
pub use polytope::Polytope;
pub use response::{
    affine_residual, evaluate_taps, evaluate_transfer, simulate_closed_loop, FirResponse, Trajectory,
};
pub use support::{locality_support, SupportMask};
pub use system::{make_chain_system, spectral_radius, LinearSystem};

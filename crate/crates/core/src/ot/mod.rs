//! Discrete optimal transport solvers.

mod exact;
mod factored;
mod plan;
mod sinkhorn;
mod sweep;

pub use exact::{exact_cost, solve_exact, solve_exact_detailed, ExactSolution};
pub use plan::{transport_cost, DualSolution, TransportPlan};
pub use sinkhorn::{solve_sinkhorn_scaled, SinkhornOptions, SinkhornSolution, StageReport};

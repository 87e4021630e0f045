//! Friedkin-Johnsen opinion dynamics with external media sources.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: weighted undirected graphs, edge-list ingestion and the
//!   Barabási-Albert / random-regular generators.
//! * [`numerics`]: matrix-free conjugate gradient for `Γ + L` operators and a
//!   generic fixed-point driver.
//! * [`fj`]: classic FJ dynamics (step, equilibrium).
//! * [`media`]: two stubborn sources, the augmented equilibrium and the
//!   closed-form sum formulas.
//! * [`periods`]: the multi-period radicalization protocol.
//! * [`nonstubborn`]: a single media source that follows the dynamics itself.
//! * [`harness`]: experiment configuration, sampling, seeding and CSV output.

pub mod error;
pub mod fj;
pub mod graph;
pub mod harness;
pub mod media;
pub mod nonstubborn;
pub mod numerics;
pub mod periods;

#[cfg(test)]
mod test_support;

pub use error::ModelError;
pub use fj::{fj_equilibrium, fj_step, EquilibriumMethod, OpinionVector};
pub use graph::{Graph, GraphError, GraphStats};
pub use media::{
    assign_media, equilibrium_with_media, source_opinions, sum_bounds, truncated_lower_bound,
    truncated_regular_sum, MediaAssignment, MediaConfig, SourceOpinions, SumBounds, ZetaVector,
};
pub use nonstubborn::{nonstubborn_equilibrium, NonStubbornEquilibrium};
pub use numerics::{fixed_point_iterate, solve_spd, DiagPlusLaplacian, SolveError, SolveReport};
pub use periods::{alpha_half_limit, ell_star, run_periods, PeriodTrajectory, StopCause, StopCriteria};

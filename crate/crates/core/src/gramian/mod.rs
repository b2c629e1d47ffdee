//! Empirical observability Gramians and the measures derived from them.

mod config;
mod empirical;
mod linear;
mod measures;

pub use config::{Direction, GramianConfig};
pub use empirical::{empirical_gramian_of, per_site_bank, Gramian, GramianBank};
pub use linear::{linear_gramian_oracle, LinearSystem};
pub use measures::{
    check_symmetric, logdet, min_max_eigenvalue, trace_and_condition, SINGULAR_PIVOT,
};

use crate::error::Result;
use crate::network::ReducedModel;

/// Gramian of the PMU outputs at the `instrumented` generators (0-based).
pub fn empirical_gramian(
    model: &ReducedModel,
    instrumented: &[usize],
    cfg: &GramianConfig,
) -> Result<Gramian> {
    empirical_gramian_of(model, &model.x0, instrumented, cfg)
}

/// One Gramian per generator, all from the same perturbed rollouts.
pub fn per_generator_bank(model: &ReducedModel, cfg: &GramianConfig) -> Result<GramianBank> {
    per_site_bank(model, &model.x0, cfg)
}

//! The generative model: parameters, binary states and closed-form
//! densities/posteriors.

mod dataset;
mod density;
mod params;
mod prepared;
mod state;

pub use dataset::Dataset;
pub use density::{
    all_states, binary_posterior, conditional_gaussian, log_joint_ys, log_marginal_likelihood,
    log_prior, masked_basis, state_covariance, ConditionalGaussian,
};
pub(crate) use density::check_enumerable;
pub use params::{ModelParams, NoiseMode, PI_FLOOR};
pub use prepared::{PointProjection, PreparedModel, StateFactor, StatePosterior};
pub use state::BinaryState;

/// Largest `H` for which exhaustive enumeration of `2^H` states is allowed.
pub const H_EXACT_MAX: usize = 20;

//! Exact EM: expectations over all `2^H` binary states and the closed-form
//! M-step shared with the truncated engine.

mod estep;
mod free_energy;
mod marginals;
mod mstep;
mod runner;
mod stats;
mod trace;

pub use estep::{all_state_factors, exact_accumulate, exact_estep, worker_pool, EXACT_CHUNK};
pub use free_energy::{free_energy, BlockGradients, FrozenPosterior};
pub use marginals::{posterior_marginals, PosteriorMarginals};
pub use mstep::{
    mstep, mstep_with, sigma_full_residual, sigma_simplified, MStepOptions, MStepReport, SlabCovariance, DEAD_MASS,
};
pub use runner::{run_exact_em, run_exact_em_with, EmOptions, EmRun};
pub use stats::{AccumulatedStats, SufficientStats};
pub use trace::{write_trace_csv, EmTrace, ParamDeltas, TRACE_CSV_HEADER};

pub(crate) use estep::{check_data, reduce_units};
pub(crate) use runner::drive;
pub(crate) use stats::accumulate_points;

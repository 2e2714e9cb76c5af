//! Truncated variational EM: each point's posterior is restricted to a
//! small state space built from its best-scoring latents.

mod cluster;
mod config;
mod runner;
mod selection;
mod state_space;

pub use cluster::{cluster_partition, Cluster, ClusterPlan, DEFAULT_ALPHA_PERCENTILE};
pub use config::{binomial, TruncationConfig};
pub use runner::{
    q_values, run_truncated_em, run_truncated_em_with, truncated_accumulate, truncated_posterior_means, Scheduling,
    TruncatedOptions,
};
pub use selection::{q_value, restricted_log_marginal, selection_scores, truncated_expectations};
pub use state_space::{build_state_space, select_indices, StateSpace};

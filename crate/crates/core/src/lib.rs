//! Spike-and-slab sparse coding with exact and truncated variational EM.
//!
//! Observations are modeled as `y = W(s⊙z) + ε` with Bernoulli spikes
//! `s ~ B(π)`, Gaussian slabs `z ~ N(μ, Ψ)` and Gaussian noise `ε ~ N(0, Σ)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod denoise;
pub mod error;
pub mod eval;
pub mod exact_em;
pub mod init;
pub mod io;
pub mod linalg;
pub mod model;
pub mod truncated_em;

pub use error::{Error, Result};
pub use model::{BinaryState, Dataset, ModelParams, NoiseMode};
pub use datagen::{GeneratorKind, GeneratorSpec};
pub use denoise::{GrayImage, PatchGrid};
pub use eval::MetricReport;
pub use exact_em::{AccumulatedStats, EmOptions, EmRun, EmTrace, SufficientStats};
pub use init::random_init;
pub use truncated_em::{StateSpace, TruncationConfig};

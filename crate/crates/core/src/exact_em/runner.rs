use std::time::Instant;

use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use super::estep::{exact_accumulate, worker_pool};
use super::mstep::{mstep_with, MStepOptions};
use super::stats::AccumulatedStats;
use super::trace::{EmTrace, ParamDeltas};
use crate::error::{Error, Result};
use crate::model::{check_enumerable, Dataset, ModelParams};

/// Options shared by both EM engines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub iters: usize,
    /// Worker threads for the E-step (`0`: one per core).
    pub workers: usize,
    /// Stop once the relative log-likelihood change stays below `1e-9` for
    /// five consecutive iterations.
    pub early_stop: bool,
    pub mstep: MStepOptions,
}

impl EmOptions {
    pub fn iters(iters: usize) -> Self {
        EmOptions {
            iters,
            workers: 1,
            early_stop: false,
            mstep: MStepOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmRun {
    pub params: ModelParams,
    pub trace: Vec<EmTrace>,
    /// Sum over iterations of points whose posterior fell back to uniform.
    pub degenerate_points: usize,
    /// Iterations in which the M-step held at least one latent or clamped a covariance.
    pub patched_iterations: usize,
    /// E-step diagnostics of the last iteration.
    pub last_stats: Option<AccumulatedStats>,
}

pub fn run_exact_em(data: &Dataset, init: &ModelParams, iters: usize) -> Result<EmRun> {
    run_exact_em_with(data, init, &EmOptions::iters(iters))
}

pub fn run_exact_em_with(data: &Dataset, init: &ModelParams, opts: &EmOptions) -> Result<EmRun> {
    check_enumerable(init.h())?;
    let pool = worker_pool(opts.workers)?;
    drive(data, init, opts, &pool, |params, pool| exact_accumulate(params, data, pool))
}

const EARLY_STOP_TOL: f64 = 1e-9;
const EARLY_STOP_RUN: usize = 5;

/// Alternates `estep` with the shared M-step.
pub(crate) fn drive<F>(data: &Dataset, init: &ModelParams, opts: &EmOptions, pool: &ThreadPool, mut estep: F) -> Result<EmRun>
where
    F: FnMut(&ModelParams, &ThreadPool) -> Result<AccumulatedStats>,
{
    if opts.iters == 0 {
        return Err(Error::InvalidConfig("iters must be >= 1".into()));
    }
    init.validate()?;
    super::estep::check_data(init, data)?;
    let mut params = init.clone();
    let mut trace = Vec::with_capacity(opts.iters);
    let mut degenerate_points = 0;
    let mut patched_iterations = 0;
    let mut last_stats = None;
    let mut quiet = 0;
    for it in 1..=opts.iters {
        let start = Instant::now();
        let acc = estep(&params, pool).map_err(|e| e.at_iteration(it))?;
        let (next, report) = mstep_with(&acc, data, &params, opts.mstep).map_err(|e| e.at_iteration(it))?;
        degenerate_points += acc.degenerate;
        if !report.held.is_empty() || report.psi_clamped || report.sigma_clamped {
            patched_iterations += 1;
        }
        let ll = acc.log_likelihood;
        if let Some(prev) = trace.last().map(|t: &EmTrace| t.log_likelihood) {
            if ((ll - prev) / ll.abs().max(1e-300)).abs() < EARLY_STOP_TOL {
                quiet += 1;
            } else {
                quiet = 0;
            }
        }
        trace.push(EmTrace {
            iteration: it,
            log_likelihood: ll,
            param_deltas: ParamDeltas::between(&params, &next),
            wall_time: start.elapsed(),
        });
        params = next;
        last_stats = Some(acc);
        if opts.early_stop && quiet >= EARLY_STOP_RUN {
            break;
        }
    }
    Ok(EmRun {
        params,
        trace,
        degenerate_points,
        patched_iterations,
        last_stats,
    })
}

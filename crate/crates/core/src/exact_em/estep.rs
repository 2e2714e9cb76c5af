use rayon::prelude::*;
use rayon::ThreadPool;

use super::stats::{accumulate_points, AccumulatedStats, SufficientStats};
use crate::error::{Error, Result};
use crate::linalg::tree_reduce;
use crate::model::{all_states, Dataset, ModelParams, PreparedModel, StateFactor};

/// Points per work unit in the exact E-step. Fixed so that the reduction
/// tree, and hence the floating-point result, does not depend on the
/// number of workers.
pub const EXACT_CHUNK: usize = 256;

/// Factorizes every one of the `2^H` states.
pub fn all_state_factors(prep: &PreparedModel) -> Result<Vec<StateFactor>> {
    all_states(prep.h())?.iter().map(|s| prep.factor_state(s)).collect()
}

/// Per-point expectations under the exact posterior over all `2^H` states.
pub fn exact_estep(params: &ModelParams, data: &Dataset) -> Result<Vec<SufficientStats>> {
    check_data(params, data)?;
    let prep = PreparedModel::new(params)?;
    let factors = all_state_factors(&prep)?;
    let refs: Vec<&StateFactor> = factors.iter().collect();
    Ok((0..data.n())
        .map(|n| {
            let mut acc = AccumulatedStats::zeros(params.d(), params.h());
            accumulate_points(|y, p| prep.project_into(y, p), &refs, std::iter::once(data.point_slice(n)), &mut acc);
            acc.stats
        })
        .collect())
}

/// Exact E-step summed over the dataset, parallel over fixed chunks.
pub fn exact_accumulate(params: &ModelParams, data: &Dataset, pool: &ThreadPool) -> Result<AccumulatedStats> {
    check_data(params, data)?;
    let prep = PreparedModel::new(params)?;
    let factors = all_state_factors(&prep)?;
    let refs: Vec<&StateFactor> = factors.iter().collect();
    let n_units = data.n().div_ceil(EXACT_CHUNK);
    let mut acc = reduce_units(pool, n_units, |u| {
        let lo = u * EXACT_CHUNK;
        let hi = (lo + EXACT_CHUNK).min(data.n());
        let mut acc = AccumulatedStats::zeros(params.d(), params.h());
        accumulate_points(|y, p| prep.project_into(y, p), &refs, (lo..hi).map(|n| data.point_slice(n)), &mut acc);
        Ok(acc)
    })?;
    acc.factorizations += factors.len();
    Ok(acc)
}

pub(crate) fn check_data(params: &ModelParams, data: &Dataset) -> Result<()> {
    if data.d() != params.d() {
        return Err(Error::dims("dataset dimension", params.d(), data.d()));
    }
    Ok(())
}

/// Runs `unit` for every unit index on the pool and reduces the results in
/// a fixed tree over unit order.
pub(crate) fn reduce_units<F>(pool: &ThreadPool, n_units: usize, unit: F) -> Result<AccumulatedStats>
where
    F: Fn(usize) -> Result<AccumulatedStats> + Sync,
{
    let parts: Vec<AccumulatedStats> =
        pool.install(|| (0..n_units).into_par_iter().map(&unit).collect::<Result<Vec<_>>>())?;
    tree_reduce(parts).ok_or_else(|| Error::InvalidInput("empty dataset".into()))
}

/// A pool with `workers` threads (`0` means the rayon default).
pub fn worker_pool(workers: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))
}

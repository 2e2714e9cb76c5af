use nalgebra::DMatrix;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use super::cluster::{cluster_partition, ClusterPlan, DEFAULT_ALPHA_PERCENTILE};
use super::selection::SingletonFactors;
use super::state_space::{select_indices, subset_states};
use super::TruncationConfig;
use crate::error::Result;
use crate::exact_em::{
    accumulate_points, all_state_factors, check_data, drive, reduce_units, worker_pool, AccumulatedStats, EmOptions,
    EmRun, EXACT_CHUNK,
};
use crate::linalg::log_sum_exp;
use crate::model::{check_enumerable, Dataset, ModelParams, PointProjection, PreparedModel, StateFactor, StatePosterior};

/// How truncated E-step work is divided into units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scheduling {
    /// Group points with equal selected sets so their state factorizations
    /// are shared; otherwise every point is its own unit.
    pub clustering: bool,
    /// Cluster-size cap percentile (`None`: no cap).
    pub alpha_percentile: Option<f64>,
}

impl Default for Scheduling {
    fn default() -> Self {
        Scheduling {
            clustering: true,
            alpha_percentile: Some(DEFAULT_ALPHA_PERCENTILE),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncatedOptions {
    pub em: EmOptions,
    pub scheduling: Scheduling,
}

impl TruncatedOptions {
    pub fn iters(iters: usize) -> Self {
        TruncatedOptions {
            em: EmOptions::iters(iters),
            scheduling: Scheduling::default(),
        }
    }
}

/// Selected index set of every point, computed in fixed chunks.
pub(crate) fn select_all(
    prep: &PreparedModel,
    singles: &SingletonFactors,
    data: &Dataset,
    h_prime: usize,
    pool: &ThreadPool,
) -> Vec<Vec<usize>> {
    let n_chunks = data.n().div_ceil(EXACT_CHUNK);
    let chunks: Vec<Vec<Vec<usize>>> = pool.install(|| {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut proj = PointProjection::default();
                let mut scores = Vec::new();
                let hi = ((c + 1) * EXACT_CHUNK).min(data.n());
                (c * EXACT_CHUNK..hi)
                    .map(|n| {
                        prep.project_into(data.point_slice(n), &mut proj);
                        singles.scores_into(&proj, &mut scores);
                        select_indices(&scores, h_prime)
                    })
                    .collect()
            })
            .collect()
    });
    chunks.into_iter().flatten().collect()
}

/// Factorizes the states of `K` with two or more active latents for one
/// selected set; the zero state and singletons come from [`SingletonFactors`].
fn unit_factors(prep: &PreparedModel, key: &[usize], cfg: &TruncationConfig) -> Result<Vec<StateFactor>> {
    subset_states(prep.h(), key, 2, cfg.gamma).iter().map(|s| prep.factor_state(s)).collect()
}

fn unit_refs<'a>(
    singles: &'a SingletonFactors,
    multi: &'a [StateFactor],
    key: &[usize],
    cfg: &TruncationConfig,
) -> Vec<&'a StateFactor> {
    let mut refs: Vec<&StateFactor> = Vec::with_capacity(1 + singles.singles.len() + multi.len());
    refs.push(&singles.zero);
    for (i, f) in singles.singles.iter().enumerate() {
        if cfg.include_singletons || key.binary_search(&i).is_ok() {
            refs.push(f);
        }
    }
    refs.extend(multi.iter());
    refs.sort_by(|a, b| a.state().cmp(b.state()));
    refs
}

fn make_plan(keys: &[Vec<usize>], scheduling: &Scheduling) -> Result<ClusterPlan> {
    if scheduling.clustering {
        cluster_partition(keys, scheduling.alpha_percentile)
    } else {
        Ok(ClusterPlan::unclustered(keys))
    }
}

/// One truncated E-step over the whole dataset. Returns the summed
/// statistics (with the restricted-sum log-likelihood surrogate) and the
/// cluster plan that was executed.
pub fn truncated_accumulate(
    params: &ModelParams,
    data: &Dataset,
    cfg: &TruncationConfig,
    scheduling: &Scheduling,
    pool: &ThreadPool,
) -> Result<(AccumulatedStats, ClusterPlan)> {
    check_data(params, data)?;
    cfg.validate(params.h())?;
    let prep = PreparedModel::new(params)?;
    let singles = SingletonFactors::new(&prep)?;
    let keys = select_all(&prep, &singles, data, cfg.h_prime, pool);
    let plan = make_plan(&keys, scheduling)?;
    let mut acc = reduce_units(pool, plan.len(), |u| {
        let cluster = &plan.clusters[u];
        let multi = unit_factors(&prep, &cluster.key, cfg).map_err(|e| e.at_point(cluster.members[0]))?;
        let refs = unit_refs(&singles, &multi, &cluster.key, cfg);
        let mut acc = AccumulatedStats::zeros(params.d(), params.h());
        acc.factorizations = multi.len();
        accumulate_points(
            |y, p| prep.project_into(y, p),
            &refs,
            cluster.members.iter().map(|&n| data.point_slice(n)),
            &mut acc,
        );
        Ok(acc)
    })?;
    acc.factorizations += singles.count();
    Ok((acc, plan))
}

pub fn run_truncated_em(data: &Dataset, init: &ModelParams, cfg: &TruncationConfig, iters: usize) -> Result<EmRun> {
    run_truncated_em_with(data, init, cfg, &TruncatedOptions::iters(iters))
}

/// Truncated EM: per iteration, selection → state spaces → cluster plan →
/// truncated E-step on the worker pool → shared M-step.
pub fn run_truncated_em_with(
    data: &Dataset,
    init: &ModelParams,
    cfg: &TruncationConfig,
    opts: &TruncatedOptions,
) -> Result<EmRun> {
    cfg.validate(init.h())?;
    let pool = worker_pool(opts.em.workers)?;
    drive(data, init, &opts.em, &pool, |params, pool| {
        truncated_accumulate(params, data, cfg, &opts.scheduling, pool).map(|(acc, _)| acc)
    })
}

/// `⟨s⊙z⟩` of every point under its truncated posterior, `H × N`.
pub fn truncated_posterior_means(
    params: &ModelParams,
    data: &Dataset,
    cfg: &TruncationConfig,
    scheduling: &Scheduling,
    workers: usize,
) -> Result<DMatrix<f64>> {
    check_data(params, data)?;
    cfg.validate(params.h())?;
    let pool = worker_pool(workers)?;
    let prep = PreparedModel::new(params)?;
    let singles = SingletonFactors::new(&prep)?;
    let keys = select_all(&prep, &singles, data, cfg.h_prime, &pool);
    let plan = make_plan(&keys, scheduling)?;
    let h = params.h();
    let parts: Vec<Vec<(usize, Vec<f64>)>> = pool.install(|| {
        plan.clusters
            .par_iter()
            .map(|cluster| {
                let multi = unit_factors(&prep, &cluster.key, cfg).map_err(|e| e.at_point(cluster.members[0]))?;
                let refs = unit_refs(&singles, &multi, &cluster.key, cfg);
                let mut proj = PointProjection::default();
                let mut post = StatePosterior::default();
                Ok(cluster
                    .members
                    .iter()
                    .map(|&n| {
                        prep.project_into(data.point_slice(n), &mut proj);
                        post.fill(&refs, &proj);
                        let mut esz = vec![0.0; h];
                        for (j, f) in refs.iter().enumerate() {
                            let act = f.active();
                            for (a, &k) in post.kappa_of(j, act.len()).iter().zip(act) {
                                esz[k] += post.weights[j] * a;
                            }
                        }
                        (n, esz)
                    })
                    .collect())
            })
            .collect::<Result<_>>()
    })?;
    let mut out = DMatrix::zeros(h, data.n());
    for (n, esz) in parts.into_iter().flatten() {
        out.set_column(n, &nalgebra::DVector::from_vec(esz));
    }
    Ok(out)
}

/// Per-point `Q` values for the state spaces the selection function builds
/// at `params`.
pub fn q_values(params: &ModelParams, data: &Dataset, cfg: &TruncationConfig, workers: usize) -> Result<Vec<f64>> {
    check_data(params, data)?;
    check_enumerable(params.h())?;
    cfg.validate(params.h())?;
    let pool = worker_pool(workers)?;
    let prep = PreparedModel::new(params)?;
    let singles = SingletonFactors::new(&prep)?;
    let keys = select_all(&prep, &singles, data, cfg.h_prime, &pool);
    let all = all_state_factors(&prep)?;
    let max_k = params.h();
    let n_chunks = data.n().div_ceil(EXACT_CHUNK);
    let chunks: Vec<Vec<f64>> = pool.install(|| {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut proj = PointProjection::default();
                let mut kappa = vec![0.0; max_k];
                let mut inside = Vec::new();
                let mut total = Vec::with_capacity(all.len());
                let hi = ((c + 1) * EXACT_CHUNK).min(data.n());
                (c * EXACT_CHUNK..hi)
                    .map(|n| {
                        prep.project_into(data.point_slice(n), &mut proj);
                        inside.clear();
                        total.clear();
                        let key = &keys[n];
                        for f in &all {
                            let act = f.active();
                            let lj = f.eval(&proj, &mut kappa[..act.len()]);
                            total.push(lj);
                            let in_space = (act.len() <= cfg.gamma && act.iter().all(|i| key.binary_search(i).is_ok()))
                                || (cfg.include_singletons && act.len() == 1);
                            if in_space {
                                inside.push(lj);
                            }
                        }
                        (log_sum_exp(&inside) - log_sum_exp(&total)).exp().min(1.0)
                    })
                    .collect()
            })
            .collect()
    });
    Ok(chunks.into_iter().flatten().collect())
}

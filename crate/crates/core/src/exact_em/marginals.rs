use nalgebra::DMatrix;
use rayon::prelude::*;

use super::estep::{all_state_factors, check_data, worker_pool, EXACT_CHUNK};
use crate::error::Result;
use crate::model::{check_enumerable, Dataset, ModelParams, PointProjection, PreparedModel, StateFactor, StatePosterior};

/// Per-point marginals of the exact binary posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorMarginals {
    /// `p(s_h = 1 | y_n)`, `H × N`.
    pub activation: DMatrix<f64>,
    /// `p(|s| = i | y_n)` for `i = 0..=H`, `(H+1) × N`.
    pub popcount: DMatrix<f64>,
}

pub fn posterior_marginals(params: &ModelParams, data: &Dataset, workers: usize) -> Result<PosteriorMarginals> {
    check_data(params, data)?;
    check_enumerable(params.h())?;
    let h = params.h();
    let pool = worker_pool(workers)?;
    let prep = PreparedModel::new(params)?;
    let factors = all_state_factors(&prep)?;
    let refs: Vec<&StateFactor> = factors.iter().collect();
    let n_chunks = data.n().div_ceil(EXACT_CHUNK);
    let chunks: Vec<Vec<(Vec<f64>, Vec<f64>)>> = pool.install(|| {
        (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut proj = PointProjection::default();
                let mut post = StatePosterior::default();
                let hi = ((c + 1) * EXACT_CHUNK).min(data.n());
                (c * EXACT_CHUNK..hi)
                    .map(|n| {
                        prep.project_into(data.point_slice(n), &mut proj);
                        post.fill(&refs, &proj);
                        let mut act = vec![0.0; h];
                        let mut pop = vec![0.0; h + 1];
                        for (f, &w) in refs.iter().zip(&post.weights) {
                            pop[f.active().len()] += w;
                            for &k in f.active() {
                                act[k] += w;
                            }
                        }
                        (act, pop)
                    })
                    .collect()
            })
            .collect()
    });
    let mut activation = DMatrix::zeros(h, data.n());
    let mut popcount = DMatrix::zeros(h + 1, data.n());
    for (n, (act, pop)) in chunks.into_iter().flatten().enumerate() {
        activation.column_mut(n).copy_from_slice(&act);
        popcount.column_mut(n).copy_from_slice(&pop);
    }
    Ok(PosteriorMarginals { activation, popcount })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::bars_dataset;
    use crate::model::binary_posterior;

    #[test]
    fn matches_enumerated_posterior() {
        let (data, truth) = bars_dataset(4, 12, 5).unwrap();
        let m = posterior_marginals(&truth, &data, 2).unwrap();
        for n in 0..data.n() {
            let post = binary_posterior(&truth, &data.point(n).into_owned()).unwrap();
            for k in 0..4 {
                let want: f64 = post.iter().filter(|(s, _)| s.is_active(k)).map(|(_, p)| p).sum();
                assert!((m.activation[(k, n)] - want).abs() < 1e-10);
            }
            for i in 0..=4 {
                let want: f64 = post.iter().filter(|(s, _)| s.popcount() == i).map(|(_, p)| p).sum();
                assert!((m.popcount[(i, n)] - want).abs() < 1e-10);
            }
            assert!((m.popcount.column(n).sum() - 1.0).abs() < 1e-12);
        }
    }
}

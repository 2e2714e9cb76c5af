use nalgebra::DVector;

use super::StateSpace;
use crate::error::{Error, Result};
use crate::exact_em::{accumulate_points, AccumulatedStats, SufficientStats};
use crate::linalg::log_sum_exp;
use crate::model::{check_enumerable, BinaryState, ModelParams, PointProjection, PreparedModel, StateFactor};

/// Factorizations of the zero state and all singletons, shared by every
/// data point in an iteration.
pub(crate) struct SingletonFactors {
    pub zero: StateFactor,
    pub singles: Vec<StateFactor>,
}

impl SingletonFactors {
    pub fn new(prep: &PreparedModel) -> Result<Self> {
        let h = prep.h();
        Ok(SingletonFactors {
            zero: prep.factor_state(&BinaryState::zeros(h))?,
            singles: (0..h)
                .map(|i| prep.factor_state(&BinaryState::singleton(h, i)))
                .collect::<Result<_>>()?,
        })
    }

    pub fn count(&self) -> usize {
        1 + self.singles.len()
    }

    /// `S_h = log N(y; W̃_{s_h} μ, C_{s_h})`, the singleton joint without its prior.
    pub fn scores_into(&self, proj: &PointProjection, out: &mut Vec<f64>) {
        out.clear();
        let mut kappa = [0.0];
        for f in &self.singles {
            out.push(f.eval(proj, &mut kappa) - f.log_prior());
        }
    }
}

/// Selection scores of every latent for one observation.
pub fn selection_scores(params: &ModelParams, y: &DVector<f64>) -> Result<DVector<f64>> {
    check_point(params, y)?;
    let prep = PreparedModel::new(params)?;
    let singles = SingletonFactors::new(&prep)?;
    let mut out = Vec::new();
    singles.scores_into(&prep.project(y.as_slice()), &mut out);
    Ok(DVector::from_vec(out))
}

fn check_point(params: &ModelParams, y: &DVector<f64>) -> Result<()> {
    if y.len() != params.d() {
        return Err(Error::dims("observation", params.d(), y.len()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite observation".into()));
    }
    Ok(())
}

fn space_factors(prep: &PreparedModel, space: &StateSpace) -> Result<Vec<StateFactor>> {
    if space.is_empty() {
        return Err(Error::InvalidInput("empty state space".into()));
    }
    space.states().iter().map(|s| prep.factor_state(s)).collect()
}

/// Expectations with the posterior restricted to, and renormalized within,
/// `space`.
pub fn truncated_expectations(params: &ModelParams, y: &DVector<f64>, space: &StateSpace) -> Result<SufficientStats> {
    check_point(params, y)?;
    let prep = PreparedModel::new(params)?;
    let factors = space_factors(&prep, space)?;
    let refs: Vec<&StateFactor> = factors.iter().collect();
    let mut acc = AccumulatedStats::zeros(params.d(), params.h());
    accumulate_points(|v, p| prep.project_into(v, p), &refs, std::iter::once(y.as_slice()), &mut acc);
    Ok(acc.stats)
}

/// `log Σ_{s∈space} p(y, s | Θ)`.
pub fn restricted_log_marginal(params: &ModelParams, y: &DVector<f64>, space: &StateSpace) -> Result<f64> {
    check_point(params, y)?;
    let prep = PreparedModel::new(params)?;
    let proj = prep.project(y.as_slice());
    let factors = space_factors(&prep, space)?;
    Ok(restricted_sum(&factors.iter().collect::<Vec<_>>(), &proj))
}

pub(crate) fn restricted_sum(factors: &[&StateFactor], proj: &PointProjection) -> f64 {
    let max_k = factors.iter().map(|f| f.active().len()).max().unwrap_or(0);
    let mut kappa = vec![0.0; max_k];
    let logs: Vec<f64> = factors.iter().map(|f| f.eval(proj, &mut kappa[..f.active().len()])).collect();
    log_sum_exp(&logs)
}

/// Fraction of posterior mass inside `space`:
/// `Σ_{s∈K} p(y,s|Θ) / Σ_s p(y,s|Θ)`.
pub fn q_value(params: &ModelParams, y: &DVector<f64>, space: &StateSpace) -> Result<f64> {
    check_enumerable(params.h())?;
    let inside = restricted_log_marginal(params, y, space)?;
    let all = restricted_log_marginal(params, y, &StateSpace::full(params.h()))?;
    Ok((inside - all).exp().min(1.0))
}

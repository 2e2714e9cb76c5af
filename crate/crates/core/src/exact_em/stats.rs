use nalgebra::{DMatrix, DVector};

use crate::linalg::Merge;
use crate::model::{PointProjection, StateFactor, StatePosterior};

/// Posterior expectations `⟨s⟩`, `⟨s sᵀ⟩`, `⟨s⊙z⟩` and
/// `⟨(s⊙z)(s⊙z)ᵀ⟩`, either for a single point or summed over points.
#[derive(Clone, Debug, PartialEq)]
pub struct SufficientStats {
    pub es: DVector<f64>,
    pub ess: DMatrix<f64>,
    pub esz: DVector<f64>,
    pub eszsz: DMatrix<f64>,
    pub n_count: usize,
}

impl SufficientStats {
    pub fn zeros(h: usize) -> Self {
        SufficientStats {
            es: DVector::zeros(h),
            ess: DMatrix::zeros(h, h),
            esz: DVector::zeros(h),
            eszsz: DMatrix::zeros(h, h),
            n_count: 0,
        }
    }

    pub fn h(&self) -> usize {
        self.es.len()
    }

    pub fn add(&mut self, other: &SufficientStats) {
        self.es += &other.es;
        self.ess += &other.ess;
        self.esz += &other.esz;
        self.eszsz += &other.eszsz;
        self.n_count += other.n_count;
    }

    pub fn max_abs_diff(&self, other: &SufficientStats) -> f64 {
        let v = |a: &DVector<f64>, b: &DVector<f64>| (a - b).amax();
        let m = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax();
        v(&self.es, &other.es)
            .max(m(&self.ess, &other.ess))
            .max(v(&self.esz, &other.esz))
            .max(m(&self.eszsz, &other.eszsz))
    }
}

/// Everything the M-step needs, summed over a set of data points, plus
/// E-step diagnostics.
#[derive(Clone, Debug)]
pub struct AccumulatedStats {
    pub stats: SufficientStats,
    /// `Σ_n y⁽ⁿ⁾ ⟨s⊙z⟩ₙᵀ`, `D × H`.
    pub y_esz: DMatrix<f64>,
    /// `Σ_n log Σ_{s∈K_n} p(y⁽ⁿ⁾, s | Θ)`; the exact log-likelihood when every
    /// `K_n` is the full state space.
    pub log_likelihood: f64,
    /// Points whose weights all underflowed and fell back to uniform.
    pub degenerate: usize,
    /// Number of (point, state) joint evaluations.
    pub state_evals: usize,
    /// Number of state-dependent factorizations performed.
    pub factorizations: usize,
}

impl AccumulatedStats {
    pub fn zeros(d: usize, h: usize) -> Self {
        AccumulatedStats {
            stats: SufficientStats::zeros(h),
            y_esz: DMatrix::zeros(d, h),
            log_likelihood: 0.0,
            degenerate: 0,
            state_evals: 0,
            factorizations: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.stats.n_count
    }
}

impl Merge for AccumulatedStats {
    fn merge(&mut self, other: Self) {
        self.stats.add(&other.stats);
        self.y_esz += &other.y_esz;
        self.log_likelihood += other.log_likelihood;
        self.degenerate += other.degenerate;
        self.state_evals += other.state_evals;
        self.factorizations += other.factorizations;
    }
}

/// Accumulates the statistics of `members` (indices into `points`) under
/// the posterior restricted to `factors`.
///
/// The `Λ`, `⟨s⟩` and `⟨s sᵀ⟩` contributions depend on the point only through
/// the weight, so they are summed per state and added once at the end.
pub(crate) fn accumulate_points<'a>(
    project: impl Fn(&[f64], &mut PointProjection),
    factors: &[&StateFactor],
    points: impl Iterator<Item = &'a [f64]>,
    acc: &mut AccumulatedStats,
) {
    let h = acc.stats.h();
    let d = acc.y_esz.nrows();
    let mut proj = PointProjection::default();
    let mut post = StatePosterior::default();
    let mut state_mass = vec![0.0; factors.len()];
    let mut esz_n = vec![0.0; h];
    for y in points {
        project(y, &mut proj);
        post.fill(factors, &proj);
        acc.state_evals += factors.len();
        acc.stats.n_count += 1;
        if post.degenerate {
            acc.degenerate += 1;
        } else {
            acc.log_likelihood += post.log_norm;
        }
        esz_n.iter_mut().for_each(|v| *v = 0.0);
        for (j, f) in factors.iter().enumerate() {
            let q = post.weights[j];
            if q == 0.0 {
                continue;
            }
            state_mass[j] += q;
            let act = f.active();
            let kappa = post.kappa_of(j, act.len());
            for (a, &ha) in act.iter().enumerate() {
                let qa = q * kappa[a];
                esz_n[ha] += qa;
                for (b, &hb) in act.iter().enumerate() {
                    acc.stats.eszsz[(ha, hb)] += qa * kappa[b];
                }
            }
        }
        for (k, &v) in esz_n.iter().enumerate() {
            acc.stats.esz[k] += v;
            if v != 0.0 {
                let mut col = acc.y_esz.column_mut(k);
                for r in 0..d {
                    col[r] += y[r] * v;
                }
            }
        }
    }
    for (j, f) in factors.iter().enumerate() {
        let m = state_mass[j];
        if m == 0.0 {
            continue;
        }
        let act = f.active();
        let k = act.len();
        let lam = f.lambda();
        for (a, &ha) in act.iter().enumerate() {
            acc.stats.es[ha] += m;
            for (b, &hb) in act.iter().enumerate() {
                acc.stats.ess[(ha, hb)] += m;
                acc.stats.eszsz[(ha, hb)] += m * lam[a * k + b];
            }
        }
    }
}

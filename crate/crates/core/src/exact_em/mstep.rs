use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::stats::AccumulatedStats;
use crate::error::{Error, Result};
use crate::linalg::{clamp_eigenvalues, symmetrize, PdFactor};
use crate::model::{Dataset, ModelParams};

/// Latents with total expected activation below `DEAD_MASS · N` keep their
/// previous `W` column, `μ` entry and `Ψ` row/column.
pub const DEAD_MASS: f64 = 1e-12;

/// Structure imposed on the slab covariance by the M-step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlabCovariance {
    /// Element-wise ratio update for every entry. Not a stationary point of
    /// the free energy for `μ` and the off-diagonal `Ψ` entries, and can
    /// leave `Ψ` indefinite (then eigenvalue-clamped).
    Full,
    /// Ratio update on the diagonal, off-diagonal entries fixed at zero.
    /// Every block is then an exact maximizer of the free energy.
    #[default]
    Diagonal,
}

impl std::str::FromStr for SlabCovariance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(SlabCovariance::Full),
            "diagonal" => Ok(SlabCovariance::Diagonal),
            other => Err(Error::InvalidConfig(format!("unknown slab covariance {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MStepOptions {
    pub slab: SlabCovariance,
}

/// What the M-step had to patch up.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MStepReport {
    /// Latents whose parameters were held at their previous value.
    pub held: Vec<usize>,
    /// `Ψ` needed an eigenvalue floor to stay positive definite.
    pub psi_clamped: bool,
    /// `Σ` needed an eigenvalue floor to stay positive definite.
    pub sigma_clamped: bool,
}

/// Closed-form M-step with default options.
pub fn mstep(acc: &AccumulatedStats, data: &Dataset, old: &ModelParams) -> Result<ModelParams> {
    mstep_with(acc, data, old, MStepOptions::default()).map(|(p, _)| p)
}

/// All blocks are computed from the same statistics and applied together.
pub fn mstep_with(
    acc: &AccumulatedStats,
    data: &Dataset,
    old: &ModelParams,
    opts: MStepOptions,
) -> Result<(ModelParams, MStepReport)> {
    let (d, h) = (old.d(), old.h());
    let st = &acc.stats;
    if st.h() != h || acc.y_esz.shape() != (d, h) || data.d() != d {
        return Err(Error::dims("M-step statistics", format!("D = {d}, H = {h}"), format!("{:?}", acc.y_esz.shape())));
    }
    let n = st.n_count as f64;
    if st.n_count == 0 {
        return Err(Error::InvalidInput("M-step needs at least one data point".into()));
    }
    let mut report = MStepReport::default();
    let live: Vec<usize> = (0..h)
        .filter(|&k| st.es[k] > DEAD_MASS * n && st.eszsz[(k, k)] > 0.0)
        .collect();
    report.held = (0..h).filter(|k| !live.contains(k)).collect();

    let w = update_basis(acc, old, &live)?;

    let mut pi = &st.es / n;
    for p in pi.iter_mut() {
        *p = p.clamp(crate::model::PI_FLOOR, 1.0 - crate::model::PI_FLOOR);
    }

    let mut mu = old.mu.clone();
    for &k in &live {
        mu[k] = st.esz[k] / st.es[k];
    }

    let mut psi = old.psi.clone();
    for &a in &live {
        for &b in &live {
            let denom = st.ess[(a, b)];
            if denom > DEAD_MASS * n {
                psi[(a, b)] = (st.eszsz[(a, b)] - denom * mu[a] * mu[b]) / denom;
            }
        }
    }
    if opts.slab == SlabCovariance::Diagonal {
        for a in 0..h {
            for b in 0..h {
                if a != b {
                    psi[(a, b)] = 0.0;
                }
            }
        }
    }
    symmetrize(&mut psi);
    report.psi_clamped = ensure_pd(&mut psi);

    let mut sigma = sigma_simplified(acc, data, &w);
    if cfg!(debug_assertions) && report.held.is_empty() && d * h <= 64 {
        let full = sigma_full_residual(acc, data, &w);
        let scale = 1.0 + full.amax();
        debug_assert!(
            (&full - &sigma).amax() <= 1e-8 * scale,
            "simplified and full-residual noise updates disagree"
        );
    }
    symmetrize(&mut sigma);
    let mut params = ModelParams {
        w,
        sigma,
        pi,
        mu,
        psi,
        noise_mode: old.noise_mode,
    };
    params.project_noise();
    report.sigma_clamped = ensure_pd(&mut params.sigma);
    if report.sigma_clamped {
        params.project_noise();
    }
    Ok((params, report))
}

/// Solves `W · Σₙ⟨(s⊙z)(s⊙z)ᵀ⟩ₙ = Σₙ y⁽ⁿ⁾⟨s⊙z⟩ₙᵀ` on the live latents.
fn update_basis(acc: &AccumulatedStats, old: &ModelParams, live: &[usize]) -> Result<DMatrix<f64>> {
    let mut w = old.w.clone();
    if live.is_empty() {
        return Ok(w);
    }
    let a = crate::linalg::submatrix(&acc.stats.eszsz, live);
    let b = crate::linalg::subcolumns(&acc.y_esz, live);
    let f = PdFactor::new(&a, "basis update")?;
    // W_live = B A⁻¹  ⇔  A W_liveᵀ = Bᵀ
    let wt = f.solve_mat(&b.transpose());
    for (j, &k) in live.iter().enumerate() {
        w.set_column(k, &wt.row(j).transpose());
    }
    Ok(w)
}

fn data_scatter(data: &Dataset) -> DMatrix<f64> {
    let y = data.columns();
    y * y.transpose()
}

/// `(1/N) Σₙ [y yᵀ] − (1/N) W (Σₙ⟨(s⊙z)(s⊙z)ᵀ⟩ₙ) Wᵀ`, valid at the updated `W`.
pub fn sigma_simplified(acc: &AccumulatedStats, data: &Dataset, w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = acc.n() as f64;
    (data_scatter(data) - w * &acc.stats.eszsz * w.transpose()) / n
}

/// `(1/N) Σₙ ⟨(y − W s⊙z)(y − W s⊙z)ᵀ⟩ₙ` for any `W`.
pub fn sigma_full_residual(acc: &AccumulatedStats, data: &Dataset, w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = acc.n() as f64;
    let cross = &acc.y_esz * w.transpose();
    (data_scatter(data) - &cross - cross.transpose() + w * &acc.stats.eszsz * w.transpose()) / n
}

/// Raises eigenvalues to a small floor if `m` is not numerically positive
/// definite. Returns whether anything changed.
fn ensure_pd(m: &mut DMatrix<f64>) -> bool {
    let dim = m.nrows();
    let scale = (m.trace() / dim as f64).abs();
    if let Ok(f) = PdFactor::new(m, "M-step covariance") {
        if f.jitter == 0.0 && m.diagonal().iter().all(|&v| v > 0.0) {
            return false;
        }
    }
    let floor = (1e-9 * scale).max(1e-12);
    clamp_eigenvalues(m, floor);
    true
}

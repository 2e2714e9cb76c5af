//! Closed-form densities and posteriors of the spike-and-slab model,
//! evaluated directly in observation space.
//!
//! These are the reference routes. The E-steps use [`super::PreparedModel`],
//! which computes the same quantities through latent-space identities and is
//! tested against the functions here.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{BinaryState, ModelParams, H_EXACT_MAX, PI_FLOOR};
use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, subcolumns, submatrix, subvector, PdFactor, LN_2PI};

/// Posterior `N(z; κ, Λ)` over the slab given a binary state and an
/// observation, embedded into `H` dimensions (zeros at inactive latents).
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalGaussian {
    pub kappa: DVector<f64>,
    pub lambda: DMatrix<f64>,
    /// `log B(s; π) + log N(y; W̃_s μ, C_s)`.
    pub log_weight: f64,
}

/// `W̃_s`: `W` with the columns of inactive latents zeroed.
pub fn masked_basis(w: &DMatrix<f64>, s: &BinaryState) -> Result<DMatrix<f64>> {
    if w.ncols() != s.h() {
        return Err(Error::dims("masked_basis", w.ncols(), s.h()));
    }
    let mut out = DMatrix::zeros(w.nrows(), w.ncols());
    for &h in s.active() {
        out.set_column(h, &w.column(h));
    }
    Ok(out)
}

/// `log B(s; π)` with `π` clamped to `[PI_FLOOR, 1 - PI_FLOOR]`.
pub fn log_prior(pi: &DVector<f64>, s: &BinaryState) -> f64 {
    let mut acc = 0.0;
    let mut next = s.active().iter().peekable();
    for (h, &p) in pi.iter().enumerate() {
        let p = p.clamp(PI_FLOOR, 1.0 - PI_FLOOR);
        if next.peek() == Some(&&h) {
            next.next();
            acc += p.ln();
        } else {
            acc += (-p).ln_1p();
        }
    }
    acc
}

/// `C_s = Σ + W̃_s Ψ W̃_sᵀ`.
pub fn state_covariance(params: &ModelParams, s: &BinaryState) -> Result<DMatrix<f64>> {
    let wm = masked_basis(&params.w, s)?;
    let mut c = &params.sigma + &wm * &params.psi * wm.transpose();
    crate::linalg::symmetrize(&mut c);
    Ok(c)
}

fn check_y(params: &ModelParams, y: &DVector<f64>) -> Result<()> {
    if y.len() != params.d() {
        return Err(Error::dims("observation", params.d(), y.len()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite observation".into()));
    }
    Ok(())
}

fn log_gauss(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>, s: &BinaryState) -> Result<f64> {
    let text = || s.to_string();
    let f = PdFactor::with_state(cov, "state covariance", Some(&text))?;
    let r = y - mean;
    Ok(-0.5 * (y.len() as f64 * LN_2PI + f.log_det() + f.inv_quad(&r)))
}

/// `log p(y, s | Θ) = log B(s; π) + log N(y; W̃_s μ, C_s)`.
pub fn log_joint_ys(params: &ModelParams, s: &BinaryState, y: &DVector<f64>) -> Result<f64> {
    check_y(params, y)?;
    let wm = masked_basis(&params.w, s)?;
    let mean = &wm * &params.mu;
    let cov = state_covariance(params, s)?;
    Ok(log_prior(&params.pi, s) + log_gauss(y, &mean, &cov, s)?)
}

/// Posterior over the slab for a fixed binary state, computed on the
/// active sub-dimensions and embedded with zeros.
pub fn conditional_gaussian(
    params: &ModelParams,
    s: &BinaryState,
    y: &DVector<f64>,
) -> Result<ConditionalGaussian> {
    check_y(params, y)?;
    if s.h() != params.h() {
        return Err(Error::dims("binary state", params.h(), s.h()));
    }
    let h = params.h();
    let log_weight = log_joint_ys(params, s, y)?;
    let act = s.active();
    let mut kappa = DVector::zeros(h);
    let mut lambda = DMatrix::zeros(h, h);
    if act.is_empty() {
        return Ok(ConditionalGaussian {
            kappa,
            lambda,
            log_weight,
        });
    }
    let text = || s.to_string();
    let sigma = PdFactor::new(&params.sigma, "noise covariance")?;
    let w_a = subcolumns(&params.w, act);
    let mu_a = subvector(&params.mu, act);
    let psi_a = PdFactor::with_state(&submatrix(&params.psi, act), "slab covariance", Some(&text))?;
    let sinv_w = sigma.solve_mat(&w_a);
    let precision = w_a.transpose() * &sinv_w + psi_a.inverse();
    let lam = PdFactor::with_state(&precision, "posterior precision", Some(&text))?.inverse();
    let resid = y - &w_a * &mu_a;
    let k_a = &mu_a + &lam * (sinv_w.transpose() * resid);
    for (i, &hi) in act.iter().enumerate() {
        kappa[hi] = k_a[i];
        for (j, &hj) in act.iter().enumerate() {
            lambda[(hi, hj)] = lam[(i, j)];
        }
    }
    Ok(ConditionalGaussian {
        kappa,
        lambda,
        log_weight,
    })
}

pub(crate) fn check_enumerable(h: usize) -> Result<()> {
    if h > H_EXACT_MAX {
        Err(Error::Capacity { h, max: H_EXACT_MAX })
    } else {
        Ok(())
    }
}

/// All `2^H` states in canonical order.
pub fn all_states(h: usize) -> Result<Vec<BinaryState>> {
    check_enumerable(h)?;
    let mut v: Vec<BinaryState> = (0..1u64 << h).map(|m| BinaryState::from_mask(h, m)).collect();
    v.sort();
    Ok(v)
}

/// `log p(y | Θ)` by exhaustive log-sum-exp over all binary states.
pub fn log_marginal_likelihood(params: &ModelParams, y: &DVector<f64>) -> Result<f64> {
    let states = all_states(params.h())?;
    let logs = states
        .iter()
        .map(|s| log_joint_ys(params, s, y))
        .collect::<Result<Vec<_>>>()?;
    Ok(log_sum_exp(&logs))
}

/// Exact `p(s | y, Θ)` over all `2^H` states.
pub fn binary_posterior(params: &ModelParams, y: &DVector<f64>) -> Result<BTreeMap<BinaryState, f64>> {
    let states = all_states(params.h())?;
    let logs = states
        .iter()
        .map(|s| log_joint_ys(params, s, y))
        .collect::<Result<Vec<_>>>()?;
    let norm = log_sum_exp(&logs);
    Ok(states.into_iter().zip(logs).map(|(s, l)| (s, (l - norm).exp())).collect())
}

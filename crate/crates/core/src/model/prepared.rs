//! Latent-space evaluation of per-state quantities.
//!
//! With `M = Wᵀ Σ⁻¹ W` and `u = Wᵀ Σ⁻¹ y`, everything the E-step needs for a
//! state with active set `A` follows from `k × k` algebra (`k = |A|`):
//!
//! ```text
//! Λ_A⁻¹     = M_AA + Ψ_AA⁻¹
//! log|C_s|  = log|Σ| + log|Ψ_AA| + log|Λ_A⁻¹|
//! v         = u_A − M_AA μ_A
//! κ_A       = μ_A + Λ_A v
//! (y−W̃μ)ᵀC_s⁻¹(y−W̃μ) = yᵀΣ⁻¹y − 2 μ_Aᵀu_A + μ_AᵀM_AAμ_A − vᵀΛ_A v
//! ```
//!
//! The state-dependent part ([`StateFactor`]) is shared by every data point,
//! and the per-point part ([`PointProjection`]) is shared by every state.

use nalgebra::DMatrix;

use super::{BinaryState, ModelParams, PI_FLOOR};
use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, submatrix, PdFactor, LN_2PI};

#[derive(Clone, Debug)]
pub struct PreparedModel {
    d: usize,
    h: usize,
    sigma: PdFactor,
    w: DMatrix<f64>,
    gram: DMatrix<f64>,
    log_det_sigma: f64,
    log_odds: Vec<f64>,
    log_prior_zero: f64,
    mu: Vec<f64>,
    psi: DMatrix<f64>,
}

/// Per-observation quantities: `u = Wᵀ Σ⁻¹ y` and `yᵀ Σ⁻¹ y`.
#[derive(Clone, Debug, Default)]
pub struct PointProjection {
    pub u: Vec<f64>,
    pub yq: f64,
}

/// Everything about one binary state that does not depend on the data point.
#[derive(Clone, Debug)]
pub struct StateFactor {
    state: BinaryState,
    /// `Λ_A`, row-major `k × k`.
    lambda: Vec<f64>,
    mu_a: Vec<f64>,
    /// `M_AA μ_A`.
    c: Vec<f64>,
    /// `log B(s;π) − ½(D ln 2π + log|C_s|) − ½ μ_AᵀM_AAμ_A`.
    offset: f64,
    log_prior: f64,
    log_det_lambda: f64,
}

impl PreparedModel {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.check_shapes()?;
        let sigma = PdFactor::new(&params.sigma, "noise covariance")?;
        let sinv_w = sigma.solve_mat(&params.w);
        let mut gram = params.w.transpose() * &sinv_w;
        crate::linalg::symmetrize(&mut gram);
        let pis: Vec<f64> = params.pi.iter().map(|p| p.clamp(PI_FLOOR, 1.0 - PI_FLOOR)).collect();
        let log_prior_zero = pis.iter().map(|p| (-p).ln_1p()).sum();
        let log_odds = pis.iter().map(|p| p.ln() - (-p).ln_1p()).collect();
        Ok(PreparedModel {
            d: params.d(),
            h: params.h(),
            w: params.w.clone(),
            gram,
            log_det_sigma: sigma.log_det(),
            sigma,
            log_odds,
            log_prior_zero,
            mu: params.mu.iter().copied().collect(),
            psi: params.psi.clone(),
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn project(&self, y: &[f64]) -> PointProjection {
        let mut out = PointProjection::default();
        self.project_into(y, &mut out);
        out
    }

    /// Computes `u = Wᵀ Σ⁻¹ y` and `yᵀ Σ⁻¹ y`.
    pub fn project_into(&self, y: &[f64], out: &mut PointProjection) {
        debug_assert_eq!(y.len(), self.d);
        let d = self.d;
        let l = self.sigma.l_dirty();
        // forward then backward substitution: x = Σ⁻¹ y
        let mut x = y.to_vec();
        for i in 0..d {
            let mut acc = x[i];
            for j in 0..i {
                acc -= l[(i, j)] * x[j];
            }
            x[i] = acc / l[(i, i)];
        }
        let fwd_sq: f64 = x.iter().map(|v| v * v).sum();
        for i in (0..d).rev() {
            let mut acc = x[i];
            for j in (i + 1)..d {
                acc -= l[(j, i)] * x[j];
            }
            x[i] = acc / l[(i, i)];
        }
        out.yq = fwd_sq;
        out.u.clear();
        let wd = self.w.as_slice();
        for h in 0..self.h {
            let col = &wd[h * d..(h + 1) * d];
            out.u.push(col.iter().zip(&x).map(|(a, b)| a * b).sum());
        }
    }

    pub fn log_prior(&self, s: &BinaryState) -> f64 {
        self.log_prior_zero + s.active().iter().map(|&h| self.log_odds[h]).sum::<f64>()
    }

    /// Builds the state-dependent factorization for `s`.
    pub fn factor_state(&self, s: &BinaryState) -> Result<StateFactor> {
        if s.h() != self.h {
            return Err(Error::dims("binary state", self.h, s.h()));
        }
        let act = s.active();
        let k = act.len();
        let log_prior = self.log_prior(s);
        let base = -0.5 * (self.d as f64 * LN_2PI + self.log_det_sigma);
        if k == 0 {
            return Ok(StateFactor {
                state: s.clone(),
                lambda: Vec::new(),
                mu_a: Vec::new(),
                c: Vec::new(),
                offset: log_prior + base,
                log_prior,
                log_det_lambda: 0.0,
            });
        }
        let text = || s.to_string();
        let psi_f = PdFactor::with_state(&submatrix(&self.psi, act), "slab covariance", Some(&text))?;
        let mut precision = psi_f.inverse();
        for i in 0..k {
            for j in 0..k {
                precision[(i, j)] += self.gram[(act[i], act[j])];
            }
        }
        let prec_f = PdFactor::with_state(&precision, "posterior precision", Some(&text))?;
        let lam = prec_f.inverse();
        let mu_a: Vec<f64> = act.iter().map(|&h| self.mu[h]).collect();
        let c: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| self.gram[(act[i], act[j])] * mu_a[j]).sum())
            .collect();
        let mmm: f64 = mu_a.iter().zip(&c).map(|(a, b)| a * b).sum();
        let log_det_c = self.log_det_sigma + psi_f.log_det() + prec_f.log_det();
        let mut lambda = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                lambda.push(lam[(i, j)]);
            }
        }
        Ok(StateFactor {
            state: s.clone(),
            lambda,
            mu_a,
            c,
            offset: log_prior - 0.5 * (self.d as f64 * LN_2PI + log_det_c) - 0.5 * mmm,
            log_prior,
            log_det_lambda: -prec_f.log_det(),
        })
    }
}

impl StateFactor {
    pub fn state(&self) -> &BinaryState {
        &self.state
    }

    pub fn active(&self) -> &[usize] {
        self.state.active()
    }

    pub fn log_prior(&self) -> f64 {
        self.log_prior
    }

    pub fn log_det_lambda(&self) -> f64 {
        self.log_det_lambda
    }

    /// `Λ_A` as a row-major `k × k` slice.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Returns `log p(y, s | Θ)` and writes `κ_A` (length `k`) into `kappa`.
    #[inline]
    pub fn eval(&self, proj: &PointProjection, kappa: &mut [f64]) -> f64 {
        let act = self.state.active();
        let k = act.len();
        let mut lin = 0.0;
        let mut stack = [0.0f64; 32];
        let mut heap = Vec::new();
        let v: &mut [f64] = if k <= stack.len() {
            &mut stack[..k]
        } else {
            heap.resize(k, 0.0);
            &mut heap
        };
        for i in 0..k {
            let ui = proj.u[act[i]];
            lin += self.mu_a[i] * ui;
            v[i] = ui - self.c[i];
        }
        let mut vt = 0.0;
        for i in 0..k {
            let row = &self.lambda[i * k..(i + 1) * k];
            let t: f64 = row.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            vt += v[i] * t;
            kappa[i] = self.mu_a[i] + t;
        }
        self.offset - 0.5 * proj.yq + lin + 0.5 * vt
    }
}

/// Normalized posterior over a list of states for one observation.
#[derive(Clone, Debug, Default)]
pub struct StatePosterior {
    /// `log Σ_s p(y, s | Θ)` over the listed states.
    pub log_norm: f64,
    pub weights: Vec<f64>,
    /// Concatenated `κ_A` blocks; block `j` starts at `offsets[j]`.
    pub kappa: Vec<f64>,
    pub offsets: Vec<usize>,
    /// All weights underflowed or were non-finite; uniform weights were used.
    pub degenerate: bool,
}

impl StatePosterior {
    pub fn compute(factors: &[&StateFactor], proj: &PointProjection) -> Self {
        let mut out = StatePosterior::default();
        out.fill(factors, proj);
        out
    }

    pub fn fill(&mut self, factors: &[&StateFactor], proj: &PointProjection) {
        self.offsets.clear();
        self.weights.clear();
        let total: usize = factors.iter().map(|f| f.active().len()).sum();
        self.kappa.clear();
        self.kappa.resize(total, 0.0);
        let mut off = 0;
        for f in factors {
            let k = f.active().len();
            self.offsets.push(off);
            let lj = f.eval(proj, &mut self.kappa[off..off + k]);
            self.weights.push(lj);
            off += k;
        }
        let norm = log_sum_exp(&self.weights);
        if norm.is_finite() && self.weights.iter().all(|w| !w.is_nan()) {
            for w in self.weights.iter_mut() {
                *w = (*w - norm).exp();
            }
            self.log_norm = norm;
            self.degenerate = false;
        } else {
            let u = 1.0 / factors.len() as f64;
            self.weights.iter_mut().for_each(|w| *w = u);
            self.log_norm = norm;
            self.degenerate = true;
        }
    }

    pub fn kappa_of(&self, j: usize, k: usize) -> &[f64] {
        &self.kappa[self.offsets[j]..self.offsets[j] + k]
    }
}

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::{subcolumns, submatrix, subvector, PdFactor, LN_2PI};
use crate::model::{all_states, conditional_gaussian, log_prior, BinaryState, Dataset, ModelParams, NoiseMode};

struct StateTerm {
    state: BinaryState,
    q: f64,
    /// `κ_A` and `Λ_A` on the active subspace.
    kappa: DVector<f64>,
    lambda: DMatrix<f64>,
}

/// The exact posterior `q_n(s, z; Θ_old)` of every point, frozen so the
/// free energy can be evaluated at arbitrary `Θ`.
pub struct FrozenPosterior {
    points: Vec<Vec<StateTerm>>,
    entropy: f64,
    data: Dataset,
}

impl FrozenPosterior {
    pub fn new(old: &ModelParams, data: &Dataset) -> Result<Self> {
        super::estep::check_data(old, data)?;
        let states = all_states(old.h())?;
        let mut points = Vec::with_capacity(data.n());
        let mut entropy = 0.0;
        for n in 0..data.n() {
            let y = data.point(n).into_owned();
            let cgs = states
                .iter()
                .map(|s| conditional_gaussian(old, s, &y))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.at_point(n))?;
            let logs: Vec<f64> = cgs.iter().map(|c| c.log_weight).collect();
            let norm = crate::linalg::log_sum_exp(&logs);
            let mut terms = Vec::with_capacity(states.len());
            for (s, cg) in states.iter().zip(cgs) {
                let q = (cg.log_weight - norm).exp();
                let act = s.active();
                let lambda = submatrix(&cg.lambda, act);
                if q > 0.0 {
                    entropy -= q * (cg.log_weight - norm);
                    if !act.is_empty() {
                        let ld = PdFactor::new(&lambda, "posterior covariance")?.log_det();
                        entropy += q * 0.5 * (act.len() as f64 * (1.0 + LN_2PI) + ld);
                    }
                }
                terms.push(StateTerm {
                    state: s.clone(),
                    q,
                    kappa: subvector(&cg.kappa, act),
                    lambda,
                });
            }
            points.push(terms);
        }
        Ok(FrozenPosterior {
            points,
            entropy,
            data: data.clone(),
        })
    }

    /// Total entropy of the frozen posteriors.
    pub fn entropy(&self) -> f64 {
        self.entropy
    }

    /// `Σ_n ⟨log p(y⁽ⁿ⁾, s, z | Θ)⟩_{q_n}` plus the entropy of `q_n`.
    pub fn free_energy(&self, params: &ModelParams) -> Result<f64> {
        let d = params.d() as f64;
        let sigma = PdFactor::new(&params.sigma, "noise covariance")?;
        let sinv = sigma.inverse();
        let mut energy = 0.0;
        let first = self.points.first().map(|v| v.as_slice()).unwrap_or_default();
        let by_state = first
            .iter()
            .map(|t| {
                let act = t.state.active();
                if act.is_empty() {
                    return Ok(None);
                }
                let psi = PdFactor::new(&submatrix(&params.psi, act), "slab covariance")?;
                let w_a = subcolumns(&params.w, act);
                let m_aa = w_a.transpose() * &sinv * &w_a;
                let psi_inv = psi.inverse();
                Ok(Some((psi, psi_inv, w_a, m_aa)))
            })
            .collect::<Result<Vec<_>>>()?;
        for (n, terms) in self.points.iter().enumerate() {
            let y = self.data.point(n).into_owned();
            for (t, cached) in terms.iter().zip(&by_state) {
                if t.q == 0.0 {
                    continue;
                }
                let mut e = log_prior(&params.pi, &t.state);
                let resid = match cached {
                    None => y.clone(),
                    Some((psi, psi_inv, w_a, m_aa)) => {
                        let k = t.kappa.len() as f64;
                        let mu_a = subvector(&params.mu, t.state.active());
                        let dz = &t.kappa - &mu_a;
                        let tr = (psi_inv * &t.lambda).trace();
                        e += -0.5 * (k * LN_2PI + psi.log_det() + tr + psi.inv_quad(&dz));
                        e += -0.5 * (m_aa * &t.lambda).trace();
                        &y - w_a * &t.kappa
                    }
                };
                e += -0.5 * (d * LN_2PI + sigma.log_det() + sigma.inv_quad(&resid));
                energy += t.q * e;
            }
        }
        Ok(energy + self.entropy)
    }
}

/// `F(Θ_old, Θ)`: the free energy at `params` under the exact posterior at
/// `params_old`. Equals the log-likelihood when both arguments coincide.
pub fn free_energy(params: &ModelParams, params_old: &ModelParams, data: &Dataset) -> Result<f64> {
    FrozenPosterior::new(params_old, data)?.free_energy(params)
}

/// Largest central-difference free-energy gradient within each parameter
/// block, with the block's scale `max(1, max |θ|)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BlockGradients {
    pub w: (f64, f64),
    pub pi: (f64, f64),
    pub mu: (f64, f64),
    pub psi: (f64, f64),
    pub sigma: (f64, f64),
}

impl BlockGradients {
    /// Largest gradient relative to its block scale.
    pub fn max_relative(&self) -> f64 {
        [self.w, self.pi, self.mu, self.psi, self.sigma]
            .iter()
            .map(|(g, s)| g / s)
            .fold(0.0, f64::max)
    }
}

fn block_scale(m: &DMatrix<f64>) -> f64 {
    m.amax().max(1.0)
}

impl FrozenPosterior {
    /// Central-difference gradients of the free energy at `params`. Only
    /// the free entries are probed: the diagonal of `Ψ` when
    /// `diagonal_slab` is set, and the entries of `Σ` its noise mode leaves
    /// free (symmetric pairs are moved together).
    pub fn gradients(&self, params: &ModelParams, diagonal_slab: bool, rel_step: f64) -> Result<BlockGradients> {
        let (d, h) = (params.d(), params.h());
        let probe = |scale: f64, set: &dyn Fn(&mut ModelParams, f64)| -> Result<f64> {
            let step = rel_step * scale;
            let mut plus = params.clone();
            set(&mut plus, step);
            let mut minus = params.clone();
            set(&mut minus, -step);
            Ok(((self.free_energy(&plus)? - self.free_energy(&minus)?) / (2.0 * step)).abs())
        };
        let mut out = BlockGradients::default();

        let s = block_scale(&params.w);
        out.w.1 = s;
        for i in 0..d {
            for j in 0..h {
                out.w.0 = out.w.0.max(probe(s, &|p, e| p.w[(i, j)] += e)?);
            }
        }
        let pi_m = DMatrix::from_column_slice(h, 1, params.pi.as_slice());
        let s = block_scale(&pi_m);
        out.pi.1 = s;
        for i in 0..h {
            out.pi.0 = out.pi.0.max(probe(s, &|p, e| p.pi[i] += e)?);
        }
        let mu_m = DMatrix::from_column_slice(h, 1, params.mu.as_slice());
        let s = block_scale(&mu_m);
        out.mu.1 = s;
        for i in 0..h {
            out.mu.0 = out.mu.0.max(probe(s, &|p, e| p.mu[i] += e)?);
        }
        let s = block_scale(&params.psi);
        out.psi.1 = s;
        for i in 0..h {
            for j in i..h {
                if diagonal_slab && i != j {
                    continue;
                }
                out.psi.0 = out.psi.0.max(probe(s, &|p, e| {
                    p.psi[(i, j)] += e;
                    if i != j {
                        p.psi[(j, i)] += e;
                    }
                })?);
            }
        }
        let s = block_scale(&params.sigma);
        out.sigma.1 = s;
        match params.noise_mode {
            NoiseMode::Homoscedastic => {
                out.sigma.0 = probe(s, &|p, e| {
                    for i in 0..d {
                        p.sigma[(i, i)] += e;
                    }
                })?;
            }
            mode => {
                for i in 0..d {
                    for j in i..d {
                        if mode == NoiseMode::Diagonal && i != j {
                            continue;
                        }
                        out.sigma.0 = out.sigma.0.max(probe(s, &|p, e| {
                            p.sigma[(i, j)] += e;
                            if i != j {
                                p.sigma[(j, i)] += e;
                            }
                        })?);
                    }
                }
            }
        }
        Ok(out)
    }
}

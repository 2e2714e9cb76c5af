//! Seeded synthetic data generators.
//!
//! Every generator is a pure function of its arguments and seed; all
//! randomness comes from a [`ChaCha8Rng`] seeded with the given value.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Cauchy, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::PdFactor;
use crate::model::{Dataset, ModelParams, NoiseMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Data from the model itself with a perturbed orthogonal basis.
    SpikeSlab,
    Bars,
    /// Standard sparse coding with unit Laplace sources.
    LaplaceSc,
    /// Standard sparse coding with unit Cauchy sources.
    CauchySc,
}

/// Declarative description of a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub noise_sigma: f64,
    pub ortho_perturb_sigma: f64,
    pub seed: u64,
}

/// Ground-truth latents, one column per observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Latents {
    /// `H × N`, entries 0/1.
    pub s: DMatrix<f64>,
    /// `H × N` slab values (drawn for inactive units too).
    pub z: DMatrix<f64>,
}

/// Output of [`GeneratorSpec::generate`].
#[derive(Clone, Debug)]
pub struct Generated {
    pub data: Dataset,
    /// Generating basis `W_gen` (`D × H`).
    pub basis: DMatrix<f64>,
    /// Full generating parameters for model-based kinds.
    pub truth: Option<ModelParams>,
    pub latents: Option<Latents>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeavyTail {
    Laplace,
    Cauchy,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.d == 0 || self.n == 0 {
            return Err(Error::InvalidConfig("generator dimensions must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0) || !(self.ortho_perturb_sigma >= 0.0) {
            return Err(Error::InvalidConfig("generator noise levels must be >= 0".into()));
        }
        match self.kind {
            GeneratorKind::Bars => {
                if !self.h.is_multiple_of(2) {
                    return Err(Error::InvalidConfig(format!("bars need even H, got {}", self.h)));
                }
                let side = self.h / 2;
                if self.d != side * side {
                    return Err(Error::InvalidConfig(format!(
                        "bars with H = {} need D = {}, got {}",
                        self.h,
                        side * side,
                        self.d
                    )));
                }
            }
            _ => {
                if self.h > self.d {
                    return Err(Error::InvalidConfig(format!(
                        "orthogonal basis needs H <= D (H = {}, D = {})",
                        self.h, self.d
                    )));
                }
            }
        }
        Ok(())
    }

    /// Generates the dataset described by this spec.
    ///
    /// * `spike_slab`: basis from [`perturbed_orthogonal_basis`], `π = 1/H`,
    ///   `μ = 0`, `Ψ = I`, `Σ = noise_sigma²·I`.
    /// * `bars`: [`bars_dataset`]; `noise_sigma` and the perturbation are unused.
    /// * `laplace_sc` / `cauchy_sc`: heavy-tailed sources mixed by a
    ///   perturbed orthogonal basis.
    pub fn generate(&self) -> Result<Generated> {
        self.validate()?;
        let (h, d) = (self.h, self.d);
        let mut generated = match self.kind {
            GeneratorKind::Bars => {
                let (data, truth) = bars_dataset(h, self.n, self.seed)?;
                Generated {
                    data,
                    basis: truth.w.clone(),
                    truth: Some(truth),
                    latents: None,
                }
            }
            GeneratorKind::SpikeSlab => {
                let basis = perturbed_orthogonal_basis(h, d, self.ortho_perturb_sigma, self.seed)?;
                let truth = ModelParams::new(
                    basis.clone(),
                    DMatrix::identity(d, d) * self.noise_sigma.powi(2).max(1e-300),
                    DVector::from_element(h, 1.0 / h as f64),
                    DVector::zeros(h),
                    DMatrix::identity(h, h),
                    NoiseMode::Homoscedastic,
                )?;
                let (data, latents) = sample_spike_slab(&truth, self.n, self.seed.wrapping_add(1))?;
                Generated {
                    data,
                    basis,
                    truth: Some(truth),
                    latents: Some(latents),
                }
            }
            GeneratorKind::LaplaceSc | GeneratorKind::CauchySc => {
                let prior = if self.kind == GeneratorKind::LaplaceSc {
                    HeavyTail::Laplace
                } else {
                    HeavyTail::Cauchy
                };
                let basis = perturbed_orthogonal_basis(h, d, self.ortho_perturb_sigma, self.seed)?;
                let data =
                    sample_sparse_coding(prior, &basis, self.noise_sigma, self.n, self.seed.wrapping_add(1))?;
                Generated {
                    data,
                    basis,
                    truth: None,
                    latents: None,
                }
            }
        };
        generated.data = generated.data.with_provenance(self.clone());
        Ok(generated)
    }
}

/// Draws `n` observations from the model: `s ~ B(π)`, `z ~ N(μ, Ψ)`,
/// `y = W(s⊙z) + ε` with `ε ~ N(0, Σ)`.
pub fn sample_spike_slab(params: &ModelParams, n: usize, seed: u64) -> Result<(Dataset, Latents)> {
    params.check_shapes()?;
    if n == 0 {
        return Err(Error::InvalidInput("N must be >= 1".into()));
    }
    let (d, h) = (params.d(), params.h());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi_l = PdFactor::new(&params.psi, "slab covariance")?.l_dirty().lower_triangle();
    let sigma_l = PdFactor::new(&params.sigma, "noise covariance")?.l_dirty().lower_triangle();
    let bern: Vec<Bernoulli> = params
        .pi
        .iter()
        .map(|&p| Bernoulli::new(p.clamp(0.0, 1.0)).map_err(|e| Error::InvalidInput(e.to_string())))
        .collect::<Result<_>>()?;
    let mut s = DMatrix::zeros(h, n);
    let mut z = DMatrix::zeros(h, n);
    let mut y = DMatrix::zeros(d, n);
    for col in 0..n {
        for (k, b) in bern.iter().enumerate() {
            s[(k, col)] = if b.sample(&mut rng) { 1.0 } else { 0.0 };
        }
        let e = standard_normal_vec(&mut rng, h);
        let zc = &params.mu + &psi_l * e;
        z.set_column(col, &zc);
        let sz = zc.component_mul(&s.column(col));
        let noise = &sigma_l * standard_normal_vec(&mut rng, d);
        y.set_column(col, &(&params.w * sz + noise));
    }
    Ok((Dataset::from_columns(y)?, Latents { s, z }))
}

fn standard_normal_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `H` bars on a `H/2 × H/2` grid: columns `0..H/2` are horizontal bars
/// (rows of the grid), the rest vertical bars. Each bar has value ±10.
pub fn bars_basis(h: usize, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    if h == 0 || !h.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("bars need a positive even H, got {h}")));
    }
    let side = h / 2;
    let mut w = DMatrix::zeros(side * side, h);
    for bar in 0..h {
        let sign = if rng.random_bool(0.5) { 10.0 } else { -10.0 };
        for t in 0..side {
            let pix = if bar < side { bar * side + t } else { t * side + (bar - side) };
            w[(pix, bar)] = sign;
        }
    }
    Ok(w)
}

/// Bars test data: `D = (H/2)²`, `π = 2/H`, `σ² = 2`, `μ ~ N(0, 5)`,
/// `Ψ = I`, homoscedastic noise.
pub fn bars_dataset(h: usize, n: usize, seed: u64) -> Result<(Dataset, ModelParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = bars_basis(h, &mut rng)?;
    let d = w.nrows();
    let mu_dist = Normal::new(0.0, 5f64.sqrt()).expect("valid normal");
    let mu = DVector::from_fn(h, |_, _| mu_dist.sample(&mut rng));
    let truth = ModelParams::new(
        w,
        DMatrix::identity(d, d) * 2.0,
        DVector::from_element(h, 2.0 / h as f64),
        mu,
        DMatrix::identity(h, h),
        NoiseMode::Homoscedastic,
    )?;
    let (data, _) = sample_spike_slab(&truth, n, rng.random())?;
    let spec = GeneratorSpec {
        kind: GeneratorKind::Bars,
        h,
        d,
        n,
        noise_sigma: 2f64.sqrt(),
        ortho_perturb_sigma: 0.0,
        seed,
    };
    Ok((data.with_provenance(spec), truth))
}

/// Samples one unit-scale heavy-tailed value.
pub fn sample_heavy_tail(prior: HeavyTail, rng: &mut impl Rng) -> f64 {
    match prior {
        HeavyTail::Laplace => {
            // inverse CDF on (-1/2, 1/2)
            let u: f64 = rng.random::<f64>() - 0.5;
            -u.signum() * (1.0 - 2.0 * u.abs()).ln()
        }
        HeavyTail::Cauchy => Cauchy::new(0.0, 1.0).expect("valid cauchy").sample(rng),
    }
}

/// Standard sparse coding data: i.i.d. unit-scale heavy-tailed sources mixed
/// by `w_gen` plus `N(0, noise_sigma²)` noise.
pub fn sample_sparse_coding(
    prior: HeavyTail,
    w_gen: &DMatrix<f64>,
    noise_sigma: f64,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidInput("noise_sigma must be >= 0".into()));
    }
    if n == 0 {
        return Err(Error::InvalidInput("N must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, h) = w_gen.shape();
    let mut y = DMatrix::zeros(d, n);
    for col in 0..n {
        let x = DVector::from_fn(h, |_, _| sample_heavy_tail(prior, &mut rng));
        let mut yc = w_gen * x;
        if noise_sigma > 0.0 {
            for v in yc.iter_mut() {
                *v += noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        y.set_column(col, &yc);
    }
    Dataset::from_columns(y)
}

/// `H × T` matrix of i.i.d. unit-scale heavy-tailed sources.
pub fn sample_sources(prior: HeavyTail, h: usize, t: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(h, t, |_, _| sample_heavy_tail(prior, &mut rng))
}

/// Observations `mixing · sources[:, t] + N(0, noise_sigma²)`, one per
/// source column.
pub fn mix_sources(sources: &DMatrix<f64>, mixing: &DMatrix<f64>, noise_sigma: f64, seed: u64) -> Result<Dataset> {
    if mixing.ncols() != sources.nrows() {
        return Err(Error::dims("mixing matrix", format!("{} columns", sources.nrows()), mixing.ncols()));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidInput("noise_sigma must be >= 0".into()));
    }
    let mut y = mixing * sources;
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in y.iter_mut() {
            *v += noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Dataset::from_columns(y)
}

/// Random orthonormal `D × H` basis (Gram-Schmidt on a Gaussian matrix) plus
/// i.i.d. `N(0, perturb_sigma²)` entries.
pub fn perturbed_orthogonal_basis(h: usize, d: usize, perturb_sigma: f64, seed: u64) -> Result<DMatrix<f64>> {
    if h == 0 || h > d {
        return Err(Error::InvalidInput(format!("orthogonal basis needs 1 <= H <= D (H = {h}, D = {d})")));
    }
    if !(perturb_sigma >= 0.0) {
        return Err(Error::InvalidInput("perturb_sigma must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = random_orthonormal(d, h, &mut rng);
    if perturb_sigma > 0.0 {
        for v in q.iter_mut() {
            *v += perturb_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(q)
}

fn random_orthonormal(d: usize, h: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_fn(d, h, |_, _| rng.sample::<f64, _>(StandardNormal));
        let qr = g.qr();
        let r = qr.r();
        if (0..h).all(|i| r[(i, i)].abs() > 1e-8) {
            let mut q = qr.q();
            // fix the sign ambiguity so the result is a function of g
            for i in 0..h {
                if r[(i, i)] < 0.0 {
                    let mut c = q.column_mut(i);
                    c.neg_mut();
                }
            }
            return q;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixing_without_noise_is_a_product() {
        let src = sample_sources(HeavyTail::Laplace, 3, 5, 4);
        let a = perturbed_orthogonal_basis(3, 3, 0.0, 5).unwrap();
        let data = mix_sources(&src, &a, 0.0, 6).unwrap();
        assert!((data.columns() - &a * &src).amax() < 1e-12);
        assert!(mix_sources(&src, &DMatrix::zeros(3, 2), 0.0, 6).is_err());
    }

    #[test]
    fn bars_grid_structure() {
        let (data, truth) = bars_dataset(10, 20, 3).unwrap();
        assert_eq!(data.d(), 25);
        for c in 0..10 {
            let col = truth.w.column(c);
            let nz: Vec<f64> = col.iter().copied().filter(|v| *v != 0.0).collect();
            assert_eq!(nz.len(), 5);
            assert!(nz.iter().all(|v| v.abs() == 10.0));
            assert!(nz.iter().all(|v| *v == nz[0]));
        }
        // horizontal bars are disjoint rows, vertical bars disjoint columns
        let horiz: f64 = (0..5).map(|c| truth.w.column(c).abs().sum()).sum();
        assert_eq!(horiz, 250.0);
        assert_eq!(truth.pi[0], 0.2);
        assert!(data.provenance.is_some());
    }

    #[test]
    fn odd_bars_rejected() {
        assert!(bars_dataset(7, 10, 0).is_err());
    }

    #[test]
    fn orthogonal_basis_properties() {
        let q = perturbed_orthogonal_basis(4, 6, 0.0, 11).unwrap();
        let g = q.transpose() * &q;
        assert!((g - DMatrix::identity(4, 4)).amax() < 1e-10);
        assert_eq!(q, perturbed_orthogonal_basis(4, 6, 0.0, 11).unwrap());
        assert!(perturbed_orthogonal_basis(7, 6, 0.0, 1).is_err());
    }

    #[test]
    fn spike_only_limit_gives_noise_covariance() {
        let p = ModelParams::new(
            DMatrix::from_element(2, 1, 3.0),
            DMatrix::identity(2, 2) * 0.5,
            DVector::from_element(1, 1e-6),
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            NoiseMode::Homoscedastic,
        )
        .unwrap();
        let (data, _) = sample_spike_slab(&p, 10_000, 5).unwrap();
        let cov = data.covariance();
        assert!((cov - DMatrix::identity(2, 2) * 0.5).amax() < 0.05);
    }

    #[test]
    fn activation_rate_within_binomial_interval() {
        let h = 3;
        let pi = DVector::from_vec(vec![0.1, 0.5, 0.8]);
        let p = ModelParams::new(
            DMatrix::identity(3, h),
            DMatrix::identity(3, 3),
            pi.clone(),
            DVector::zeros(h),
            DMatrix::identity(h, h),
            NoiseMode::Full,
        )
        .unwrap();
        let n = 10_000;
        let (_, lat) = sample_spike_slab(&p, n, 9).unwrap();
        for k in 0..h {
            let rate = lat.s.row(k).sum() / n as f64;
            let sd = (pi[k] * (1.0 - pi[k]) / n as f64).sqrt();
            assert!((rate - pi[k]).abs() < 3.0 * sd, "latent {k}: {rate}");
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let spec = GeneratorSpec {
            kind: GeneratorKind::SpikeSlab,
            h: 3,
            d: 4,
            n: 50,
            noise_sigma: 1.0,
            ortho_perturb_sigma: 2f64.sqrt(),
            seed: 42,
        };
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.data.provenance.as_ref(), Some(&spec));
    }
}

//! Random parameter initialization.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::clamp_eigenvalues;
use crate::model::{Dataset, ModelParams, NoiseMode};

/// `π_h ~ U[0.05, 0.95]`, `μ_h ~ N(0, 1)`, `Ψ` diagonal with entries in
/// `(0, 1]`, `Σ` the empirical data covariance (projected to `noise_mode`)
/// and `W_dh ~ N(0, 1)`.
pub fn random_init(data: &Dataset, h: usize, noise_mode: NoiseMode, seed: u64) -> Result<ModelParams> {
    if h == 0 {
        return Err(Error::InvalidConfig("H must be >= 1".into()));
    }
    let d = data.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pi = DVector::from_fn(h, |_, _| rng.random_range(0.05..=0.95));
    let mu = DVector::from_fn(h, |_, _| rng.sample::<f64, _>(StandardNormal));
    let psi = DMatrix::from_diagonal(&DVector::from_fn(h, |_, _| 1.0 - rng.random::<f64>()));
    let w = DMatrix::from_fn(d, h, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut params = ModelParams {
        w,
        sigma: data.covariance(),
        pi,
        mu,
        psi,
        noise_mode,
    };
    params.project_noise();
    let scale = params.sigma.trace() / d as f64;
    if !(scale > 0.0) {
        // constant data: fall back to unit noise
        params.sigma = DMatrix::identity(d, d);
    } else if clamp_eigenvalues(&mut params.sigma, 1e-6 * scale) {
        params.project_noise();
    }
    params.validate()?;
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_and_structure() {
        let rows = DMatrix::from_fn(50, 3, |r, c| ((r * 7 + c * 3) % 11) as f64);
        let data = Dataset::from_rows(&rows).unwrap();
        let p = random_init(&data, 4, NoiseMode::Homoscedastic, 1).unwrap();
        assert!(p.pi.iter().all(|&v| (0.05..=0.95).contains(&v)));
        assert!(p.psi.diagonal().iter().all(|&v| v > 0.0 && v <= 1.0));
        assert_eq!(p.psi.clone() - DMatrix::from_diagonal(&p.psi.diagonal()), DMatrix::zeros(4, 4));
        let s2 = data.covariance().trace() / 3.0;
        assert!((p.sigma.clone() - DMatrix::identity(3, 3) * s2).amax() < 1e-12);
        assert_eq!(p, random_init(&data, 4, NoiseMode::Homoscedastic, 1).unwrap());
    }
}

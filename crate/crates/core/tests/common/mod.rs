#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use spikeslab::datagen::sample_spike_slab;
use spikeslab::model::log_prior;
use spikeslab::{BinaryState, Dataset, ModelParams, NoiseMode};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random well-conditioned parameters with a diagonal slab covariance.
pub fn random_params(rng: &mut ChaCha8Rng, h: usize, d: usize, noise_mode: NoiseMode) -> ModelParams {
    let w = DMatrix::from_fn(d, h, |_, _| gauss(rng));
    let a = DMatrix::from_fn(d, d, |_, _| gauss(rng));
    let mut sigma = &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5;
    match noise_mode {
        NoiseMode::Full => {}
        NoiseMode::Diagonal => sigma = DMatrix::from_diagonal(&sigma.diagonal()),
        NoiseMode::Homoscedastic => sigma = DMatrix::identity(d, d) * (sigma.trace() / d as f64),
    }
    let pi = DVector::from_fn(h, |_, _| rng.random_range(0.15..0.85));
    let mu = DVector::from_fn(h, |_, _| gauss(rng));
    let psi = DMatrix::from_diagonal(&DVector::from_fn(h, |_, _| rng.random_range(0.5..1.5)));
    ModelParams::new(w, sigma, pi, mu, psi, noise_mode).unwrap()
}

pub fn random_instance(seed: u64, h: usize, d: usize, n: usize) -> (ModelParams, Dataset) {
    let mut r = rng(seed);
    let p = random_params(&mut r, h, d, NoiseMode::Full);
    let (data, _) = sample_spike_slab(&p, n, seed ^ 0x9e37_79b9).unwrap();
    (p, data)
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Log density of `N(x; m, c)` by an independent Cholesky route.
pub fn log_normal(x: &DVector<f64>, m: &DVector<f64>, c: &DMatrix<f64>) -> f64 {
    let chol = c.clone().cholesky().expect("PD covariance");
    let r = x - m;
    let sol = chol.solve(&r);
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    -0.5 * (x.len() as f64 * (2.0 * std::f64::consts::PI).ln() + log_det + r.dot(&sol))
}

pub struct Moments {
    pub mass: f64,
    pub ez: DVector<f64>,
    pub ezz: DMatrix<f64>,
}

/// `∫ p(s) N(z; μ, Ψ) N(y; W(s⊙z), Σ) dz` and the first two moments of
/// `s⊙z`, by a trapezoid grid over the active slab coordinates.
pub fn quadrature(p: &ModelParams, s: &BinaryState, y: &DVector<f64>, points: usize) -> Moments {
    let h = p.h();
    let act = s.active().to_vec();
    let lp = log_prior(&p.pi, s);
    if act.is_empty() {
        let m = (lp + log_normal(y, &DVector::zeros(p.d()), &p.sigma)).exp();
        return Moments {
            mass: m,
            ez: DVector::zeros(h),
            ezz: DMatrix::zeros(h, h),
        };
    }
    let k = act.len();
    let mu_a = DVector::from_iterator(k, act.iter().map(|&i| p.mu[i]));
    let psi_a = DMatrix::from_fn(k, k, |i, j| p.psi[(act[i], act[j])]);
    let half: Vec<f64> = act.iter().map(|&i| 12.0 * p.psi[(i, i)].sqrt()).collect();
    let step: Vec<f64> = half.iter().map(|w| 2.0 * w / (points - 1) as f64).collect();
    let mut mass = 0.0;
    let mut ez = DVector::zeros(h);
    let mut ezz = DMatrix::zeros(h, h);
    let total = points.pow(k as u32);
    let mut z = DVector::zeros(k);
    let mut full = DVector::zeros(h);
    for idx in 0..total {
        let mut rem = idx;
        let mut wt = 1.0;
        for j in 0..k {
            let g = rem % points;
            rem /= points;
            z[j] = mu_a[j] - half[j] + g as f64 * step[j];
            wt *= step[j] * if g == 0 || g == points - 1 { 0.5 } else { 1.0 };
        }
        full.fill(0.0);
        for (j, &i) in act.iter().enumerate() {
            full[i] = z[j];
        }
        let mean = &p.w * &full;
        let dens = (lp + log_normal(&z, &mu_a, &psi_a) + log_normal(y, &mean, &p.sigma)).exp() * wt;
        mass += dens;
        ez += &full * dens;
        ezz += &full * full.transpose() * dens;
    }
    Moments { mass, ez, ezz }
}

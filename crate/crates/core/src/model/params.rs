use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::PdFactor;

/// Lower/upper clamp applied to every activation probability.
pub const PI_FLOOR: f64 = 1e-6;

/// Structural constraint on the observation noise covariance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseMode {
    #[default]
    Full,
    Diagonal,
    Homoscedastic,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(NoiseMode::Full),
            "diagonal" => Ok(NoiseMode::Diagonal),
            "homoscedastic" => Ok(NoiseMode::Homoscedastic),
            other => Err(Error::InvalidConfig(format!("unknown noise mode {other:?}"))),
        }
    }
}

/// Parameters `(W, Σ, π, μ, Ψ)` of the spike-and-slab sparse coding model.
///
/// `w` is `D × H` with one basis function per column, `sigma` is the `D × D`
/// observation noise covariance, and `(pi, mu, psi)` parameterize the
/// Bernoulli spike and the Gaussian slab.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ParamsWire", try_from = "ParamsWire")]
pub struct ModelParams {
    pub w: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub pi: DVector<f64>,
    pub mu: DVector<f64>,
    pub psi: DMatrix<f64>,
    pub noise_mode: NoiseMode,
}

impl ModelParams {
    pub fn new(
        w: DMatrix<f64>,
        sigma: DMatrix<f64>,
        pi: DVector<f64>,
        mu: DVector<f64>,
        psi: DMatrix<f64>,
        noise_mode: NoiseMode,
    ) -> Result<Self> {
        let p = ModelParams {
            w,
            sigma,
            pi,
            mu,
            psi,
            noise_mode,
        };
        p.check_shapes()?;
        Ok(p)
    }

    pub fn d(&self) -> usize {
        self.w.nrows()
    }

    pub fn h(&self) -> usize {
        self.w.ncols()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (d, h) = self.w.shape();
        if h == 0 || d == 0 {
            return Err(Error::InvalidInput("W must have at least one row and one column".into()));
        }
        if self.sigma.shape() != (d, d) {
            return Err(Error::dims("Sigma", format!("{d}x{d}"), format!("{:?}", self.sigma.shape())));
        }
        if self.psi.shape() != (h, h) {
            return Err(Error::dims("Psi", format!("{h}x{h}"), format!("{:?}", self.psi.shape())));
        }
        if self.pi.len() != h {
            return Err(Error::dims("pi", h, self.pi.len()));
        }
        if self.mu.len() != h {
            return Err(Error::dims("mu", h, self.mu.len()));
        }
        Ok(())
    }

    /// Checks every structural invariant: shapes, finiteness, symmetry and
    /// positive definiteness of `Σ`/`Ψ`, the noise-mode structure and the
    /// clamp range of `π`.
    pub fn validate(&self) -> Result<()> {
        self.check_shapes()?;
        let finite = self.w.iter().chain(self.sigma.iter()).chain(self.pi.iter())
            .chain(self.mu.iter()).chain(self.psi.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite model parameter".into()));
        }
        for (name, m) in [("Sigma", &self.sigma), ("Psi", &self.psi)] {
            let scale = m.amax().max(1e-300);
            if (m - m.transpose()).amax() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!("{name} is not symmetric")));
            }
            let f = PdFactor::new(m, "parameter validation")?;
            if f.jitter > 0.0 {
                return Err(Error::InvalidInput(format!("{name} is not positive definite")));
            }
        }
        let d = self.d();
        match self.noise_mode {
            NoiseMode::Full => {}
            NoiseMode::Diagonal | NoiseMode::Homoscedastic => {
                for i in 0..d {
                    for j in 0..d {
                        if i != j && self.sigma[(i, j)] != 0.0 {
                            return Err(Error::InvalidInput("Sigma has off-diagonal entries".into()));
                        }
                    }
                }
                if self.noise_mode == NoiseMode::Homoscedastic
                    && (0..d).any(|i| self.sigma[(i, i)] != self.sigma[(0, 0)])
                {
                    return Err(Error::InvalidInput("homoscedastic Sigma must be a multiple of I".into()));
                }
            }
        }
        if self.pi.iter().any(|&p| !(PI_FLOOR..=1.0 - PI_FLOOR).contains(&p)) {
            return Err(Error::InvalidInput(format!("pi outside [{PI_FLOOR}, 1 - {PI_FLOOR}]")));
        }
        Ok(())
    }

    pub fn clamp_pi(&mut self) {
        for p in self.pi.iter_mut() {
            *p = p.clamp(PI_FLOOR, 1.0 - PI_FLOOR);
        }
    }

    /// Forces `Σ` into the structure required by `noise_mode`.
    ///
    /// Homoscedastic noise becomes `σ²·I` with `σ² = Tr(Σ)/D`.
    pub fn project_noise(&mut self) {
        let d = self.d();
        match self.noise_mode {
            NoiseMode::Full => crate::linalg::symmetrize(&mut self.sigma),
            NoiseMode::Diagonal => {
                let diag = self.sigma.diagonal();
                self.sigma = DMatrix::from_diagonal(&diag);
            }
            NoiseMode::Homoscedastic => {
                let s2 = self.sigma.trace() / d as f64;
                self.sigma = DMatrix::identity(d, d) * s2;
            }
        }
    }

    /// Reorders the latent dimensions: new latent `j` is old latent `perm[j]`.
    pub fn permute_latents(&self, perm: &[usize]) -> Self {
        let h = self.h();
        assert_eq!(perm.len(), h, "permutation length");
        ModelParams {
            w: DMatrix::from_fn(self.d(), h, |r, j| self.w[(r, perm[j])]),
            sigma: self.sigma.clone(),
            pi: DVector::from_fn(h, |j, _| self.pi[perm[j]]),
            mu: DVector::from_fn(h, |j, _| self.mu[perm[j]]),
            psi: DMatrix::from_fn(h, h, |i, j| self.psi[(perm[i], perm[j])]),
            noise_mode: self.noise_mode,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("model parameters: {e}")))
    }
}

/// JSON layout: explicit shapes plus row-major arrays.
#[derive(Serialize, Deserialize)]
struct ParamsWire {
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "H")]
    h: usize,
    #[serde(rename = "W")]
    w: Vec<f64>,
    #[serde(rename = "Sigma")]
    sigma: Vec<f64>,
    pi: Vec<f64>,
    mu: Vec<f64>,
    #[serde(rename = "Psi")]
    psi: Vec<f64>,
    noise_mode: NoiseMode,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl From<ModelParams> for ParamsWire {
    fn from(p: ModelParams) -> Self {
        ParamsWire {
            d: p.d(),
            h: p.h(),
            w: row_major(&p.w),
            sigma: row_major(&p.sigma),
            pi: p.pi.as_slice().to_vec(),
            mu: p.mu.as_slice().to_vec(),
            psi: row_major(&p.psi),
            noise_mode: p.noise_mode,
        }
    }
}

impl TryFrom<ParamsWire> for ModelParams {
    type Error = String;

    fn try_from(w: ParamsWire) -> std::result::Result<Self, String> {
        let (d, h) = (w.d, w.h);
        let check = |name: &str, len: usize, want: usize| {
            if len == want {
                Ok(())
            } else {
                Err(format!("{name}: expected {want} values, got {len}"))
            }
        };
        check("W", w.w.len(), d * h)?;
        check("Sigma", w.sigma.len(), d * d)?;
        check("Psi", w.psi.len(), h * h)?;
        check("pi", w.pi.len(), h)?;
        check("mu", w.mu.len(), h)?;
        ModelParams::new(
            DMatrix::from_row_slice(d, h, &w.w),
            DMatrix::from_row_slice(d, d, &w.sigma),
            DVector::from_vec(w.pi),
            DVector::from_vec(w.mu),
            DMatrix::from_row_slice(h, h, &w.psi),
            w.noise_mode,
        )
        .map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelParams {
        ModelParams::new(
            DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            DMatrix::identity(3, 3) * 0.5,
            DVector::from_vec(vec![0.2, 0.7]),
            DVector::from_vec(vec![1.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            NoiseMode::Homoscedastic,
        )
        .unwrap()
    }

    #[test]
    fn json_field_names_and_row_major() {
        let p = small();
        let v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        for key in ["W", "Sigma", "pi", "mu", "Psi", "noise_mode", "D", "H"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["W"][1].as_f64(), Some(2.0));
        assert_eq!(v["noise_mode"], "homoscedastic");
        assert_eq!(ModelParams::from_json(&p.to_json()).unwrap(), p);
    }

    #[test]
    fn json_rejects_bad_lengths() {
        let bad = r#"{"D":2,"H":1,"W":[1.0],"Sigma":[1,0,0,1],"pi":[0.5],"mu":[0],"Psi":[1],"noise_mode":"full"}"#;
        assert!(ModelParams::from_json(bad).is_err());
    }

    #[test]
    fn validate_catches_structure() {
        let mut p = small();
        p.validate().unwrap();
        p.sigma[(0, 0)] = 0.7;
        assert!(p.validate().is_err());
        p.noise_mode = NoiseMode::Diagonal;
        p.validate().unwrap();
        p.pi[0] = 0.0;
        assert!(p.validate().is_err());
        p.clamp_pi();
        p.validate().unwrap();
    }

    #[test]
    fn homoscedastic_projection_uses_trace() {
        let mut p = small();
        p.sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 2.0, 0.0, 0.0, 0.0, 3.0]);
        p.project_noise();
        assert_eq!(p.sigma, DMatrix::identity(3, 3) * 2.0);
    }
}

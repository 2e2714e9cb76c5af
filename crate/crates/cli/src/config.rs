//! Experiment configuration: per-experiment defaults, overlaid by an
//! optional JSON file, overlaid by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use spikeslab::datagen::{GeneratorKind, GeneratorSpec, HeavyTail};
use spikeslab::exact_em::SlabCovariance;
use spikeslab::model::H_EXACT_MAX;
use spikeslab::{NoiseMode, TruncationConfig};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Bars,
    Consistency,
    Recovery,
    Separation,
    Denoise,
    PosteriorHistograms,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Exact,
    Truncated,
}

impl std::str::FromStr for Engine {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "exact" => Ok(Engine::Exact),
            "truncated" => Ok(Engine::Truncated),
            other => Err(CliError::Config(format!("unknown engine {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationConfig {
    /// Consecutive source samples used per trial.
    pub n_points: usize,
    /// First sample taken from the source file.
    pub offset: usize,
    /// Perturbation added to the orthogonal mixing basis.
    pub perturb_sigma: f64,
    /// Gaussian noise added to the mixtures.
    pub noise_sigma: f64,
    /// Draw i.i.d. heavy-tailed sources instead of reading a file.
    pub synthetic: Option<HeavyTail>,
    /// Number of synthetic sources.
    pub synthetic_sources: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiseConfig {
    pub noise_sigma: f64,
    pub patch: usize,
    #[serde(rename = "H")]
    pub h: usize,
    /// `[row, col, rows, cols]` crop of the input image.
    pub crop: Option<[usize; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub engine: Engine,
    pub generator: Option<GeneratorSpec>,
    /// Input files: source CSV (separation), image (denoise), dataset
    /// (posterior histograms).
    pub inputs: Vec<PathBuf>,
    /// Learned parameters to analyse instead of training (posterior histograms).
    pub params_path: Option<PathBuf>,
    pub truncation: TruncationConfig,
    /// `(H', γ)` pairs run by the bars experiment.
    pub truncation_sweep: Vec<(usize, usize)>,
    /// Data-set sizes swept by consistency/recovery.
    pub n_sweep: Vec<usize>,
    /// Basis perturbations swept by recovery (used when non-empty).
    pub perturb_sweep: Vec<f64>,
    pub iters: usize,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads (`0`: one per core).
    pub workers: usize,
    pub clustering: bool,
    pub alpha_percentile: Option<f64>,
    pub noise_mode: NoiseMode,
    pub slab_covariance: SlabCovariance,
    /// Standard deviations covered by reported error bars.
    pub error_bar_sds: f64,
    pub separation: SeparationConfig,
    pub denoise: DenoiseConfig,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mut c = ExperimentConfig {
            experiment,
            engine: Engine::Truncated,
            generator: None,
            inputs: Vec::new(),
            params_path: None,
            truncation: TruncationConfig::new(5, 3),
            truncation_sweep: Vec::new(),
            n_sweep: Vec::new(),
            perturb_sweep: Vec::new(),
            iters: 50,
            trials: 1,
            seed: 0,
            workers: 1,
            clustering: true,
            alpha_percentile: Some(spikeslab::truncated_em::DEFAULT_ALPHA_PERCENTILE),
            noise_mode: NoiseMode::Homoscedastic,
            slab_covariance: SlabCovariance::Diagonal,
            error_bar_sds: 1.0,
            separation: SeparationConfig {
                n_points: 500,
                offset: 0,
                perturb_sigma: 0.0,
                noise_sigma: 0.0,
                synthetic: None,
                synthetic_sources: 4,
            },
            denoise: DenoiseConfig {
                noise_sigma: 25.0,
                patch: 8,
                h: 64,
                crop: None,
            },
            output_dir: PathBuf::from("out"),
        };
        match experiment {
            Experiment::Bars => {
                c.generator = Some(spec(GeneratorKind::Bars, 10, 25, 1000, 0.0));
                c.truncation_sweep = vec![(4, 4), (5, 4), (5, 3)];
            }
            Experiment::Consistency => {
                c.generator = Some(GeneratorSpec {
                    ortho_perturb_sigma: 2f64.sqrt(),
                    ..spec(GeneratorKind::SpikeSlab, 10, 10, 1000, 1.0)
                });
                c.truncation = TruncationConfig::new(5, 5);
                c.n_sweep = vec![1000, 8000, 64000];
                c.iters = 100;
                c.trials = 5;
            }
            Experiment::Recovery => {
                c.generator = Some(spec(GeneratorKind::LaplaceSc, 20, 20, 5000, 1.0));
                c.truncation = TruncationConfig::new(2, 2);
                c.n_sweep = vec![5000];
                c.trials = 5;
                c.noise_mode = NoiseMode::Full;
            }
            Experiment::Separation => {
                c.engine = Engine::Exact;
                c.iters = 350;
                c.trials = 10;
                c.error_bar_sds = 2.0;
            }
            Experiment::Denoise => {
                c.truncation = TruncationConfig::new(10, 8);
                c.iters = 65;
            }
            Experiment::PosteriorHistograms => {
                c.engine = Engine::Exact;
                c.generator = Some(spec(GeneratorKind::SpikeSlab, 10, 10, 500, 1.0));
                c.iters = 100;
                c.noise_mode = NoiseMode::Full;
            }
        }
        c
    }

    /// Defaults for `experiment` overlaid with the keys of a JSON document.
    pub fn from_json(experiment: Experiment, text: &str) -> CliResult<Self> {
        let overlay: Value =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("config JSON: {e}")))?;
        let Value::Object(map) = overlay else {
            return Err(CliError::Config("config JSON must be an object".into()));
        };
        let experiment = match map.get("experiment") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| CliError::Config(format!("experiment: {e}")))?,
            None => experiment,
        };
        let mut base = serde_json::to_value(Self::defaults(experiment)).expect("config serializes");
        merge(&mut base, Value::Object(map));
        serde_json::from_value(base).map_err(|e| CliError::Config(format!("config JSON: {e}")))
    }

    pub fn load(experiment: Experiment, path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::MissingInput(format!("config file {}", path.display())),
            _ => CliError::io(path, e),
        })?;
        Self::from_json(experiment, &text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.iters == 0 {
            return bad("iters must be >= 1".into());
        }
        if let Some(g) = &self.generator {
            g.validate()?;
            if self.engine == Engine::Exact && g.h > H_EXACT_MAX {
                return bad(format!("exact engine needs H <= {H_EXACT_MAX}, got {}", g.h));
            }
        }
        if let Some(a) = self.alpha_percentile {
            if !(a > 0.0 && a < 100.0) {
                return bad(format!("alpha percentile must be in (0, 100), got {a}"));
            }
        }
        match self.experiment {
            Experiment::Bars => {
                if self.generator.as_ref().is_none_or(|g| g.kind != GeneratorKind::Bars) {
                    return bad("bars experiment needs a bars generator".into());
                }
            }
            Experiment::Consistency | Experiment::Recovery => {
                let g = self.generator.as_ref().ok_or_else(|| CliError::Config("generator required".into()))?;
                if g.h != g.d {
                    return bad("Amari scoring needs D = H".into());
                }
                if g.kind == GeneratorKind::Bars {
                    return bad("recovery sweeps need an orthogonal-basis generator".into());
                }
            }
            Experiment::Separation => {
                if self.separation.n_points == 0 {
                    return bad("separation n_points must be >= 1".into());
                }
            }
            Experiment::Denoise => {
                if self.denoise.patch == 0 || self.denoise.h == 0 {
                    return bad("denoise patch size and H must be >= 1".into());
                }
            }
            Experiment::PosteriorHistograms => {
                if self.engine != Engine::Exact {
                    return bad("posterior histograms need the exact engine".into());
                }
            }
        }
        Ok(())
    }
}

fn spec(kind: GeneratorKind, h: usize, d: usize, n: usize, noise_sigma: f64) -> GeneratorSpec {
    GeneratorSpec {
        kind,
        h,
        d,
        n,
        noise_sigma,
        ortho_perturb_sigma: 0.0,
        seed: 0,
    }
}

/// Recursive object merge; non-object values replace.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

const SPLITMIX_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random streams of one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Stream {
    Data = 0,
    Init = 1,
    Basis = 2,
    Noise = 3,
}

/// Seed of `stream` in `trial`: `splitmix64(splitmix64(seed ^ trial) ^ stream)`.
pub fn derive_seed(seed: u64, trial: u64, stream: Stream) -> u64 {
    splitmix64(splitmix64(seed ^ trial.wrapping_mul(SPLITMIX_GAMMA)) ^ stream as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_overlay_keeps_defaults() {
        let c = ExperimentConfig::from_json(Experiment::Bars, r#"{"truncation": {"h_prime": 4}}"#).unwrap();
        assert_eq!(c.truncation.h_prime, 4);
        assert_eq!(c.truncation.gamma, ExperimentConfig::defaults(Experiment::Bars).truncation.gamma);
        let c = ExperimentConfig::from_json(
            Experiment::Bars,
            r#"{"iters": 7, "truncation": {"h_prime": 4, "gamma": 2, "include_singletons": true}}"#,
        )
        .unwrap();
        assert_eq!(c.iters, 7);
        assert_eq!(c.truncation, TruncationConfig::new(4, 2));
        assert_eq!(c.truncation_sweep, vec![(4, 4), (5, 4), (5, 3)]);
        assert!(ExperimentConfig::from_json(Experiment::Bars, r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn experiment_key_selects_defaults() {
        let c = ExperimentConfig::from_json(Experiment::Bars, r#"{"experiment": "consistency"}"#).unwrap();
        assert_eq!(c.n_sweep, vec![1000, 8000, 64000]);
    }

    #[test]
    fn defaults_validate() {
        for e in [
            Experiment::Bars,
            Experiment::Consistency,
            Experiment::Recovery,
            Experiment::Separation,
            Experiment::Denoise,
            Experiment::PosteriorHistograms,
        ] {
            ExperimentConfig::defaults(e).validate().unwrap();
        }
    }

    #[test]
    fn seeds_differ_by_trial_and_stream() {
        let a = derive_seed(1, 0, Stream::Data);
        assert_ne!(a, derive_seed(1, 1, Stream::Data));
        assert_ne!(a, derive_seed(1, 0, Stream::Init));
        assert_eq!(a, derive_seed(1, 0, Stream::Data));
    }
}

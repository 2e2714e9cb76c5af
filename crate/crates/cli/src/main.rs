use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spikeslab::datagen::{GeneratorKind, GeneratorSpec, HeavyTail};
use spikeslab::exact_em::SlabCovariance;
use spikeslab::io::write_dataset;
use spikeslab::NoiseMode;
use spikeslab_cli::{run_experiment, CliError, CliResult, Engine, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "spikeslab", version, about = "Spike-and-slab sparse coding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bars test: recovery and Q-values across truncation settings.
    Bars(Common),
    /// Amari index versus data-set size on data drawn from the model.
    Consistency {
        #[command(flatten)]
        common: Common,
        /// Data-set sizes to sweep (comma separated).
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
    },
    /// Amari index on heavy-tailed sparse coding data.
    Recovery {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        /// Basis perturbations to sweep (comma separated).
        #[arg(long, value_delimiter = ',')]
        perturb: Vec<f64>,
    },
    /// Blind source separation of mixed source signals.
    Separation {
        #[command(flatten)]
        common: Common,
        /// Source CSV (one source per row or column).
        #[arg(long)]
        sources: Option<PathBuf>,
        #[arg(long)]
        n_points: Option<usize>,
        #[arg(long)]
        offset: Option<usize>,
        /// Draw i.i.d. sources from this prior instead of reading a file.
        #[arg(long, value_parser = parse_tail)]
        synthetic: Option<HeavyTail>,
        #[arg(long)]
        n_sources: Option<usize>,
        #[arg(long)]
        noise_sigma: Option<f64>,
    },
    /// Patch-based image denoising.
    Denoise {
        #[command(flatten)]
        common: Common,
        /// Clean image (PGM or PNG).
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        /// Number of latents.
        #[arg(long = "H")]
        h: Option<usize>,
        #[arg(long)]
        patch: Option<usize>,
        /// Crop as row,col,rows,cols.
        #[arg(long, value_delimiter = ',')]
        crop: Option<Vec<usize>>,
    },
    /// Exact posterior activation histograms.
    Posteriors {
        #[command(flatten)]
        common: Common,
        /// Dataset file (.csv or binary); generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Learned parameters (JSON); trained when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Write a synthetic dataset.
    Generate {
        #[arg(long, value_parser = parse_kind)]
        kind: GeneratorKind,
        #[arg(long = "H")]
        h: usize,
        #[arg(long = "D")]
        d: usize,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; `.csv` for text, anything else for binary.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config overlaid on the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0: one per core).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_engine)]
    engine: Option<Engine>,
    #[arg(long)]
    h_prime: Option<usize>,
    #[arg(long)]
    gamma: Option<usize>,
    /// Cluster-size cap percentile.
    #[arg(long)]
    alpha_percentile: Option<f64>,
    /// Treat every point as its own unit in the truncated E-step.
    #[arg(long)]
    no_clustering: bool,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_parser = parse_slab)]
    slab_covariance: Option<SlabCovariance>,
    #[arg(long, value_parser = parse_noise)]
    noise_mode: Option<NoiseMode>,
}

fn parse_json_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

fn parse_slab(s: &str) -> Result<SlabCovariance, String> {
    parse_json_enum(s)
}

fn parse_noise(s: &str) -> Result<NoiseMode, String> {
    parse_json_enum(s)
}

fn parse_tail(s: &str) -> Result<HeavyTail, String> {
    parse_json_enum(s)
}

fn parse_kind(s: &str) -> Result<GeneratorKind, String> {
    parse_json_enum(s)
}

impl Common {
    fn config(&self, experiment: Experiment) -> CliResult<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(experiment, path)?,
            None => ExperimentConfig::defaults(experiment),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        if let Some(v) = &self.output_dir {
            c.output_dir = v.clone();
        }
        if let Some(v) = self.engine {
            c.engine = v;
        }
        if self.h_prime.is_some() || self.gamma.is_some() {
            if let Some(v) = self.h_prime {
                c.truncation.h_prime = v;
            }
            if let Some(v) = self.gamma {
                c.truncation.gamma = v;
            }
            c.truncation_sweep = vec![(c.truncation.h_prime, c.truncation.gamma)];
        }
        if let Some(v) = self.alpha_percentile {
            c.alpha_percentile = Some(v);
        }
        if self.no_clustering {
            c.clustering = false;
        }
        if let Some(v) = self.iters {
            c.iters = v;
        }
        if let Some(v) = self.trials {
            c.trials = v;
        }
        if let Some(v) = self.slab_covariance {
            c.slab_covariance = v;
        }
        if let Some(v) = self.noise_mode {
            c.noise_mode = v;
        }
        Ok(c)
    }
}

fn build(command: Command) -> CliResult<Option<ExperimentConfig>> {
    let cfg = match command {
        Command::Bars(common) => common.config(Experiment::Bars)?,
        Command::Consistency { common, n } => {
            let mut c = common.config(Experiment::Consistency)?;
            if !n.is_empty() {
                c.n_sweep = n;
            }
            c
        }
        Command::Recovery { common, n, perturb } => {
            let mut c = common.config(Experiment::Recovery)?;
            if !n.is_empty() {
                c.n_sweep = n;
            }
            if !perturb.is_empty() {
                c.perturb_sweep = perturb;
            }
            c
        }
        Command::Separation {
            common,
            sources,
            n_points,
            offset,
            synthetic,
            n_sources,
            noise_sigma,
        } => {
            let mut c = common.config(Experiment::Separation)?;
            if let Some(p) = sources {
                c.inputs = vec![p];
            }
            let s = &mut c.separation;
            s.n_points = n_points.unwrap_or(s.n_points);
            s.offset = offset.unwrap_or(s.offset);
            s.synthetic = synthetic.or(s.synthetic);
            s.synthetic_sources = n_sources.unwrap_or(s.synthetic_sources);
            s.noise_sigma = noise_sigma.unwrap_or(s.noise_sigma);
            c
        }
        Command::Denoise {
            common,
            image,
            noise_sigma,
            h,
            patch,
            crop,
        } => {
            let mut c = common.config(Experiment::Denoise)?;
            if let Some(p) = image {
                c.inputs = vec![p];
            }
            let d = &mut c.denoise;
            d.noise_sigma = noise_sigma.unwrap_or(d.noise_sigma);
            d.h = h.unwrap_or(d.h);
            d.patch = patch.unwrap_or(d.patch);
            if let Some(v) = crop {
                let crop: [usize; 4] = v
                    .try_into()
                    .map_err(|_| CliError::Config("--crop takes row,col,rows,cols".into()))?;
                d.crop = Some(crop);
            }
            c
        }
        Command::Posteriors { common, data, params } => {
            let mut c = common.config(Experiment::PosteriorHistograms)?;
            if let Some(p) = data {
                c.inputs = vec![p];
            }
            c.params_path = params.or(c.params_path);
            c
        }
        Command::Generate {
            kind,
            h,
            d,
            n,
            noise_sigma,
            perturb,
            seed,
            out,
        } => {
            let spec = GeneratorSpec {
                kind,
                h,
                d,
                n,
                noise_sigma,
                ortho_perturb_sigma: perturb,
                seed,
            };
            write_dataset(&out, &spec.generate()?.data)?;
            return Ok(None);
        }
    };
    Ok(Some(cfg))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build(cli.command).and_then(|cfg| match cfg {
        Some(cfg) => {
            let outcome = run_experiment(&cfg)?;
            for m in &outcome.metrics {
                if m.n_trials > 1 {
                    println!("{} = {:.6} ± {:.6} ({} trials)", m.name, m.value, m.std, m.n_trials);
                } else {
                    println!("{} = {:.6}", m.name, m.value);
                }
            }
            println!("outputs in {}", outcome.output_dir.display());
            Ok(())
        }
        None => Ok(()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.into()
        }
    }
}

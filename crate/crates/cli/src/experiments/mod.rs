//! Experiment drivers. Each writes its series as CSV and its scalar
//! results as JSON under the output directory.

mod bars;
mod denoise;
mod posteriors;
mod recovery;
mod separation;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use spikeslab::eval::{write_metrics_csv, MetricReport};
use spikeslab::exact_em::{run_exact_em_with, write_trace_csv, EmOptions, MStepOptions};
use spikeslab::truncated_em::{run_truncated_em_with, Scheduling, TruncatedOptions};
use spikeslab::{Dataset, EmRun, EmTrace, ModelParams};

use crate::config::{Engine, Experiment, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";

/// Result of a finished run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub metrics: Vec<MetricReport>,
    pub manifest: RunManifest,
}

/// Output directory plus the list of files written into it.
pub(crate) struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub(crate) fn path(&mut self, name: &str) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        self.written.push(PathBuf::from(name));
        Ok(path)
    }

    pub(crate) fn text(&mut self, name: &str, body: &str) -> CliResult<()> {
        let path = self.path(name)?;
        fs::write(&path, body).map_err(|e| CliError::io(&path, e))
    }

    pub(crate) fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        self.text(name, &serde_json::to_string_pretty(value).expect("serializable"))
    }

    /// CSV with a header line and one row per record.
    pub(crate) fn csv(&mut self, name: &str, header: &str, rows: &[String]) -> CliResult<()> {
        let mut body = String::with_capacity(header.len() + 1 + rows.iter().map(|r| r.len() + 1).sum::<usize>());
        body.push_str(header);
        body.push('\n');
        for r in rows {
            body.push_str(r);
            body.push('\n');
        }
        self.text(name, &body)
    }

    pub(crate) fn trace(&mut self, name: &str, trace: &[EmTrace]) -> CliResult<()> {
        let path = self.path(name)?;
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        write_trace_csv(BufWriter::new(file), trace).map_err(|e| CliError::io(&path, e))
    }

    pub(crate) fn params(&mut self, name: &str, params: &ModelParams) -> CliResult<()> {
        self.text(name, &params.to_json())
    }

    fn metrics(&mut self, metrics: &[MetricReport]) -> CliResult<()> {
        self.json(METRICS_JSON, &metrics)?;
        let path = self.path(METRICS_CSV)?;
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        write_metrics_csv(BufWriter::new(file), metrics).map_err(|e| CliError::io(&path, e))
    }
}

pub(crate) fn em_options(cfg: &ExperimentConfig) -> EmOptions {
    EmOptions {
        iters: cfg.iters,
        workers: cfg.workers,
        early_stop: false,
        mstep: MStepOptions {
            slab: cfg.slab_covariance,
        },
    }
}

pub(crate) fn scheduling(cfg: &ExperimentConfig) -> Scheduling {
    Scheduling {
        clustering: cfg.clustering,
        alpha_percentile: cfg.alpha_percentile,
    }
}

pub(crate) fn truncated_options(cfg: &ExperimentConfig) -> TruncatedOptions {
    TruncatedOptions {
        em: em_options(cfg),
        scheduling: scheduling(cfg),
    }
}

/// Trains with the configured engine and truncation.
pub(crate) fn train(cfg: &ExperimentConfig, data: &Dataset, init: &ModelParams) -> CliResult<EmRun> {
    Ok(match cfg.engine {
        Engine::Exact => run_exact_em_with(data, init, &em_options(cfg))?,
        Engine::Truncated => run_truncated_em_with(data, init, &cfg.truncation, &truncated_options(cfg))?,
    })
}

/// Validates `cfg`, runs its experiment and records a manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<RunOutcome> {
    cfg.validate()?;
    let mut out = Outputs::new(&cfg.output_dir)?;
    let mut manifest = RunManifest::start(cfg);
    manifest.write(&cfg.output_dir)?;
    let result = match cfg.experiment {
        Experiment::Bars => bars::run(cfg, &mut out),
        Experiment::Consistency | Experiment::Recovery => recovery::run(cfg, &mut out),
        Experiment::Separation => separation::run(cfg, &mut out),
        Experiment::Denoise => denoise::run(cfg, &mut out),
        Experiment::PosteriorHistograms => posteriors::run(cfg, &mut out),
    }
    .and_then(|metrics| {
        out.metrics(&metrics)?;
        Ok(metrics)
    });
    manifest.outputs = std::mem::take(&mut out.written);
    manifest.finish(result.as_ref().err());
    manifest.write(&cfg.output_dir)?;
    Ok(RunOutcome {
        output_dir: cfg.output_dir.clone(),
        metrics: result?,
        manifest,
    })
}

/// `{value:e}` for CSV fields.
pub(crate) fn num(v: f64) -> String {
    format!("{v:e}")
}

use std::path::Path;

use spikeslab::eval::MetricReport;
use spikeslab::exact_em::posterior_marginals;
use spikeslab::io::read_dataset;
use spikeslab::{random_init, Dataset, ModelParams};

use super::{num, train, Outputs};
use crate::analysis::unit_histogram;
use crate::config::{derive_seed, ExperimentConfig, Stream};
use crate::error::{CliError, CliResult};

pub const HISTOGRAM_BINS: usize = 20;

fn require(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingInput(format!("{what} {}", path.display())))
    }
}

/// Exact per-latent activation probabilities and the posterior over the
/// number of active latents.
pub(super) fn run(cfg: &ExperimentConfig, out: &mut Outputs) -> CliResult<Vec<MetricReport>> {
    let data: Dataset = match cfg.inputs.first() {
        Some(path) => {
            require(path, "dataset")?;
            read_dataset(path)?
        }
        None => {
            let mut spec =
                cfg.generator.clone().ok_or_else(|| CliError::Config("posteriors need a dataset or generator".into()))?;
            spec.seed = derive_seed(cfg.seed, 0, Stream::Data);
            spec.generate()?.data
        }
    };
    let params = match &cfg.params_path {
        Some(path) => {
            require(path, "parameter file")?;
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ModelParams::from_json(&text)?
        }
        None => {
            let h = cfg.generator.as_ref().map_or(data.d(), |g| g.h);
            let init = random_init(&data, h, cfg.noise_mode, derive_seed(cfg.seed, 0, Stream::Init))?;
            let run = train(cfg, &data, &init)?;
            out.trace("trace.csv", &run.trace)?;
            out.params("params.json", &run.params)?;
            run.params
        }
    };
    let marg = posterior_marginals(&params, &data, cfg.workers)?;
    let h = params.h();

    let header = std::iter::once("point".to_string())
        .chain((0..h).map(|k| format!("latent{k}")))
        .collect::<Vec<_>>()
        .join(",");
    let rows: Vec<String> = (0..data.n())
        .map(|n| {
            std::iter::once(n.to_string()).chain(marg.activation.column(n).iter().map(|v| num(*v))).collect::<Vec<_>>().join(",")
        })
        .collect();
    out.csv("activation.csv", &header, &rows)?;

    let mut hist_rows = Vec::new();
    for k in 0..h {
        let counts = unit_histogram(marg.activation.row(k).iter().copied(), HISTOGRAM_BINS);
        for (b, c) in counts.iter().enumerate() {
            let lo = b as f64 / HISTOGRAM_BINS as f64;
            hist_rows.push(format!("{k},{},{},{c}", num(lo), num(lo + 1.0 / HISTOGRAM_BINS as f64)));
        }
    }
    out.csv("activation_histogram.csv", "latent,bin_lo,bin_hi,count", &hist_rows)?;

    let mean_pop: Vec<f64> = (0..=h).map(|k| marg.popcount.row(k).mean()).collect();
    let pop_rows: Vec<String> = mean_pop.iter().enumerate().map(|(k, p)| format!("{k},{}", num(*p))).collect();
    out.csv("popcount.csv", "active_latents,mean_probability", &pop_rows)?;

    let expected_active: f64 = mean_pop.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let confident = marg.activation.iter().filter(|&&p| !(0.05..=0.95).contains(&p)).count() as f64
        / marg.activation.len() as f64;
    Ok(vec![
        MetricReport::single("expected_active_latents", expected_active),
        MetricReport::single("confident_activation_fraction", confident),
    ])
}

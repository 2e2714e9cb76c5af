use nalgebra::DMatrix;
use spikeslab::datagen::{mix_sources, perturbed_orthogonal_basis, sample_sources};
use spikeslab::eval::{amari_index_flagged, MetricReport};
use spikeslab::io::read_sources_csv;
use spikeslab::random_init;

use super::{num, train, Outputs};
use crate::config::{derive_seed, ExperimentConfig, Stream};
use crate::error::{CliError, CliResult};

/// Blind source separation: sources mixed by a random orthogonal matrix,
/// scored by the Amari index of the learned basis.
pub(super) fn run(cfg: &ExperimentConfig, out: &mut Outputs) -> CliResult<Vec<MetricReport>> {
    let sep = &cfg.separation;
    let from_file = match sep.synthetic {
        Some(_) => None,
        None => {
            let path = cfg
                .inputs
                .first()
                .ok_or_else(|| CliError::Config("separation needs a source file or a synthetic prior".into()))?;
            if !path.exists() {
                return Err(CliError::MissingInput(format!("source file {}", path.display())));
            }
            let all = read_sources_csv(path)?;
            if sep.offset + sep.n_points > all.ncols() {
                return Err(CliError::Config(format!(
                    "source file has {} samples, need offset {} + {} points",
                    all.ncols(),
                    sep.offset,
                    sep.n_points
                )));
            }
            Some(all.columns(sep.offset, sep.n_points).into_owned())
        }
    };
    let h = from_file.as_ref().map_or(sep.synthetic_sources, DMatrix::nrows);
    let mut amari = Vec::with_capacity(cfg.trials);
    let mut lines = Vec::new();
    for trial in 0..cfg.trials {
        let t = trial as u64;
        let sources = match (&from_file, sep.synthetic) {
            (Some(s), _) => s.clone(),
            (None, Some(prior)) => sample_sources(prior, h, sep.n_points, derive_seed(cfg.seed, t, Stream::Data)),
            (None, None) => unreachable!("checked above"),
        };
        let mixing = perturbed_orthogonal_basis(h, h, sep.perturb_sigma, derive_seed(cfg.seed, t, Stream::Basis))?;
        let data = mix_sources(&sources, &mixing, sep.noise_sigma, derive_seed(cfg.seed, t, Stream::Noise))?;
        let init = random_init(&data, h, cfg.noise_mode, derive_seed(cfg.seed, t, Stream::Init))?;
        let run = train(cfg, &data, &init)?;
        let (a, flagged) = amari_index_flagged(&run.params.w, &mixing)?;
        out.trace(&format!("traces/trial{trial}.csv"), &run.trace)?;
        out.params(&format!("params/trial{trial}.json"), &run.params)?;
        lines.push(format!("{trial},{},{flagged}", num(a)));
        amari.push(a);
    }
    out.csv("separation.csv", "trial,amari,pinv_fallback", &lines)?;
    let summary = MetricReport::from_samples("amari", &amari);
    let bar = MetricReport::single("amari_error_bar", cfg.error_bar_sds * summary.std);
    let min = MetricReport::single("amari_min", amari.iter().copied().fold(f64::INFINITY, f64::min));
    Ok(vec![summary, bar, min])
}

use spikeslab::eval::{amari_index_flagged, MetricReport};
use spikeslab::random_init;

use super::{num, train, Outputs};
use crate::config::{derive_seed, ExperimentConfig, Stream};
use crate::error::{CliError, CliResult};

/// Amari index of the learned basis against the generating one, swept over
/// data-set sizes (and, for recovery, basis perturbations).
pub(super) fn run(cfg: &ExperimentConfig, out: &mut Outputs) -> CliResult<Vec<MetricReport>> {
    let generator = cfg.generator.as_ref().ok_or_else(|| CliError::Config("generator required".into()))?;
    let ns = if cfg.n_sweep.is_empty() { vec![generator.n] } else { cfg.n_sweep.clone() };
    let perturbs =
        if cfg.perturb_sweep.is_empty() { vec![generator.ortho_perturb_sigma] } else { cfg.perturb_sweep.clone() };
    let mut lines = Vec::new();
    let mut metrics = Vec::new();
    for &perturb in &perturbs {
        for &n in &ns {
            let mut amari = Vec::with_capacity(cfg.trials);
            let mut lls = Vec::with_capacity(cfg.trials);
            for trial in 0..cfg.trials {
                let t = trial as u64;
                let mut spec = generator.clone();
                spec.n = n;
                spec.ortho_perturb_sigma = perturb;
                spec.seed = derive_seed(cfg.seed, t, Stream::Data);
                let generated = spec.generate()?;
                let init =
                    random_init(&generated.data, spec.h, cfg.noise_mode, derive_seed(cfg.seed, t, Stream::Init))?;
                let run = train(cfg, &generated.data, &init)?;
                let (a, flagged) = amari_index_flagged(&run.params.w, &generated.basis)?;
                let ll = run.trace.last().map_or(f64::NAN, |t| t.log_likelihood);
                let tag = format!("n{n}_p{perturb}_trial{trial}");
                out.trace(&format!("traces/{tag}.csv"), &run.trace)?;
                out.params(&format!("params/{tag}.json"), &run.params)?;
                lines.push(format!("{n},{},{trial},{},{flagged},{}", num(perturb), num(a), num(ll)));
                amari.push(a);
                lls.push(ll);
            }
            let suffix = if perturbs.len() > 1 { format!("_n{n}_p{perturb}") } else { format!("_n{n}") };
            metrics.push(MetricReport::from_samples(format!("amari{suffix}"), &amari));
            metrics.push(MetricReport::single(
                format!("amari_min{suffix}"),
                amari.iter().copied().fold(f64::INFINITY, f64::min),
            ));
            metrics.push(MetricReport::from_samples(format!("log_likelihood{suffix}"), &lls));
        }
    }
    out.csv("amari.csv", "n,perturb_sigma,trial,amari,pinv_fallback,log_likelihood", &lines)?;
    Ok(metrics)
}

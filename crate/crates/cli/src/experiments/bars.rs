use spikeslab::eval::{kl_from_q, MetricReport};
use spikeslab::random_init;
use spikeslab::truncated_em::{q_values, TruncationConfig};

use super::{num, train, Outputs};
use crate::analysis::{hit_columns, matched_columns};
use crate::config::{derive_seed, Engine, ExperimentConfig, Stream};
use crate::error::{CliError, CliResult};

/// `|cos|` above which a learned field counts as a recovered bar.
pub const BAR_MATCH_COS: f64 = 0.9;

struct Row {
    trial: usize,
    label: String,
    mean_q: f64,
    mean_kl: f64,
    hits: usize,
    recovered: usize,
    log_likelihood: f64,
}

pub(super) fn run(cfg: &ExperimentConfig, out: &mut Outputs) -> CliResult<Vec<MetricReport>> {
    let generator = cfg.generator.as_ref().ok_or_else(|| CliError::Config("generator required".into()))?;
    let engines: Vec<(String, ExperimentConfig)> = match cfg.engine {
        Engine::Exact => vec![("exact".into(), cfg.clone())],
        Engine::Truncated => {
            let sweep = if cfg.truncation_sweep.is_empty() {
                vec![(cfg.truncation.h_prime, cfg.truncation.gamma)]
            } else {
                cfg.truncation_sweep.clone()
            };
            sweep
                .into_iter()
                .map(|(hp, g)| {
                    let mut c = cfg.clone();
                    c.truncation = TruncationConfig::new(hp, g);
                    (format!("h{hp}_g{g}"), c)
                })
                .collect()
        }
    };
    let mut rows = Vec::new();
    for trial in 0..cfg.trials {
        let t = trial as u64;
        let mut spec = generator.clone();
        spec.seed = derive_seed(cfg.seed, t, Stream::Data);
        let generated = spec.generate()?;
        let data = &generated.data;
        let init = random_init(data, spec.h, cfg.noise_mode, derive_seed(cfg.seed, t, Stream::Init))?;
        for (label, c) in &engines {
            let run = train(c, data, &init)?;
            let (mean_q, mean_kl) = match c.engine {
                Engine::Exact => (1.0, 0.0),
                Engine::Truncated => {
                    let qs = q_values(&run.params, data, &c.truncation, c.workers)?;
                    let kl: f64 = qs.iter().map(|&q| kl_from_q(q)).sum::<spikeslab::Result<f64>>()?;
                    (qs.iter().sum::<f64>() / qs.len() as f64, kl / qs.len() as f64)
                }
            };
            out.trace(&format!("traces/{label}_trial{trial}.csv"), &run.trace)?;
            out.params(&format!("params/{label}_trial{trial}.json"), &run.params)?;
            rows.push(Row {
                trial,
                label: label.clone(),
                mean_q,
                mean_kl,
                hits: hit_columns(&run.params.w, &generated.basis, BAR_MATCH_COS),
                recovered: matched_columns(&run.params.w, &generated.basis, BAR_MATCH_COS),
                log_likelihood: run.trace.last().map_or(f64::NAN, |t| t.log_likelihood),
            });
        }
    }
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{}",
                r.trial,
                r.label,
                num(r.mean_q),
                num(r.mean_kl),
                r.hits,
                r.recovered,
                num(r.log_likelihood)
            )
        })
        .collect();
    out.csv("bars.csv", "trial,engine,mean_q,mean_kl,basis_hits,bars_recovered,log_likelihood", &lines)?;

    let mut metrics = Vec::new();
    for (label, _) in &engines {
        let of = |f: fn(&Row) -> f64| -> Vec<f64> { rows.iter().filter(|r| &r.label == label).map(f).collect() };
        metrics.push(MetricReport::from_samples(format!("mean_q_{label}"), &of(|r| r.mean_q)));
        metrics.push(MetricReport::from_samples(format!("mean_kl_{label}"), &of(|r| r.mean_kl)));
        metrics.push(MetricReport::from_samples(format!("basis_hits_{label}"), &of(|r| r.hits as f64)));
        metrics.push(MetricReport::from_samples(format!("bars_recovered_{label}"), &of(|r| r.recovered as f64)));
        metrics.push(MetricReport::from_samples(format!("log_likelihood_{label}"), &of(|r| r.log_likelihood)));
    }
    Ok(metrics)
}

use spikeslab::denoise::{add_gaussian_noise, basis_mosaic, read_image, run_denoise, write_image, DenoiseOptions};
use spikeslab::eval::{psnr, MetricReport};

use super::{num, truncated_options, Outputs};
use crate::config::{derive_seed, ExperimentConfig, Stream};
use crate::error::{CliError, CliResult};

pub(super) fn run(cfg: &ExperimentConfig, out: &mut Outputs) -> CliResult<Vec<MetricReport>> {
    let path = cfg.inputs.first().ok_or_else(|| CliError::Config("denoise needs an input image".into()))?;
    if !path.exists() {
        return Err(CliError::MissingInput(format!("image {}", path.display())));
    }
    let mut clean = read_image(path)?;
    if let Some([r, c, rows, cols]) = cfg.denoise.crop {
        clean = clean.crop(r, c, rows, cols)?;
    }
    let dn = &cfg.denoise;
    let noisy = add_gaussian_noise(&clean, dn.noise_sigma, derive_seed(cfg.seed, 0, Stream::Noise))?;
    let opts = DenoiseOptions {
        h: dn.h,
        patch: dn.patch,
        cfg: cfg.truncation,
        em: truncated_options(cfg),
        seed: derive_seed(cfg.seed, 0, Stream::Init),
    };
    let res = run_denoise(&noisy, &opts)?;
    for (name, img) in [("clean", &clean), ("noisy", &noisy), ("denoised", &res.image)] {
        for ext in ["pgm", "png"] {
            write_image(&out.path(&format!("{name}.{ext}"))?, img)?;
        }
    }
    let mosaic = basis_mosaic(&res.params.w, dn.patch)?;
    write_image(&out.path("basis.png")?, &mosaic)?;
    write_image(&out.path("basis.pgm")?, &mosaic)?;
    let pi_rows: Vec<String> = res.sorted_pi.iter().enumerate().map(|(i, p)| format!("{i},{}", num(*p))).collect();
    out.csv("sorted_pi.csv", "rank,pi", &pi_rows)?;
    out.trace("trace.csv", &res.trace)?;
    out.params("params.json", &res.params)?;

    let before = psnr(&clean, &noisy, 255.0)?;
    let after = psnr(&clean, &res.image, 255.0)?;
    let active = res.sorted_pi.iter().sum::<f64>();
    Ok(vec![
        MetricReport::single("psnr_noisy", before),
        MetricReport::single("psnr_denoised", after),
        MetricReport::single("psnr_gain", after - before),
        MetricReport::single("expected_active_fields", active),
        MetricReport::single("noise_sigma_learned", res.params.sigma[(0, 0)].sqrt()),
    ])
}

//! End-to-end acceptance run: every criterion is evaluated at its stated
//! tolerance and reported on one line. The process fails if any criterion
//! fails.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::{quadrature, random_instance, random_params, rng};
use rand::Rng;
use nalgebra::{DMatrix, DVector};
use spikeslab::datagen::{
    bars_dataset, mix_sources, perturbed_orthogonal_basis, sample_sources, sample_spike_slab, GeneratorKind,
    GeneratorSpec, HeavyTail,
};
use spikeslab::denoise::{add_gaussian_noise, read_image, run_denoise, DenoiseOptions};
use spikeslab::eval::{amari_index, psnr};
use spikeslab::exact_em::{
    exact_accumulate, exact_estep, mstep_with, run_exact_em, run_exact_em_with, worker_pool, EmOptions,
    FrozenPosterior, MStepOptions,
};
use spikeslab::linalg::max_abs_diff;
use spikeslab::model::{all_states, log_joint_ys};
use spikeslab::truncated_em::{
    binomial, q_values, run_truncated_em_with, select_indices, selection_scores, truncated_accumulate, truncated_expectations,
    Scheduling, StateSpace, TruncatedOptions, TruncationConfig,
};
use spikeslab::{random_init, Dataset, ModelParams, NoiseMode, SufficientStats};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Largest `|a − b| / max|block|` over the four statistics.
fn stats_rel_diff(a: &SufficientStats, b: &SufficientStats) -> f64 {
    let blocks: [(&[f64], &[f64]); 4] = [
        (a.es.as_slice(), b.es.as_slice()),
        (a.ess.as_slice(), b.ess.as_slice()),
        (a.esz.as_slice(), b.esz.as_slice()),
        (a.eszsz.as_slice(), b.eszsz.as_slice()),
    ];
    blocks
        .iter()
        .map(|(x, y)| {
            let scale = x.iter().chain(y.iter()).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            x.iter().zip(y.iter()).map(|(p, q)| (p - q).abs() / scale).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn oracle_equivalence() -> Verdict {
    let mut worst = 0.0f64;
    for seed in 0..200u64 {
        let h = 1 + seed as usize % 8;
        let d = 1 + (seed as usize * 7) % 12;
        let (p, data) = random_instance(10_000 + seed, h, d, 2);
        let exact = exact_estep(&p, &data).unwrap();
        let full = StateSpace::full(h);
        for (n, ex) in exact.iter().enumerate() {
            let tr = truncated_expectations(&p, &data.point(n).into_owned(), &full).unwrap();
            worst = worst.max(stats_rel_diff(&tr, ex));
        }
    }
    verdict(worst <= 1e-10, format!("max relative difference {worst:.2e} over 200 instances"))
}

fn quadrature_oracle() -> Verdict {
    let mut worst = 0.0f64;
    for seed in 0..6u64 {
        let (p, data) = random_instance(20_000 + seed, 2, 3, 3);
        let stats = exact_estep(&p, &data).unwrap();
        for (n, st) in stats.iter().enumerate() {
            let y = data.point(n).into_owned();
            let mut total = 0.0;
            let mut es = DVector::zeros(2);
            let mut esz = DVector::zeros(2);
            let mut eszsz = DMatrix::zeros(2, 2);
            for s in all_states(2).unwrap() {
                let m = quadrature(&p, &s, &y, 601);
                let joint = log_joint_ys(&p, &s, &y).unwrap().exp();
                worst = worst.max((m.mass - joint).abs() / joint.max(f64::MIN_POSITIVE));
                total += m.mass;
                es += DVector::from_vec(s.as_f64()) * m.mass;
                esz += m.ez;
                eszsz += m.ezz;
            }
            worst = worst
                .max((&st.es - es / total).amax())
                .max((&st.esz - esz / total).amax())
                .max((&st.eszsz - eszsz / total).amax());
        }
    }
    verdict(worst <= 1e-5, format!("max deviation {worst:.2e} over 6 instances, 3 points each"))
}

fn mstep_stationarity() -> Verdict {
    let pool = worker_pool(1).unwrap();
    let mut worst = 0.0f64;
    let mut patched = 0;
    for seed in 0..50u64 {
        let h = 1 + seed as usize % 4;
        let d = 1 + (seed as usize * 3) % 5;
        let (_, data) = random_instance(30_000 + seed, h, d, 60);
        let old = random_params(&mut rng(31_000 + seed), h, d, NoiseMode::Full);
        let acc = exact_accumulate(&old, &data, &pool).unwrap();
        let (new, report) = mstep_with(&acc, &data, &old, MStepOptions::default()).unwrap();
        if !report.held.is_empty() || report.psi_clamped || report.sigma_clamped {
            patched += 1;
        }
        let g = FrozenPosterior::new(&old, &data).unwrap().gradients(&new, true, 1e-5).unwrap();
        worst = worst.max(g.max_relative());
    }
    verdict(
        worst <= 1e-4,
        format!("max gradient / scale {worst:.2e} over W, π, μ, Ψ, Σ; 50 instances ({patched} patched M-steps)"),
    )
}

fn em_monotonicity() -> Verdict {
    let mut worst_drop = 0.0f64;
    let mut violations = 0;
    for seed in 0..10u64 {
        let (data, _) = bars_dataset(10, 1000, 40_000 + seed).unwrap();
        let init = random_init(&data, 10, NoiseMode::Homoscedastic, 41_000 + seed).unwrap();
        let run = run_exact_em(&data, &init, 50).unwrap();
        for w in run.trace.windows(2) {
            let drop = w[0].log_likelihood - w[1].log_likelihood;
            worst_drop = worst_drop.max(drop);
            if drop > 1e-8 * w[0].log_likelihood.abs().max(1.0) {
                violations += 1;
            }
        }
    }
    verdict(
        violations == 0,
        format!("{violations} decreasing steps, largest decrease {worst_drop:.2e}; 10 seeds × 50 iterations"),
    )
}

fn bars_q_value() -> Verdict {
    let cfg = TruncationConfig::new(5, 3);
    let mut qs = Vec::new();
    for seed in 0..3u64 {
        let (data, _) = bars_dataset(10, 1000, 50_000 + seed).unwrap();
        let init = random_init(&data, 10, NoiseMode::Homoscedastic, 51_000 + seed).unwrap();
        let run = run_truncated_em_with(&data, &init, &cfg, &TruncatedOptions::iters(50)).unwrap();
        qs.push(mean(&q_values(&run.params, &data, &cfg, 1).unwrap()));
    }
    let shown: Vec<String> = qs.iter().map(|q| format!("{q:.4}")).collect();
    verdict(qs.iter().all(|&q| q > 0.99), format!("mean Q per seed [{}], need > 0.99", shown.join(", ")))
}

fn consistency_trend() -> Verdict {
    let cfg = TruncationConfig::new(5, 5);
    let mut means = Vec::new();
    for &n in &[1000usize, 8000, 64000] {
        let mut amari = Vec::new();
        for trial in 0..5u64 {
            let spec = GeneratorSpec {
                kind: GeneratorKind::SpikeSlab,
                h: 10,
                d: 10,
                n,
                noise_sigma: 1.0,
                ortho_perturb_sigma: 2f64.sqrt(),
                seed: 60_000 + trial,
            };
            let g = spec.generate().unwrap();
            let init = random_init(&g.data, 10, NoiseMode::Homoscedastic, 61_000 + trial).unwrap();
            let run = run_truncated_em_with(&g.data, &init, &cfg, &TruncatedOptions::iters(100)).unwrap();
            amari.push(amari_index(&run.params.w, &g.basis).unwrap());
        }
        means.push(mean(&amari));
    }
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let last = means[2];
    verdict(
        decreasing && last < 0.05,
        format!(
            "mean Amari at N = 1000, 8000, 64000: {:.4}, {:.4}, {:.4}; need decreasing and < 0.05 at 64000",
            means[0], means[1], means[2]
        ),
    )
}

fn source_separation() -> Verdict {
    let opts = EmOptions::iters(350);
    let mut amari = Vec::new();
    for trial in 0..10u64 {
        let sources = sample_sources(HeavyTail::Laplace, 4, 500, 70_000 + trial);
        let mixing = perturbed_orthogonal_basis(4, 4, 0.0, 71_000 + trial).unwrap();
        let data = mix_sources(&sources, &mixing, 0.0, 0).unwrap();
        let init = random_init(&data, 4, NoiseMode::Homoscedastic, 72_000 + trial).unwrap();
        let run = run_exact_em_with(&data, &init, &opts).unwrap();
        amari.push(amari_index(&run.params.w, &mixing).unwrap());
    }
    let m = mean(&amari);
    verdict(m <= 0.15, format!("synthetic Laplace sources, H = 4, N = 500: mean Amari {m:.4} over 10 trials"))
}

fn denoising() -> Verdict {
    let clean = read_image(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/camera_crop_64.pgm")).unwrap();
    let noisy = add_gaussian_noise(&clean, 25.0, 1).unwrap();
    let opts = DenoiseOptions {
        h: 64,
        patch: 8,
        cfg: TruncationConfig::new(10, 8),
        em: TruncatedOptions::iters(65),
        seed: 2,
    };
    let res = run_denoise(&noisy, &opts).unwrap();
    let before = psnr(&clean, &noisy, 255.0).unwrap();
    let after = psnr(&clean, &res.image, 255.0).unwrap();
    verdict(
        after >= before + 5.0,
        format!("64×64 crop, σ = 25: noisy {before:.2} dB, denoised {after:.2} dB (gain {:.2} dB)", after - before),
    )
}

fn params_diff(a: &ModelParams, b: &ModelParams) -> f64 {
    max_abs_diff(&a.w, &b.w)
        .max(max_abs_diff(&a.sigma, &b.sigma))
        .max(max_abs_diff(&a.psi, &b.psi))
        .max((&a.pi - &b.pi).amax())
        .max((&a.mu - &b.mu).amax())
}

fn parallel_determinism() -> Verdict {
    let cfg = TruncationConfig::new(5, 3);
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let (data, _) = bars_dataset(10, 1000, 80_000 + seed).unwrap();
        let init = random_init(&data, 10, NoiseMode::Homoscedastic, 81_000 + seed).unwrap();
        let mut opts = TruncatedOptions::iters(10);
        let serial = run_truncated_em_with(&data, &init, &cfg, &opts).unwrap();
        opts.em.workers = 4;
        let parallel = run_truncated_em_with(&data, &init, &cfg, &opts).unwrap();
        worst = worst.max(params_diff(&serial.params, &parallel.params));
    }
    verdict(worst <= 1e-8, format!("1 vs 4 workers, 5 seeds: max parameter difference {worst:.2e}"))
}

/// 1000 points: 900 in 100 groups of 9 sharing a selected set, 100 with
/// sets of their own.
fn clustering_workload() -> (ModelParams, Dataset) {
    let h = 12;
    let params = ModelParams::new(
        DMatrix::identity(h, h) * 10.0,
        DMatrix::identity(h, h) * 0.01,
        DVector::from_element(h, 0.3),
        DVector::from_element(h, 1.0),
        DMatrix::identity(h, h),
        NoiseMode::Homoscedastic,
    )
    .unwrap();
    // all 792 five-element subsets of 12, in a fixed scrambled order
    let mut subsets: Vec<Vec<usize>> =
        all_states(h).unwrap().into_iter().filter(|s| s.popcount() == 5).map(|s| s.active().to_vec()).collect();
    let mut r = rng(90_000);
    for i in (1..subsets.len()).rev() {
        let j = r.random_range(0..=i);
        subsets.swap(i, j);
    }
    let mut cols = Vec::with_capacity(1000);
    for (g, set) in subsets.iter().take(200).enumerate() {
        let copies = if g < 100 { 9 } else { 1 };
        for _ in 0..copies {
            let mut y = DVector::from_fn(h, |_, _| 0.1 * common::gauss(&mut r));
            for (rank, &i) in set.iter().enumerate() {
                y[i] += 10.0 * (1.0 + rank as f64);
            }
            cols.push(y);
        }
    }
    let data = Dataset::from_columns(DMatrix::from_columns(&cols)).unwrap();
    (params, data)
}

fn clustering_economy() -> Verdict {
    let (params, data) = clustering_workload();
    let cfg = TruncationConfig::new(5, 3);
    let keys: Vec<Vec<usize>> = (0..data.n())
        .map(|n| select_indices(selection_scores(&params, &data.point(n).into_owned()).unwrap().as_slice(), 5))
        .collect();
    let shared = (0..data.n()).filter(|&n| keys.iter().filter(|k| **k == keys[n]).count() > 1).count();
    let pool = worker_pool(1).unwrap();
    let (with, plan) = truncated_accumulate(&params, &data, &cfg, &Scheduling::default(), &pool).unwrap();
    let without = Scheduling {
        clustering: false,
        alpha_percentile: None,
    };
    let (plain, _) = truncated_accumulate(&params, &data, &cfg, &without, &pool).unwrap();
    let ratio = plain.factorizations as f64 / with.factorizations as f64;
    let share = shared as f64 / data.n() as f64;
    verdict(
        share >= 0.9 && with.factorizations <= plain.factorizations && ratio >= 2.0,
        format!(
            "{:.0}% of points share a selected set; factorizations {} clustered ({} units, size cap {}) vs {} \
             unclustered: {ratio:.2}× fewer",
            100.0 * share,
            with.factorizations,
            plan.len(),
            plan.size_cap,
            plain.factorizations
        ),
    )
}

fn scaling_property() -> Verdict {
    let cfg = TruncationConfig::new(5, 3);
    let pool = worker_pool(1).unwrap();
    let n = 200;
    let mut per_point = Vec::new();
    let mut exact = true;
    for &h in &[16usize, 64, 256] {
        let params = random_params(&mut rng(95_000 + h as u64), h, 16, NoiseMode::Homoscedastic);
        let (data, _) = sample_spike_slab(&params, n, 96_000 + h as u64).unwrap();
        let (acc, _) = truncated_accumulate(&params, &data, &cfg, &Scheduling::default(), &pool).unwrap();
        // subsets of the selected set with at most γ bits, plus the unselected singletons
        let expected = n * cfg.states_per_point(h);
        let formula = n * ((0..=3).map(|g| binomial(5, g)).sum::<usize>() + h - 5);
        exact &= acc.state_evals == expected && expected == formula;
        per_point.push(acc.state_evals / n);
    }
    let growth_ok = per_point[1] - per_point[0] == 64 - 16 && per_point[2] - per_point[1] == 256 - 64;
    verdict(
        exact && growth_ok,
        format!("state evaluations per point at H = 16, 64, 256: {:?} (26 + H − 5)", per_point),
    )
}

type Criterion = (&'static str, Duration, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 11] = [
        ("oracle equivalence", Duration::from_secs(60), oracle_equivalence),
        ("quadrature oracle", Duration::from_secs(60), quadrature_oracle),
        ("M-step stationarity", Duration::from_secs(120), mstep_stationarity),
        ("EM monotonicity", Duration::from_secs(300), em_monotonicity),
        ("bars Q-value", Duration::from_secs(600), bars_q_value),
        ("consistency trend", Duration::from_secs(1800), consistency_trend),
        ("source separation", Duration::from_secs(1200), source_separation),
        ("denoising", Duration::from_secs(1800), denoising),
        ("parallel determinism", Duration::from_secs(300), parallel_determinism),
        ("clustering economy", Duration::from_secs(60), clustering_economy),
        ("scaling property", Duration::from_secs(60), scaling_property),
    ];
    let mut passed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let took = start.elapsed();
        let ok = v.pass && took <= *budget;
        passed += usize::from(ok);
        println!(
            "criterion {:>2} {name}: {} ({}; {:.1} s of {} s)",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            v.detail,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if passed != criteria.len() {
        std::process::exit(1);
    }
}

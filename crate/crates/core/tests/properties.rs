mod common;

use common::random_instance;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use spikeslab::datagen::bars_dataset;
use spikeslab::denoise::{add_gaussian_noise, GrayImage};
use spikeslab::eval::{amari_index, psnr};
use spikeslab::exact_em::{exact_estep, worker_pool};
use spikeslab::model::{log_marginal_likelihood, PreparedModel, StateFactor, StatePosterior};
use spikeslab::truncated_em::{
    binomial, build_state_space, q_value, selection_scores, truncated_accumulate, Scheduling, StateSpace,
    TruncationConfig,
};
use spikeslab::{random_init, BinaryState, NoiseMode};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn expectation_invariants(seed in 0u64..10_000, h in 1usize..5, d in 1usize..6) {
        let (p, data) = random_instance(seed, h, d, 4);
        for st in exact_estep(&p, &data).unwrap() {
            for k in 0..h {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(&st.es[k]));
                prop_assert!((st.ess[(k, k)] - st.es[k]).abs() < 1e-12);
            }
            prop_assert!((&st.ess - st.ess.transpose()).amax() < 1e-12);
            prop_assert!(st.ess.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
            prop_assert!((&st.eszsz - st.eszsz.transpose()).amax() < 1e-9);
            let cov = &st.eszsz - &st.esz * st.esz.transpose();
            let min_eig = SymmetricEigen::new(cov).eigenvalues.min();
            prop_assert!(min_eig > -1e-8);
        }
    }

    #[test]
    fn truncated_weights_normalized(seed in 0u64..10_000, hp in 1usize..5) {
        let (p, data) = random_instance(seed, 5, 4, 3);
        let cfg = TruncationConfig::new(hp, hp.min(2));
        let prep = PreparedModel::new(&p).unwrap();
        for n in 0..data.n() {
            let y = data.point(n).into_owned();
            let space = build_state_space(selection_scores(&p, &y).unwrap().as_slice(), &cfg);
            let factors: Vec<StateFactor> = space.states().iter().map(|s| prep.factor_state(s).unwrap()).collect();
            let refs: Vec<&StateFactor> = factors.iter().collect();
            let post = StatePosterior::compute(&refs, &prep.project(y.as_slice()));
            prop_assert!((post.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn larger_spaces_never_lower_q(seed in 0u64..10_000, hp in 1usize..5, gamma in 1usize..5) {
        prop_assume!(gamma <= hp);
        let (p, data) = random_instance(seed, 6, 4, 2);
        let y = data.point(0).into_owned();
        let scores = selection_scores(&p, &y).unwrap();
        let small = build_state_space(scores.as_slice(), &TruncationConfig::new(hp, gamma));
        let larger = build_state_space(scores.as_slice(), &TruncationConfig::new(hp + 1, gamma));
        prop_assert!(small.states().iter().all(|s| larger.contains(s)));
        let q_small = q_value(&p, &y, &small).unwrap();
        let q_large = q_value(&p, &y, &larger).unwrap();
        prop_assert!(q_large >= q_small - 1e-12);
    }

    #[test]
    fn state_space_shape(scores in prop::collection::vec(-10.0f64..10.0, 2..9), hp in 1usize..8, gamma in 1usize..8) {
        let h = scores.len();
        prop_assume!(gamma <= hp && hp <= h);
        let cfg = TruncationConfig::new(hp, gamma);
        let space = build_state_space(&scores, &cfg);
        let expected: usize = (0..=gamma).map(|g| binomial(hp, g)).sum::<usize>() + (h - hp);
        prop_assert_eq!(space.len(), expected);
        prop_assert!(space.contains(&BinaryState::zeros(h)));
        for w in space.states().windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        for s in space.states() {
            let inside = s.popcount() <= gamma && s.active().iter().all(|i| space.index_set().contains(i));
            prop_assert!(inside || s.popcount() == 1);
        }
    }

    #[test]
    fn marginal_permutation_invariant(seed in 0u64..10_000) {
        let (p, data) = random_instance(seed, 4, 3, 1);
        let y = data.point(0).into_owned();
        let perm = [2, 0, 3, 1];
        let a = log_marginal_likelihood(&p, &y).unwrap();
        let b = log_marginal_likelihood(&p.permute_latents(&perm), &y).unwrap();
        prop_assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn densities_finite_for_huge_observations(seed in 0u64..10_000, scale in 1.0f64..1e6) {
        let (p, _) = random_instance(seed, 3, 3, 1);
        let y = DVector::from_vec(vec![scale, -scale, 0.5 * scale]);
        prop_assert!(log_marginal_likelihood(&p, &y).unwrap().is_finite());
        let data = spikeslab::Dataset::from_columns(DMatrix::from_column_slice(3, 1, y.as_slice())).unwrap();
        let st = &exact_estep(&p, &data).unwrap()[0];
        prop_assert!(st.es.iter().chain(st.esz.iter()).all(|v| v.is_finite()));
    }

    #[test]
    fn amari_invariant_to_column_permutation_and_scaling(
        seed in 0u64..10_000,
        scales in prop::collection::vec(prop_oneof![-5.0f64..-0.2, 0.2f64..5.0], 4),
    ) {
        let mut r = common::rng(seed);
        let w = DMatrix::from_fn(4, 4, |_, _| common::gauss(&mut r));
        let w_gen = DMatrix::from_fn(4, 4, |_, _| common::gauss(&mut r));
        let base = amari_index(&w, &w_gen).unwrap();
        prop_assert!(base >= -1e-12);
        let perm = [1, 3, 0, 2];
        let moved = DMatrix::from_fn(4, 4, |i, j| w[(i, perm[j])] * scales[j]);
        prop_assert!((amari_index(&moved, &w_gen).unwrap() - base).abs() < 1e-9);
    }
}

#[test]
fn psnr_falls_as_noise_grows() {
    let clean = GrayImage::new(DMatrix::from_fn(32, 32, |r, c| 100.0 + (r as f64 * 0.3 + c as f64).sin() * 40.0)).unwrap();
    let values: Vec<f64> = [5.0, 15.0, 30.0]
        .iter()
        .map(|&s| psnr(&clean, &add_gaussian_noise(&clean, s, 9).unwrap(), 255.0).unwrap())
        .collect();
    assert!(values[0] > values[1] && values[1] > values[2]);
}

#[test]
fn state_evaluations_within_budget() {
    let (data, _) = bars_dataset(10, 400, 2).unwrap();
    let init = random_init(&data, 10, NoiseMode::Homoscedastic, 3).unwrap();
    let pool = worker_pool(1).unwrap();
    for (hp, gamma) in [(4, 4), (5, 4), (5, 3)] {
        let cfg = TruncationConfig::new(hp, gamma);
        let (acc, plan) = truncated_accumulate(&init, &data, &cfg, &Scheduling::default(), &pool).unwrap();
        let per_point: usize = (0..=gamma).map(|g| binomial(hp, g)).sum::<usize>() + 10;
        assert!(acc.state_evals <= data.n() * per_point);
        assert_eq!(plan.n_points(), data.n());
    }
}

#[test]
fn full_space_helper_has_every_state() {
    assert_eq!(StateSpace::full(5).len(), 32);
}

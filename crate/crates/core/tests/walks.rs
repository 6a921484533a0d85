use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use stategeom_core::grid::GridSpec;
use stategeom_core::manifold::PacketParams;
use stategeom_core::seed::{order_free_sum, pairwise_sum, stream_id, trial_rng, trial_seed};
use stategeom_core::walk::{
    calibrate_scale, gue_component_variance, project_gue_step_onto_classical, run_unconstrained, sample_gue,
    step_tangent_components, tangent_direction, ConstrainedWalker, GueEnsemble, RecordPolicy, StepModel, WalkConfig,
};

fn basis(n: usize, j: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(n);
    v[j] = Complex64::new(1.0, 0.0);
    v
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = pairwise_sum(xs) / n;
    let v = pairwise_sum(&xs.iter().map(|x| (x - m).powi(2)).collect::<Vec<_>>()) / (n - 1.0);
    (m, v)
}

#[test]
fn gue_step_components_are_centered_with_predicted_variance_and_uncorrelated() {
    let n = 16;
    let ens = GueEnsemble::new(n, 1.3).unwrap();
    let phi = basis(n, 0);
    let u = tangent_direction(&phi, &basis(n, 3)).unwrap();
    let v = tangent_direction(&phi, &(basis(n, 5) * Complex64::i())).unwrap();
    let (dt, hbar) = (0.05, 1.0);
    let draws = 10_000;
    let mut cu = Vec::with_capacity(draws);
    let mut cv = Vec::with_capacity(draws);
    for i in 0..draws {
        let h = sample_gue(&ens, &mut trial_rng(21, 0, i as u64));
        let c = step_tangent_components(&phi, &h, dt, hbar, &[u.clone(), v.clone()]).unwrap();
        cu.push(c[0]);
        cv.push(c[1]);
    }
    let expected = gue_component_variance(1.3, dt, hbar);
    for xs in [&cu, &cv] {
        let (m, var) = mean_var(xs);
        assert!(m.abs() < 4.0 * (expected / draws as f64).sqrt());
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    }
    let (mu, vu) = mean_var(&cu);
    let (mv, vv) = mean_var(&cv);
    let cov =
        pairwise_sum(&cu.iter().zip(&cv).map(|(a, b)| (a - mu) * (b - mv)).collect::<Vec<_>>()) / (draws as f64 - 1.0);
    let corr = cov / (vu * vv).sqrt();
    assert!(corr.abs() < 4.0 / (draws as f64).sqrt(), "{corr}");
}

#[test]
fn gue_spectrum_fills_the_semicircle_support() {
    // Sanity only: 60 draws at N = 128.
    let (n, s) = (128, 0.5);
    let ens = GueEnsemble::new(n, s).unwrap();
    let edge = 2.0 * s * (n as f64).sqrt();
    let mut largest = 0.0f64;
    for i in 0..60 {
        let h: DMatrix<Complex64> = sample_gue(&ens, &mut trial_rng(5, 5, i));
        let eig = h.symmetric_eigenvalues();
        largest = largest.max(eig.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        assert!(eig.iter().all(|x| x.abs() < 1.05 * edge));
    }
    assert!(largest > 0.95 * edge, "{largest} vs {edge}");
}

#[test]
fn gue_projection_on_classical_direction_has_calibrated_variance() {
    let grid = GridSpec::line(64, 16.0).unwrap();
    let params = PacketParams::natural_1d(0.0, 0.0, 1.0).unwrap();
    let (step_sd, dt) = (1.0, 0.1);
    let scale = calibrate_scale(step_sd, params.sigma, params.hbar);
    let samples = project_gue_step_onto_classical(&params, &grid, scale, dt, 4000, 3, 0).unwrap();
    let (m, v) = mean_var(&samples);
    let expected = (step_sd * dt / (2.0 * params.sigma)).powi(2);
    assert!(m.abs() < 4.0 * (expected / 4000.0).sqrt());
    assert!((v / expected - 1.0).abs() < 4.0 * (2.0f64 / 4000.0).sqrt(), "{v} vs {expected}");
}

#[test]
fn gue_projection_variance_is_direction_independent_in_two_dimensions() {
    let grid = GridSpec::new(2, 16, 12.0).unwrap();
    let params = PacketParams::new(vec![0.0, 0.0], vec![0.0, 0.0], 1.0, 1.0, 1.0).unwrap();
    let count = 4000;
    let vx = mean_var(&project_gue_step_onto_classical(&params, &grid, 1.0, 0.1, count, 8, 0).unwrap()).1;
    let vy = mean_var(&project_gue_step_onto_classical(&params, &grid, 1.0, 0.1, count, 8, 1).unwrap()).1;
    // standard error of a variance estimate is var * sqrt(2/n)
    let se = vx.max(vy) * (2.0 / count as f64).sqrt() * 2f64.sqrt();
    assert!((vx - vy).abs() < 3.0 * se, "{vx} {vy}");
}

#[test]
fn constrained_displacement_variance_over_many_trials() {
    let grid = GridSpec::line(256, 40.0).unwrap();
    let params = PacketParams::natural_1d(0.0, 0.0, 1.0).unwrap();
    let walker = ConstrainedWalker::new(&params, &grid).unwrap();
    let cfg = WalkConfig {
        n_steps: 50,
        dt: 0.1,
        hbar: 1.0,
        step: StepModel::Gaussian { step_sd: 1.0 },
        n_trials: 4000,
        master_seed: 77,
        record: RecordPolicy::Summary,
    };
    let runs = walker.run(&cfg).unwrap();
    let d: Vec<f64> = runs.iter().map(|r| r.displacement[0]).collect();
    let (_, v) = mean_var(&d);
    let expected = 50.0 * 0.01;
    assert!((v / expected - 1.0).abs() < 4.0 * (2.0f64 / 4000.0).sqrt(), "{v}");
    assert!(runs.iter().all(|r| r.translation_error < 1e-8));
}

fn small_gue_cfg(seed: u64, trials: usize) -> WalkConfig {
    WalkConfig {
        n_steps: 4,
        dt: 0.1,
        hbar: 1.0,
        step: StepModel::Gue(GueEnsemble::new(12, 1.0).unwrap()),
        n_trials: trials,
        master_seed: seed,
        record: RecordPolicy::Full,
    }
}

#[test]
fn walks_are_reproducible_and_independent_of_thread_count() {
    let phi = basis(12, 2);
    let cfg = small_gue_cfg(42, 16);
    let a = run_unconstrained(&phi, &cfg).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = single.install(|| run_unconstrained(&phi, &cfg).unwrap());
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let c = many.install(|| run_unconstrained(&phi, &cfg).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, c);
    let other = run_unconstrained(&phi, &small_gue_cfg(43, 16)).unwrap();
    assert_ne!(a[0].fs_distances, other[0].fs_distances);
}

#[test]
fn trial_results_do_not_depend_on_ensemble_size() {
    let phi = basis(12, 0);
    let short = run_unconstrained(&phi, &small_gue_cfg(9, 3)).unwrap();
    let long = run_unconstrained(&phi, &small_gue_cfg(9, 10)).unwrap();
    assert_eq!(short[..], long[..3]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn translation_order_does_not_matter(rates in prop::collection::vec(-3.0f64..3.0, 2..12), seed in 0u64..1000) {
        let grid = GridSpec::line(256, 40.0).unwrap();
        let walker = ConstrainedWalker::new(&PacketParams::natural_1d(0.0, 0.6, 1.0).unwrap(), &grid).unwrap();
        let steps: Vec<Vec<f64>> = rates.iter().map(|r| vec![*r]).collect();
        let mut permuted = steps.clone();
        let k = (seed as usize) % permuted.len();
        permuted.rotate_left(k);
        permuted.reverse();
        let a = walker.translate(&steps, 0.2).unwrap();
        let b = walker.translate(&permuted, 0.2).unwrap();
        prop_assert!(a.sub(&b).unwrap().norm() < 1e-8);
        let total: f64 = rates.iter().sum::<f64>() * 0.2;
        let analytic = walker.translated_packet(&[total]).unwrap();
        prop_assert!(a.sub(&analytic).unwrap().norm() < 1e-8);
    }

    #[test]
    fn dense_walks_stay_normalized(seed in 0u64..10_000, scale in 0.1f64..3.0) {
        let mut cfg = small_gue_cfg(seed, 1);
        cfg.step = StepModel::Gue(GueEnsemble::new(12, scale).unwrap());
        cfg.n_steps = 20;
        let r = &run_unconstrained(&basis(12, 1), &cfg).unwrap()[0];
        prop_assert!((r.final_state.as_ref().unwrap().norm() - 1.0).abs() < 1e-10);
        prop_assert!(r.fs_distances.iter().all(|d| (0.0..=std::f64::consts::FRAC_PI_2).contains(d)));
    }

    #[test]
    fn trial_seeds_separate_streams_and_indices(master in any::<u64>(), index in 0u64..1_000_000) {
        let s = stream_id("born");
        let t = stream_id("isotropy");
        prop_assert_eq!(trial_seed(master, s, index), trial_seed(master, s, index));
        prop_assert_ne!(trial_seed(master, s, index), trial_seed(master, s, index + 1));
        prop_assert_ne!(trial_seed(master, s, index), trial_seed(master, t, index));
        prop_assert_ne!(trial_seed(master, s, index), trial_seed(master.wrapping_add(1), s, index));
    }

    #[test]
    fn order_free_sum_ignores_permutation(xs in prop::collection::vec(-1e6f64..1e6, 0..200), rot in 0usize..200) {
        let mut ys = xs.clone();
        if !ys.is_empty() {
            let k = rot % ys.len();
            ys.rotate_left(k);
        }
        ys.reverse();
        prop_assert_eq!(order_free_sum(&xs).to_bits(), order_free_sum(&ys).to_bits());
    }
}

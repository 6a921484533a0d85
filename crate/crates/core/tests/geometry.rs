use approx::assert_relative_eq;
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use stategeom_core::grid::{GridSpec, StateVector};
use stategeom_core::manifold::{
    euclidean_from_fs, fubini_study_distance, make_packet, metric_identity_residual, overlap_gaussian,
    phase_space_metric_identity_residual, phase_space_overlap_sq, tangent_frame, PacketParams,
};

fn line() -> GridSpec {
    GridSpec::line(512, 40.0).unwrap()
}

// |<phi_{a,p}, phi_{b,q}>|^2 from a 4e5-point trapezoid on [-60, 60],
// computed outside this crate.
const QUADRATURE: [([f64; 5], f64); 4] = [
    ([0.0, 0.0, 2.0, 0.0, 1.0], 0.3678794411784407),
    ([0.5, 1.0, -0.5, 0.0, 1.0], 0.28650479686564034),
    ([1.0, -0.7, -1.2, 0.9, 1.3], 0.0064583828112595885),
    ([0.0, 0.0, 0.0, 2.0, 1.0], 0.018315638889082594),
];

#[test]
fn closed_form_overlaps_match_external_quadrature() {
    for ([a, p, b, q, s], value) in QUADRATURE {
        let closed = phase_space_overlap_sq(&[a], &[p], &[b], &[q], s, 1.0);
        assert!((closed - value).abs() < 1e-10, "{a} {p} {b} {q}: {closed} vs {value}");
    }
}

#[test]
fn grid_overlaps_match_external_quadrature() {
    for ([a, p, b, q, s], value) in QUADRATURE {
        let phi = make_packet(&PacketParams::new(vec![a], vec![p], s, 1.0, 1.0).unwrap(), &line()).unwrap();
        let psi = make_packet(&PacketParams::new(vec![b], vec![q], s, 1.0, 1.0).unwrap(), &line()).unwrap();
        let grid_value = phi.inner(&psi).unwrap().norm_sqr();
        assert!((grid_value - value).abs() < 1e-9);
    }
}

#[test]
fn position_metric_lattice() {
    let lattice: Vec<f64> = (0..17).map(|i| -2.0 + 0.25 * i as f64).collect();
    for &a in &lattice {
        for &b in &lattice {
            assert!(metric_identity_residual(&[a], &[b], 1.0, &line()).unwrap() < 1e-6);
        }
    }
}

#[test]
fn phase_space_metric_lattice() {
    for i in 0..5 {
        for j in 0..5 {
            let da = -4.0 + 2.0 * i as f64;
            let dp = -2.0 + j as f64;
            let r =
                phase_space_metric_identity_residual(&[0.5 * da], &[0.3], &[-0.5 * da], &[0.3 + dp], 1.0, 1.0, &line())
                    .unwrap();
            assert!(r < 1e-6, "da={da} dp={dp}: {r}");
        }
    }
}

#[test]
fn euclidean_distance_is_recovered() {
    let g = line();
    for sep in [0.1, 0.7, 2.0, 3.9] {
        let pa = make_packet(&PacketParams::natural_1d(-sep / 2.0, 0.0, 1.0).unwrap(), &g).unwrap();
        let pb = make_packet(&PacketParams::natural_1d(sep / 2.0, 0.0, 1.0).unwrap(), &g).unwrap();
        let theta = fubini_study_distance(&pa, &pb).unwrap();
        assert_relative_eq!(euclidean_from_fs(theta, 1.0), sep, max_relative = 1e-7);
    }
}

#[test]
fn frame_matches_finite_difference_derivatives() {
    // Central differences in a and p of the sampled packet, fiber removed.
    let g = line();
    let base = PacketParams::natural_1d(0.4, -0.6, 1.1).unwrap();
    let phi = make_packet(&base, &g).unwrap();
    let frame = tangent_frame(&base, &g).unwrap();
    let h = 1e-4;
    let diff = |minus: PacketParams, plus: PacketParams| {
        let mut d = make_packet(&plus, &g).unwrap().sub(&make_packet(&minus, &g).unwrap()).unwrap();
        d = d.scaled(Complex64::new(0.5 / h, 0.0));
        let c = phi.inner(&d).unwrap();
        d.add_scaled(-c, &phi).unwrap();
        d.normalized().unwrap()
    };
    let da = diff(
        base.with_phase_point(vec![0.4 - h], vec![-0.6]).unwrap(),
        base.with_phase_point(vec![0.4 + h], vec![-0.6]).unwrap(),
    );
    let dp = diff(
        base.with_phase_point(vec![0.4], vec![-0.6 - h]).unwrap(),
        base.with_phase_point(vec![0.4], vec![-0.6 + h]).unwrap(),
    );
    assert!(da.sub(&frame.position[0]).unwrap().norm() < 1e-7);
    assert!(dp.sub(&frame.momentum[0]).unwrap().norm() < 1e-7);
}

#[test]
fn frame_is_orthonormal_over_phase_space_lattice() {
    let g = line();
    for i in 0..5 {
        for j in 0..5 {
            let a = -4.0 + 2.0 * i as f64;
            let p = -2.0 + j as f64;
            let frame = tangent_frame(&PacketParams::natural_1d(a, p, 1.0).unwrap(), &g).unwrap();
            let gram = frame.gram().unwrap();
            let err = (gram - DMatrix::identity(4, 4)).abs().max();
            assert!(err < 1e-10, "({a}, {p}): {err}");
        }
    }
}

#[test]
fn packet_family_is_overcomplete_but_independent() {
    // Packets one sigma apart: Gram matrix equals the closed-form overlaps,
    // is positive definite, and far from the identity.
    let g = line();
    let centers: Vec<f64> = (-3..=3).map(f64::from).collect();
    let packets: Vec<StateVector> =
        centers.iter().map(|&a| make_packet(&PacketParams::natural_1d(a, 0.0, 1.0).unwrap(), &g).unwrap()).collect();
    let n = packets.len();
    let gram = DMatrix::from_fn(n, n, |i, j| packets[i].inner(&packets[j]).unwrap().re);
    for i in 0..n {
        for j in 0..n {
            assert!((gram[(i, j)] - overlap_gaussian(&[centers[i]], &[centers[j]], 1.0)).abs() < 1e-9);
        }
    }
    let eig = gram.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    assert!(min > 1e-6, "{min}");
    assert!(gram[(0, 1)] > 0.8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fs_distance_is_a_bounded_symmetric_phase_invariant(
        a in -5.0f64..5.0, b in -5.0f64..5.0, p in -2.0f64..2.0, q in -2.0f64..2.0, phase in 0.0f64..6.3,
    ) {
        let g = line();
        let phi = make_packet(&PacketParams::natural_1d(a, p, 1.0).unwrap(), &g).unwrap();
        let psi = make_packet(&PacketParams::natural_1d(b, q, 1.0).unwrap(), &g).unwrap();
        let d1 = fubini_study_distance(&phi, &psi).unwrap();
        let d2 = fubini_study_distance(&psi, &phi).unwrap();
        let d3 = fubini_study_distance(&phi, &psi.scaled(Complex64::from_polar(1.0, phase))).unwrap();
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&d1));
        prop_assert!((d1 - d2).abs() < 1e-12);
        prop_assert!((d1 - d3).abs() < 1e-12);
    }

    #[test]
    fn metric_identity_holds_anywhere_inside_the_margin(a in -8.0f64..8.0, b in -8.0f64..8.0, sigma in 0.8f64..1.5) {
        let r = metric_identity_residual(&[a], &[b], sigma, &line()).unwrap();
        prop_assert!(r < 1e-6);
    }

    #[test]
    fn metric_is_translation_invariant(a in -5.0f64..5.0, b in -5.0f64..5.0, shift in -3.0f64..3.0) {
        prop_assert!((overlap_gaussian(&[a], &[b], 1.0) - overlap_gaussian(&[a + shift], &[b + shift], 1.0)).abs() < 1e-14);
    }
}

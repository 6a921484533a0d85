use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use stategeom_core::dynamics::{
    commutator_expectation, decompose_velocity, ehrenfest_projections, quantum_classical_compare, velocity_state,
    Observable,
};
use stategeom_core::grid::{
    dense_hamiltonian, evolve_unitary, GridSpec, HamiltonianSpec, Potential, SplitStep, StateVector,
};
use stategeom_core::linalg::evolve_dense;
use stategeom_core::manifold::{make_packet, PacketParams};

fn line() -> GridSpec {
    GridSpec::line(512, 40.0).unwrap()
}

fn potentials() -> Vec<HamiltonianSpec> {
    vec![HamiltonianSpec::natural(Potential::Free), HamiltonianSpec::natural(Potential::Linear { force: vec![0.4] })]
}

#[test]
fn velocity_matches_central_difference_of_the_flow() {
    let g = line();
    let p = PacketParams::natural_1d(0.5, 0.8, 1.0).unwrap();
    let h = HamiltonianSpec::natural(Potential::Harmonic { stiffness: 0.3 });
    let phi = make_packet(&p, &g).unwrap();
    let dt = 1e-4;
    let fwd = evolve_unitary(&phi, &h, dt).unwrap();
    let back = evolve_unitary(&phi, &h, -dt).unwrap();
    let fd = fwd.sub(&back).unwrap().scaled(Complex64::new(0.5 / dt, 0.0));
    let v = velocity_state(&phi, &h).unwrap();
    assert!(fd.sub(&v).unwrap().norm() < 1e-6 * v.norm());
}

#[test]
fn decomposition_lattice() {
    let g = line();
    for h in potentials() {
        for a in [-2.0, 0.0, 2.0] {
            for p in [-1.0, 0.0, 1.0] {
                let params = PacketParams::natural_1d(a, p, 1.0).unwrap();
                let d = decompose_velocity(&params, &h, &g).unwrap();
                assert!(d.relative_residual() < 1e-6, "{a} {p}: {}", d.relative_residual());
                assert!(d.worst_excess(1e-4, 1e-9) <= 0.0, "{a} {p}: {d:?}");
            }
        }
    }
}

#[test]
fn decomposition_with_non_unit_constants() {
    let g = GridSpec::line(512, 40.0).unwrap();
    let params = PacketParams::new(vec![1.0], vec![0.7], 1.3, 2.5, 0.6).unwrap();
    let h = HamiltonianSpec::new(2.5, 0.6, Potential::Linear { force: vec![-0.2] }).unwrap();
    let d = decompose_velocity(&params, &h, &g).unwrap();
    assert!(d.relative_residual() < 1e-6);
    assert!(d.worst_excess(1e-4, 1e-9) <= 0.0, "{d:?}");
}

#[test]
fn commutators_and_ehrenfest_against_poisson_brackets() {
    let g = line();
    for h in potentials() {
        for a in [-2.0, 0.0, 2.0] {
            for p in [-1.0, 0.0, 1.0] {
                let params = PacketParams::natural_1d(a, p, 1.0).unwrap();
                let phi = make_packet(&params, &g).unwrap();
                let force = h.force_at(&[a]).unwrap()[0];
                let x_dot = commutator_expectation(&phi, Observable::Position, &h).unwrap()[0];
                let p_dot = commutator_expectation(&phi, Observable::Momentum, &h).unwrap()[0];
                assert!((x_dot - p).abs() < 1e-6);
                assert!((p_dot - force).abs() < 1e-6);
                let r = ehrenfest_projections(&params, &h, &g).unwrap();
                assert!((r.position[0] - p).abs() < 1e-6);
                assert!((r.momentum[0] - force).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn harmonic_packet_follows_the_classical_orbit_for_a_period() {
    let g = line();
    let h = HamiltonianSpec::natural(Potential::Harmonic { stiffness: 1.0 });
    let params = PacketParams::natural_1d(3.0, 0.5, 1.0).unwrap();
    let period = 2.0 * std::f64::consts::PI;
    let r = quantum_classical_compare(&params, &h, &g, period, 0.005).unwrap();
    assert!(r.max_position_deviation < r.grid_spacing, "{}", r.max_position_deviation);
    assert!(!r.boundary_warning);
}

fn dense_reference(phi: &StateVector, h: &HamiltonianSpec, t: f64) -> DVector<Complex64> {
    let m = dense_hamiltonian(phi.grid(), h).unwrap();
    evolve_dense(&phi.to_coordinates(), &m, t, h.hbar).unwrap()
}

#[test]
fn split_step_is_second_order() {
    let g = GridSpec::line(64, 16.0).unwrap();
    let h = HamiltonianSpec::natural(Potential::Harmonic { stiffness: 0.5 });
    let phi = make_packet(&PacketParams::natural_1d(1.0, 0.4, 1.0).unwrap(), &g).unwrap();
    let t = 1.0;
    let exact = dense_reference(&phi, &h, t);
    let error = |n: usize| {
        let stepper = SplitStep::new(g, &h, t / n as f64).unwrap();
        let mut psi = phi.clone();
        for _ in 0..n {
            stepper.step(&mut psi).unwrap();
        }
        (psi.to_coordinates() - &exact).norm()
    };
    let (e1, e2, e3) = (error(10), error(20), error(40));
    assert!(e1 / e2 >= 3.8 && e2 / e3 >= 3.8, "{e1} {e2} {e3}");
}

#[test]
fn free_split_step_is_exact() {
    let g = GridSpec::line(64, 16.0).unwrap();
    let h = HamiltonianSpec::natural(Potential::Free);
    let phi = make_packet(&PacketParams::natural_1d(-1.0, 0.7, 1.0).unwrap(), &g).unwrap();
    let exact = dense_reference(&phi, &h, 0.8);
    let split = evolve_unitary(&phi, &h, 0.8).unwrap().to_coordinates();
    assert!((split - exact).norm() < 1e-11);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pythagoras_at_packet_states(a in -4.0f64..4.0, p in -1.5f64..1.5, f in -0.5f64..0.5, sigma in 0.9f64..1.4) {
        let g = line();
        let params = PacketParams::natural_1d(a, p, sigma).unwrap();
        let h = HamiltonianSpec::natural(Potential::Linear { force: vec![f] });
        let d = decompose_velocity(&params, &h, &g).unwrap();
        prop_assert!(d.relative_residual() < 1e-6);
        prop_assert!(d.worst_excess(1e-4, 1e-9) <= 0.0);
    }

    #[test]
    fn harmonic_decomposition_closes(a in -3.0f64..3.0, p in -1.0f64..1.0, k in 0.05f64..0.5) {
        let params = PacketParams::natural_1d(a, p, 1.0).unwrap();
        let h = HamiltonianSpec::natural(Potential::Harmonic { stiffness: k });
        let d = decompose_velocity(&params, &h, &line()).unwrap();
        prop_assert!(d.relative_residual() < 1e-6);
        prop_assert!(d.worst_excess(1e-4, 1e-9) <= 0.0);
    }

    #[test]
    fn scaled_hamiltonian_scales_velocity(a in -3.0f64..3.0, p in -1.0f64..1.0, factor in 0.2f64..5.0) {
        let g = line();
        let phi = make_packet(&PacketParams::natural_1d(a, p, 1.0).unwrap(), &g).unwrap();
        let h = HamiltonianSpec::natural(Potential::Harmonic { stiffness: 0.2 });
        let v = velocity_state(&phi, &h).unwrap().norm();
        let vs = velocity_state(&phi, &h.scaled(factor).unwrap()).unwrap().norm();
        prop_assert!((vs / v - factor).abs() < 1e-10 * factor);
    }
}

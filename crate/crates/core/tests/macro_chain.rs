use proptest::prelude::*;
use stategeom_core::macro_est::{
    chain, displacement_rms, freezing_report, freezing_sweep, fs_angle_asymptote, fs_angle_of_displacement, log_spaced,
    stokes_einstein, MacroScenario, Meters, PascalSeconds, Radians, Seconds, SquareMetersPerSecond,
    REFERENCE_DIFFUSION,
};

// Frozen from an independent double-precision evaluation.
const D_AIR: f64 = 1.192277298449824e-14;
const D_ROUNDED: f64 = 2.146099137209683e-14;
const DELTA_AXIS: f64 = 4.4721359549995796e-13;
const DELTA_SPATIAL: f64 = 7.745966692414834e-13;
const THETA_SPATIAL: f64 = 3.8729833462074154e-8;
const THETA_LAMBDA: f64 = 0.4896513204696194;

#[test]
fn stokes_einstein_values() {
    let s = MacroScenario::paper_1mm();
    assert!((stokes_einstein(&s).0 / D_AIR - 1.0).abs() < 1e-12);
    let rounded = s.with_viscosity(PascalSeconds(1e-5));
    assert!((stokes_einstein(&rounded).0 / D_ROUNDED - 1.0).abs() < 1e-12);
}

#[test]
fn reference_chain_values() {
    let c = chain(&MacroScenario::paper_1mm(), REFERENCE_DIFFUSION);
    assert!((c.displacement_per_axis.0 / DELTA_AXIS - 1.0).abs() < 1e-12);
    assert!((c.displacement.0 / DELTA_SPATIAL - 1.0).abs() < 1e-12);
    assert!((c.theta.0 / THETA_SPATIAL - 1.0).abs() < 1e-9);
    assert!((1e-13..=1e-12).contains(&c.displacement.0));
    let ratio = c.theta.0 / 1e-7;
    assert!((1.0 / 3.0..=3.0).contains(&ratio), "{ratio}");
}

#[test]
fn report_carries_both_chains_and_the_discrepancy() {
    let r = freezing_report(&MacroScenario::paper_1mm(), None).unwrap();
    assert!((r.theta_min.0 - THETA_LAMBDA).abs() < 1e-12);
    assert!((r.direct.diffusion.0 / D_AIR - 1.0).abs() < 1e-12);
    assert!((r.rounded_viscosity.diffusion.0 / D_ROUNDED - 1.0).abs() < 1e-12);
    assert!((r.discrepancy_ratio - 1e-12 / D_AIR).abs() < 1e-9);
    assert!(r.frozen);
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("discrepancy_ratio") && json.contains("note"));
}

#[test]
fn explicit_threshold_overrides_the_default() {
    let r = freezing_report(&MacroScenario::paper_1mm(), Some(Radians(1e-12))).unwrap();
    assert!(!r.frozen);
    assert!(freezing_report(&MacroScenario::paper_1mm(), Some(Radians(0.0))).is_err());
}

#[test]
fn radius_sweep_is_strictly_monotone() {
    let radii = log_spaced(1e-10, 1e-1, 60).unwrap();
    let rows = freezing_sweep(&MacroScenario::paper_1mm(), &radii, None).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].diffusion.0 < w[0].diffusion.0);
        assert!(w[1].theta.0 < w[0].theta.0);
    }
}

proptest! {
    #[test]
    fn angle_formulas_agree(delta in 0.0f64..5.0, sigma in 0.1f64..3.0) {
        let stable = fs_angle_of_displacement(Meters(delta), Meters(sigma)).0;
        let direct = (-(delta * delta) / (8.0 * sigma * sigma)).exp().acos();
        // arccos loses ~sqrt(eps) absolute accuracy near zero
        prop_assert!((stable - direct).abs() < 2e-8);
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&stable));
    }

    #[test]
    fn asymptote_is_accurate_for_small_ratios(ratio in 1e-9f64..1e-3, sigma in 1e-6f64..1.0) {
        let delta = Meters(ratio * sigma);
        let exact = fs_angle_of_displacement(delta, Meters(sigma)).0;
        let approx = fs_angle_asymptote(delta, Meters(sigma)).0;
        prop_assert!((exact / approx - 1.0).abs() < 1e-6);
    }

    #[test]
    fn displacement_follows_the_square_root_law(d in 1e-15f64..1e-9, t in 1e-15f64..1.0) {
        let one = displacement_rms(SquareMetersPerSecond(d), Seconds(t)).0;
        let four = displacement_rms(SquareMetersPerSecond(d), Seconds(4.0 * t)).0;
        prop_assert!((four / one - 2.0).abs() < 1e-12);
    }

    #[test]
    fn angle_scales_as_inverse_square_root_of_radius(exp in -9.0f64..-2.0) {
        let s = MacroScenario::paper_1mm().with_radius(Meters(10f64.powf(exp)));
        let small = s.with_radius(Meters(s.radius.0 * 1e-6));
        let ratio = chain(&small, stokes_einstein(&small)).theta.0 / chain(&s, stokes_einstein(&s)).theta.0;
        prop_assert!((ratio / 1e3 - 1.0).abs() < 1e-3);
    }
}

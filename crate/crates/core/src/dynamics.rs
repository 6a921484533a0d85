//! Schrödinger flow at packet states.
//!
//! With `u = (x - a)/sigma` per axis the velocity `-(i/hbar) h phi` of a
//! packet under a potential of degree at most two lies in the span of the
//! tangent frame:
//!
//! * `e_a = u phi` carries `p / (2 m sigma)` (classical velocity),
//! * `e_p = i u phi` carries `f sigma / hbar` with `f = -grad V(a)` (acceleration),
//! * `e_spread` carries `sqrt(2d) hbar / (8 m sigma^2)`, minus
//!   `sqrt(d) k sigma^2 / (sqrt 2 hbar)` for a spring of stiffness `k`,
//! * `-i phi` carries `E / hbar` with `E = <phi, h phi>`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    apply_hamiltonian, apply_momentum, apply_position, momentum_expectation, position_expectation, GridSpec,
    HamiltonianSpec, Potential, SplitStep, StateVector,
};
use crate::manifold::{make_packet, tangent_frame, PacketParams};
use num_complex::Complex64;

/// `d phi / dt = -(i/hbar) h phi`.
pub fn velocity_state(phi: &StateVector, h: &HamiltonianSpec) -> Result<StateVector> {
    Ok(apply_hamiltonian(phi, h)?.state.scaled(Complex64::new(0.0, -1.0 / h.hbar)))
}

/// Frame components of the velocity, in units of 1/time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityComponents {
    /// Per axis, along `e_a`.
    pub classical: Vec<f64>,
    /// Per axis, along `e_p`.
    pub acceleration: Vec<f64>,
    pub spreading: f64,
    pub phase_rate: f64,
}

impl VelocityComponents {
    pub fn classical_magnitude(&self) -> f64 {
        self.classical.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn acceleration_magnitude(&self) -> f64 {
        self.acceleration.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.classical.iter().chain(&self.acceleration).map(|c| c * c).sum::<f64>()
            + self.spreading * self.spreading
            + self.phase_rate * self.phase_rate
    }

    fn pairs<'a>(&'a self, other: &'a Self) -> impl Iterator<Item = (f64, f64)> + 'a {
        self.classical
            .iter()
            .zip(&other.classical)
            .chain(self.acceleration.iter().zip(&other.acceleration))
            .map(|(a, b)| (*a, *b))
            .chain([(self.spreading, other.spreading), (self.phase_rate, other.phase_rate)])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityDecomposition {
    pub measured: VelocityComponents,
    pub predicted: VelocityComponents,
    /// `|| d phi / dt ||^2`.
    pub total_speed_sq: f64,
    /// `total_speed_sq - measured.sum_of_squares()`.
    pub residual_sq: f64,
    pub boundary_warning: bool,
}

impl VelocityDecomposition {
    pub fn relative_residual(&self) -> f64 {
        self.residual_sq.abs() / self.total_speed_sq
    }

    /// Largest `|measured - predicted| - rel * |predicted|` over components;
    /// non-positive when every component is within `rel` relative plus `abs`.
    pub fn worst_excess(&self, rel: f64, abs: f64) -> f64 {
        self.measured
            .pairs(&self.predicted)
            .map(|(m, p)| (m - p).abs() - rel * p.abs() - abs)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Closed-form frame components for Free, Linear and Harmonic potentials.
pub fn predicted_components(params: &PacketParams, h: &HamiltonianSpec) -> Result<VelocityComponents> {
    let dim = params.dim();
    let (m, hbar, s) = (h.mass, h.hbar, params.sigma);
    let d = dim as f64;
    let stiffness = match h.potential {
        Potential::Free | Potential::Linear { .. } => 0.0,
        Potential::Harmonic { stiffness } => stiffness,
        Potential::Tabulated { .. } => return Err(Error::UnsupportedPotential("closed-form decomposition")),
    };
    let force = h.force_at(&params.position)?;
    let v_a = h.potential_at(&params.position).unwrap_or(0.0);
    let p2: f64 = params.momentum.iter().map(|p| p * p).sum();
    let energy = d * hbar * hbar / (8.0 * m * s * s) + p2 / (2.0 * m) + v_a + d * stiffness * s * s / 2.0;
    Ok(VelocityComponents {
        classical: params.momentum.iter().map(|p| p / (2.0 * m * s)).collect(),
        acceleration: force.iter().map(|f| f * s / hbar).collect(),
        spreading: (2.0 * d).sqrt() * hbar / (8.0 * m * s * s)
            - d.sqrt() * stiffness * s * s / (std::f64::consts::SQRT_2 * hbar),
        phase_rate: energy / hbar,
    })
}

/// Projects the grid velocity onto the tangent frame and compares with the
/// closed forms.
pub fn decompose_velocity(
    params: &PacketParams,
    h: &HamiltonianSpec,
    grid: &GridSpec,
) -> Result<VelocityDecomposition> {
    if (params.mass - h.mass).abs() > 0.0 || (params.hbar - h.hbar).abs() > 0.0 {
        return Err(Error::InvalidParameter("packet and Hamiltonian disagree on mass or hbar".into()));
    }
    let predicted = predicted_components(params, h)?;
    let phi = make_packet(params, grid)?;
    let applied = apply_hamiltonian(&phi, h)?;
    let velocity = applied.state.scaled(Complex64::new(0.0, -1.0 / h.hbar));
    let frame = tangent_frame(params, grid)?;
    let project = |v: &StateVector| velocity.real_metric(v);
    let measured = VelocityComponents {
        classical: frame.position.iter().map(project).collect::<Result<_>>()?,
        acceleration: frame.momentum.iter().map(project).collect::<Result<_>>()?,
        spreading: project(&frame.spread)?,
        phase_rate: project(&frame.phase)?,
    };
    let total_speed_sq = velocity.norm_sq();
    Ok(VelocityDecomposition {
        residual_sq: total_speed_sq - measured.sum_of_squares(),
        measured,
        predicted,
        total_speed_sq,
        boundary_warning: applied.boundary_warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Position,
    Momentum,
}

/// `(phi, (1/(i hbar)) [A, h] phi)` per axis, which equals `(2/hbar) Im (A phi, h phi)`.
pub fn commutator_expectation(phi: &StateVector, observable: Observable, h: &HamiltonianSpec) -> Result<Vec<f64>> {
    let h_phi = apply_hamiltonian(phi, h)?.state;
    (0..phi.grid().dim())
        .map(|axis| {
            let a_phi = match observable {
                Observable::Position => apply_position(phi, axis)?.state,
                Observable::Momentum => apply_momentum(phi, axis, h.hbar)?.state,
            };
            Ok(2.0 / h.hbar * a_phi.inner(&h_phi)?.im)
        })
        .collect()
}

/// Rates of change of `<x>` and `<p>` per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EhrenfestRates {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
}

/// `d<x>/dt = 2 Re (d phi/dt, (x - <x>) phi)` and likewise for `p`. The
/// shifted vectors are used unnormalized: the mean term is orthogonal to the
/// velocity because the flow preserves the norm, and the factor 2 makes the
/// free case return `p/m` exactly.
pub fn ehrenfest_projections(params: &PacketParams, h: &HamiltonianSpec, grid: &GridSpec) -> Result<EhrenfestRates> {
    let phi = make_packet(params, grid)?;
    let velocity = velocity_state(&phi, h)?;
    let mut rates = EhrenfestRates { position: Vec::new(), momentum: Vec::new() };
    for axis in 0..params.dim() {
        let mut x_shift = apply_position(&phi, axis)?.state;
        x_shift.add_scaled(Complex64::new(-position_expectation(&phi, axis)?, 0.0), &phi)?;
        rates.position.push(2.0 * velocity.real_metric(&x_shift)?);

        let mut p_shift = apply_momentum(&phi, axis, h.hbar)?.state;
        p_shift.add_scaled(Complex64::new(-momentum_expectation(&phi, axis, h.hbar)?, 0.0), &phi)?;
        rates.momentum.push(2.0 * velocity.real_metric(&p_shift)?);
    }
    Ok(rates)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub time: f64,
}

impl ClassicalState {
    pub fn new(position: Vec<f64>, momentum: Vec<f64>) -> Result<Self> {
        if position.len() != momentum.len() {
            return Err(Error::DimensionMismatch { expected: position.len(), got: momentum.len() });
        }
        if position.iter().chain(&momentum).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("classical state must be finite".into()));
        }
        Ok(Self { position, momentum, time: 0.0 })
    }
}

/// `p^2 / 2m + V(a)` for analytic potentials.
pub fn classical_energy(c: &ClassicalState, h: &HamiltonianSpec) -> Result<f64> {
    let v = h.potential_at(&c.position).ok_or(Error::UnsupportedPotential("classical energy"))?;
    Ok(c.momentum.iter().map(|p| p * p).sum::<f64>() / (2.0 * h.mass) + v)
}

/// Kick-drift-kick leapfrog for `a' = p/m`, `p' = -grad V`; returns
/// `n_steps + 1` states starting with `c0`.
pub fn newtonian_trajectory(
    c0: &ClassicalState,
    h: &HamiltonianSpec,
    dt: f64,
    n_steps: usize,
) -> Result<Vec<ClassicalState>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut c = c0.clone();
    let mut force = h.force_at(&c.position)?;
    out.push(c.clone());
    for step in 1..=n_steps {
        for (p, f) in c.momentum.iter_mut().zip(&force) {
            *p += 0.5 * dt * f;
        }
        for (a, p) in c.position.iter_mut().zip(&c.momentum) {
            *a += dt * p / h.mass;
        }
        force = h.force_at(&c.position)?;
        for (p, f) in c.momentum.iter_mut().zip(&force) {
            *p += 0.5 * dt * f;
        }
        c.time = c0.time + step as f64 * dt;
        out.push(c.clone());
    }
    Ok(out)
}

/// Mean spacing between successive upward zero crossings of the centered
/// coordinate along `axis`; `None` with fewer than two crossings.
pub fn estimate_period(trajectory: &[ClassicalState], axis: usize) -> Option<f64> {
    let mut crossings = Vec::new();
    for w in trajectory.windows(2) {
        let (x0, x1) = (w[0].position[axis], w[1].position[axis]);
        if x0 < 0.0 && x1 >= 0.0 {
            let frac = -x0 / (x1 - x0);
            crossings.push(w[0].time + frac * (w[1].time - w[0].time));
        }
    }
    if crossings.len() < 2 {
        return None;
    }
    Some((crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64)
}

/// Quantum expectations against the leapfrog trajectory on a shared time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub times: Vec<f64>,
    /// `<x>` per sample time, per axis.
    pub quantum_position: Vec<Vec<f64>>,
    pub classical_position: Vec<Vec<f64>>,
    pub max_position_deviation: f64,
    pub max_momentum_deviation: f64,
    pub grid_spacing: f64,
    pub boundary_warning: bool,
}

/// Evolves the packet with split steps of size `dt` up to `t_final` and
/// records `<x>`, `<p>` against the classical trajectory from `(a, p)`.
pub fn quantum_classical_compare(
    params: &PacketParams,
    h: &HamiltonianSpec,
    grid: &GridSpec,
    t_final: f64,
    dt: f64,
) -> Result<ComparisonReport> {
    if matches!(h.potential, Potential::Tabulated { .. }) {
        return Err(Error::UnsupportedPotential("classical comparison"));
    }
    if !(t_final.is_finite() && t_final > 0.0 && dt > 0.0) {
        return Err(Error::InvalidParameter("horizon and step must be positive".into()));
    }
    let n_steps = (t_final / dt).round().max(1.0) as usize;
    let dt = t_final / n_steps as f64;
    let c0 = ClassicalState::new(params.position.clone(), params.momentum.clone())?;
    let classical = newtonian_trajectory(&c0, h, dt, n_steps)?;

    let stepper = SplitStep::new(*grid, h, dt)?;
    let mut phi = make_packet(params, grid)?;
    let dim = params.dim();
    let mut report = ComparisonReport {
        times: Vec::with_capacity(n_steps + 1),
        quantum_position: Vec::with_capacity(n_steps + 1),
        classical_position: Vec::with_capacity(n_steps + 1),
        max_position_deviation: 0.0,
        max_momentum_deviation: 0.0,
        grid_spacing: grid.spacing(),
        boundary_warning: false,
    };
    for (step, c) in classical.iter().enumerate() {
        if step > 0 {
            stepper.step(&mut phi)?;
        }
        report.boundary_warning |= phi.near_boundary();
        let x: Vec<f64> = (0..dim).map(|ax| position_expectation(&phi, ax)).collect::<Result<_>>()?;
        for (ax, xa) in x.iter().enumerate() {
            let p = momentum_expectation(&phi, ax, h.hbar)?;
            report.max_momentum_deviation = report.max_momentum_deviation.max((p - c.momentum[ax]).abs());
            report.max_position_deviation = report.max_position_deviation.max((xa - c.position[ax]).abs());
        }
        report.times.push(c.time);
        report.quantum_position.push(x);
        report.classical_position.push(c.position.clone());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::line(512, 40.0).unwrap()
    }

    fn linear(f: f64) -> HamiltonianSpec {
        HamiltonianSpec::natural(Potential::Linear { force: vec![f] })
    }

    #[test]
    fn free_rest_speed_matches_closed_form() {
        let p = PacketParams::natural_1d(0.0, 0.0, 1.0).unwrap();
        let h = HamiltonianSpec::natural(Potential::Free);
        let phi = make_packet(&p, &grid()).unwrap();
        let v = velocity_state(&phi, &h).unwrap();
        let e: f64 = 1.0 / 8.0;
        let expected = e * e + 1.0 / 32.0;
        assert!((v.norm_sq() - expected).abs() < 1e-9, "{}", v.norm_sq());
    }

    #[test]
    fn doubling_hamiltonian_doubles_speed() {
        let p = PacketParams::natural_1d(1.0, 0.5, 1.0).unwrap();
        let h = linear(0.3);
        let phi = make_packet(&p, &grid()).unwrap();
        let v1 = velocity_state(&phi, &h).unwrap().norm();
        let mut h2 = h.clone();
        h2.potential = Potential::Linear { force: vec![0.6] };
        h2.mass = 0.5;
        let v2 = velocity_state(&phi, &h2).unwrap().norm();
        assert!((v2 / v1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn free_rest_packet_has_no_classical_components() {
        let p = PacketParams::natural_1d(0.0, 0.0, 1.0).unwrap();
        let d = decompose_velocity(&p, &HamiltonianSpec::natural(Potential::Free), &grid()).unwrap();
        assert!(d.measured.classical[0].abs() < 1e-12);
        assert!(d.measured.acceleration[0].abs() < 1e-12);
    }

    #[test]
    fn linear_potential_acceleration_component() {
        let p = PacketParams::natural_1d(0.5, -0.4, 1.0).unwrap();
        let d = decompose_velocity(&p, &linear(0.7), &grid()).unwrap();
        assert!((d.measured.acceleration[0] - 0.7).abs() < 1e-4 * 0.7);
        assert!(d.worst_excess(1e-4, 1e-9) <= 0.0);
        assert!(d.relative_residual() < 1e-6);
    }

    #[test]
    fn harmonic_decomposition_is_complete() {
        let p = PacketParams::natural_1d(1.5, 0.8, 1.0).unwrap();
        let h = HamiltonianSpec::natural(Potential::Harmonic { stiffness: 0.2 });
        let d = decompose_velocity(&p, &h, &grid()).unwrap();
        assert!(d.relative_residual() < 1e-6);
        assert!(d.worst_excess(1e-4, 1e-9) <= 0.0, "{d:?}");
    }

    #[test]
    fn two_dimensional_decomposition() {
        let g = GridSpec::new(2, 64, 20.0).unwrap();
        let p = PacketParams::new(vec![0.5, -1.0], vec![0.3, 0.2], 1.2, 1.0, 1.0).unwrap();
        let h = HamiltonianSpec::natural(Potential::Linear { force: vec![0.1, -0.2] });
        let d = decompose_velocity(&p, &h, &g).unwrap();
        assert!(d.relative_residual() < 1e-6);
        assert!(d.worst_excess(1e-4, 1e-9) <= 0.0, "{d:?}");
    }

    #[test]
    fn tabulated_potential_is_rejected() {
        let g = GridSpec::line(64, 16.0).unwrap();
        let p = PacketParams::natural_1d(0.0, 0.0, 1.0).unwrap();
        let h = HamiltonianSpec::natural(Potential::Tabulated { values: vec![0.0; 64] });
        assert!(matches!(decompose_velocity(&p, &h, &g), Err(Error::UnsupportedPotential(_))));
    }

    #[test]
    fn commutators_match_poisson_brackets() {
        let g = grid();
        let p = PacketParams::natural_1d(-1.0, 0.9, 1.0).unwrap();
        let phi = make_packet(&p, &g).unwrap();
        let free = HamiltonianSpec::natural(Potential::Free);
        assert!((commutator_expectation(&phi, Observable::Position, &free).unwrap()[0] - 0.9).abs() < 1e-6);
        assert!(commutator_expectation(&phi, Observable::Momentum, &free).unwrap()[0].abs() < 1e-6);
        let lin = linear(-0.35);
        assert!((commutator_expectation(&phi, Observable::Momentum, &lin).unwrap()[0] + 0.35).abs() < 1e-6);
    }

    #[test]
    fn ehrenfest_rates() {
        let g = grid();
        let p = PacketParams::natural_1d(0.3, 1.1, 1.0).unwrap();
        let r = ehrenfest_projections(&p, &linear(0.25), &g).unwrap();
        assert!((r.position[0] - 1.1).abs() < 1e-6);
        assert!((r.momentum[0] - 0.25).abs() < 1e-6);
        let rest = PacketParams::natural_1d(0.0, 0.0, 1.0).unwrap();
        let r0 = ehrenfest_projections(&rest, &HamiltonianSpec::natural(Potential::Free), &g).unwrap();
        assert!(r0.position[0].abs() < 1e-12 && r0.momentum[0].abs() < 1e-12);
    }

    #[test]
    fn free_trajectory_is_linear() {
        let c0 = ClassicalState::new(vec![1.0], vec![0.5]).unwrap();
        let traj = newtonian_trajectory(&c0, &HamiltonianSpec::natural(Potential::Free), 0.1, 50).unwrap();
        let last = traj.last().unwrap();
        assert!((last.position[0] - 3.5).abs() < 1e-12);
        assert!((last.time - 5.0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_energy_and_period() {
        let h = HamiltonianSpec::new(2.0, 1.0, Potential::Harmonic { stiffness: 0.5 }).unwrap();
        let c0 = ClassicalState::new(vec![1.0], vec![0.0]).unwrap();
        let e0 = classical_energy(&c0, &h).unwrap();
        let traj = newtonian_trajectory(&c0, &h, 1e-4, 10_000).unwrap();
        let drift = traj.iter().map(|c| (classical_energy(c, &h).unwrap() - e0).abs() / e0).fold(0.0, f64::max);
        assert!(drift < 1e-8, "{drift}");

        let period = 2.0 * std::f64::consts::PI * (2.0f64 / 0.5).sqrt();
        let long = newtonian_trajectory(&c0, &h, 1e-2, (3.5 * period / 1e-2) as usize).unwrap();
        let est = estimate_period(&long, 0).unwrap();
        assert!((est / period - 1.0).abs() < 1e-3, "{est} vs {period}");
    }

    #[test]
    fn quantum_tracks_classical_for_linear_force() {
        let p = PacketParams::natural_1d(-3.0, 0.0, 1.0).unwrap();
        // the packet spreads to sigma ~ 5 by t = 10, so the box is widened
        let wide = GridSpec::line(1024, 80.0).unwrap();
        let r = quantum_classical_compare(&p, &linear(0.1), &wide, 10.0, 0.01).unwrap();
        assert!(r.max_position_deviation < r.grid_spacing, "{}", r.max_position_deviation);
        assert!(!r.boundary_warning);
    }

    #[test]
    fn free_rest_packet_stays_centered() {
        let p = PacketParams::natural_1d(2.0, 0.0, 1.0).unwrap();
        let r = quantum_classical_compare(&p, &HamiltonianSpec::natural(Potential::Free), &grid(), 5.0, 0.05).unwrap();
        assert!(r.quantum_position.iter().all(|x| (x[0] - 2.0).abs() < 1e-9));
    }
}

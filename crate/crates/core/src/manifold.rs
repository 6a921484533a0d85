//! Gaussian packets as points of the classical (phase) space submanifold.
//!
//! A phase point `(a, p)` with width `sigma` maps to the packet
//! `(2 pi sigma^2)^{-d/4} exp(-(x-a)^2 / (4 sigma^2)) exp(i p.x / hbar)`.
//! With `2 sigma` as the unit of length the induced Fubini-Study geometry is
//! Euclidean: `cos^2 theta = exp(-(a-b)^2 / (4 sigma^2))`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{apply_momentum, apply_position, momentum_expectation, position_expectation, GridSpec, StateVector};

/// Required distance, in units of `sigma`, between the packet center and the
/// grid boundary.
pub const MARGIN_SIGMAS: f64 = 6.0;

/// Classical phase point plus packet width and physical constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketParams {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub sigma: f64,
    pub mass: f64,
    pub hbar: f64,
}

impl PacketParams {
    pub fn new(position: Vec<f64>, momentum: Vec<f64>, sigma: f64, mass: f64, hbar: f64) -> Result<Self> {
        if position.len() != momentum.len() || position.is_empty() {
            return Err(Error::DimensionMismatch { expected: position.len(), got: momentum.len() });
        }
        for (name, v) in [("sigma", sigma), ("mass", mass), ("hbar", hbar)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if position.iter().chain(&momentum).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("phase point must be finite".into()));
        }
        Ok(Self { position, momentum, sigma, mass, hbar })
    }

    /// One-dimensional packet with `m = hbar = 1`.
    pub fn natural_1d(a: f64, p: f64, sigma: f64) -> Result<Self> {
        Self::new(vec![a], vec![p], sigma, 1.0, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }

    pub fn with_phase_point(&self, position: Vec<f64>, momentum: Vec<f64>) -> Result<Self> {
        Self::new(position, momentum, self.sigma, self.mass, self.hbar)
    }

    /// Continuum packet amplitude at `x`.
    pub fn amplitude(&self, x: &[f64]) -> Complex64 {
        let d = self.dim() as f64;
        let s2 = self.sigma * self.sigma;
        let r2: f64 = x.iter().zip(&self.position).map(|(xi, ai)| (xi - ai) * (xi - ai)).sum();
        let phase: f64 = x.iter().zip(&self.momentum).map(|(xi, pi)| xi * pi).sum::<f64>() / self.hbar;
        let norm = (2.0 * std::f64::consts::PI * s2).powf(-d / 4.0);
        Complex64::from_polar(norm * (-r2 / (4.0 * s2)).exp(), phase)
    }

    /// Fails when the center is closer than `MARGIN_SIGMAS * sigma` to a face.
    pub fn check_margin(&self, grid: &GridSpec) -> Result<()> {
        if grid.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), got: self.dim() });
        }
        let margin = MARGIN_SIGMAS * self.sigma;
        for (axis, a) in self.position.iter().enumerate() {
            if a.abs() + margin > grid.half_extent() {
                return Err(Error::MarginViolation { axis, margin, half_extent: grid.half_extent() });
            }
        }
        Ok(())
    }
}

/// Samples the packet on the grid and renormalizes it there.
pub fn make_packet(params: &PacketParams, grid: &GridSpec) -> Result<StateVector> {
    params.check_margin(grid)?;
    StateVector::from_fn(*grid, |x| params.amplitude(x)).normalized()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Closed-form `(g_a, g_b) = exp(-(a-b)^2 / (8 sigma^2))`.
pub fn overlap_gaussian(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    (-squared_distance(a, b) / (8.0 * sigma * sigma)).exp()
}

/// Closed-form `|(phi, psi)|^2` for two phase-space packets.
pub fn phase_space_overlap_sq(a: &[f64], p: &[f64], b: &[f64], q: &[f64], sigma: f64, hbar: f64) -> f64 {
    let s2 = sigma * sigma;
    (-squared_distance(a, b) / (4.0 * s2) - squared_distance(p, q) * s2 / (hbar * hbar)).exp()
}

fn real_packet(center: &[f64], sigma: f64, dim: usize) -> Result<PacketParams> {
    PacketParams::new(center.to_vec(), vec![0.0; dim], sigma, 1.0, 1.0)
}

/// `|closed form - grid (g_a, g_b)|`.
pub fn overlap_discrepancy(a: &[f64], b: &[f64], sigma: f64, grid: &GridSpec) -> Result<f64> {
    let ga = make_packet(&real_packet(a, sigma, grid.dim())?, grid)?;
    let gb = make_packet(&real_packet(b, sigma, grid.dim())?, grid)?;
    let grid_value = ga.inner(&gb)?;
    Ok((grid_value - overlap_gaussian(a, b, sigma)).norm())
}

/// Fubini-Study angle from an overlap modulus, clamped into `[0, 1]`.
pub fn fs_angle_from_overlap(overlap_abs: f64) -> f64 {
    overlap_abs.clamp(0.0, 1.0).acos()
}

/// `theta = arccos |(phi, psi)|` for unit states, in `[0, pi/2]`, evaluated
/// as `atan2(|psi - (phi, psi) phi|, |(phi, psi)|)` to stay accurate near 0.
pub fn fubini_study_distance(phi: &StateVector, psi: &StateVector) -> Result<f64> {
    let c = phi.inner(psi)?;
    let mut perp = psi.clone();
    perp.add_scaled(-c, phi)?;
    Ok(perp.norm().atan2(c.norm()))
}

/// Euclidean separation recovered from a Fubini-Study angle between packets
/// of width `sigma`: `2 sigma sqrt(-ln cos^2 theta)`.
pub fn euclidean_from_fs(theta: f64, sigma: f64) -> f64 {
    let c = theta.cos();
    2.0 * sigma * (-(c * c).ln()).max(0.0).sqrt()
}

/// `|exp(-(a-b)^2/(4 sigma^2)) - cos^2 theta_grid(g_a, g_b)|`.
pub fn metric_identity_residual(a: &[f64], b: &[f64], sigma: f64, grid: &GridSpec) -> Result<f64> {
    let ga = make_packet(&real_packet(a, sigma, grid.dim())?, grid)?;
    let gb = make_packet(&real_packet(b, sigma, grid.dim())?, grid)?;
    let c = fubini_study_distance(&ga, &gb)?.cos();
    Ok(((-squared_distance(a, b) / (4.0 * sigma * sigma)).exp() - c * c).abs())
}

/// Residual of `exp(-(a-b)^2/(4 sigma^2) - (p-q)^2 sigma^2/hbar^2) = cos^2 theta`
/// between the closed form and grid packets.
pub fn phase_space_metric_identity_residual(
    a: &[f64],
    p: &[f64],
    b: &[f64],
    q: &[f64],
    sigma: f64,
    hbar: f64,
    grid: &GridSpec,
) -> Result<f64> {
    let phi = make_packet(&PacketParams::new(a.to_vec(), p.to_vec(), sigma, 1.0, hbar)?, grid)?;
    let psi = make_packet(&PacketParams::new(b.to_vec(), q.to_vec(), sigma, 1.0, hbar)?, grid)?;
    let c = fubini_study_distance(&phi, &psi)?.cos();
    Ok((phase_space_overlap_sq(a, p, b, q, sigma, hbar) - c * c).abs())
}

/// Orthonormal directions at a packet: position and momentum coordinate
/// lines, the spreading direction `i d phi / d sigma` and the fiber `-i phi`.
#[derive(Debug, Clone)]
pub struct TangentFrame {
    pub position: Vec<StateVector>,
    pub momentum: Vec<StateVector>,
    pub spread: StateVector,
    pub phase: StateVector,
}

impl TangentFrame {
    /// `[e_a..., e_p..., e_spread, e_phase]`.
    pub fn vectors(&self) -> Vec<&StateVector> {
        self.position.iter().chain(&self.momentum).chain([&self.spread, &self.phase]).collect()
    }

    /// Real-metric Gram matrix of the frame.
    pub fn gram(&self) -> Result<DMatrix<f64>> {
        let v = self.vectors();
        let mut g = DMatrix::zeros(v.len(), v.len());
        for i in 0..v.len() {
            for j in 0..v.len() {
                g[(i, j)] = v[i].real_metric(v[j])?;
            }
        }
        Ok(g)
    }
}

/// Removes the complex component along the unit state `phi`, i.e. the
/// projections onto both `phi` and `i phi`.
fn remove_fiber(v: &mut StateVector, phi: &StateVector) -> Result<()> {
    let c = phi.inner(v)?;
    v.add_scaled(-c, phi)
}

fn unit_direction(mut v: StateVector, what: &'static str) -> Result<StateVector> {
    if v.norm() < 1e-12 {
        return Err(Error::DegenerateDirection(what));
    }
    v.normalize()?;
    Ok(v)
}

/// Builds the frame from analytic parameter derivatives of the packet.
pub fn tangent_frame(params: &PacketParams, grid: &GridSpec) -> Result<TangentFrame> {
    let phi = make_packet(params, grid)?;
    let s2 = params.sigma * params.sigma;
    let d = params.dim() as f64;
    let a = &params.position;

    let position = (0..params.dim())
        .map(|ax| {
            let mut v = phi.multiply_by(|x| Complex64::new((x[ax] - a[ax]) / (2.0 * s2), 0.0));
            remove_fiber(&mut v, &phi)?;
            unit_direction(v, "position")
        })
        .collect::<Result<Vec<_>>>()?;

    let momentum = (0..params.dim())
        .map(|ax| {
            let mut v = phi.multiply_by(|x| Complex64::new(0.0, x[ax] / params.hbar));
            remove_fiber(&mut v, &phi)?;
            unit_direction(v, "momentum")
        })
        .collect::<Result<Vec<_>>>()?;

    let mut spread = phi.multiply_by(|x| {
        let r2 = squared_distance(x, a);
        Complex64::new(0.0, r2 / (2.0 * s2 * params.sigma) - d / (2.0 * params.sigma))
    });
    remove_fiber(&mut spread, &phi)?;
    let spread = unit_direction(spread, "spread")?;

    let phase = unit_direction(phi.scaled(-Complex64::i()), "phase")?;
    Ok(TangentFrame { position, momentum, spread, phase })
}

/// Norm residuals of the packet identities
/// `(x - <x>) phi = (x - a) phi` and `(p - <p>) phi = i hbar/(2 sigma^2) (x - a) phi`,
/// maximized over axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftedResiduals {
    pub position: f64,
    pub momentum: f64,
}

pub fn shifted_operator_identity_residuals(params: &PacketParams, grid: &GridSpec) -> Result<ShiftedResiduals> {
    let phi = make_packet(params, grid)?;
    let s2 = params.sigma * params.sigma;
    let mut out = ShiftedResiduals { position: 0.0, momentum: 0.0 };
    for ax in 0..params.dim() {
        let a = params.position[ax];
        let offset = phi.multiply_by(|x| Complex64::new(x[ax] - a, 0.0));

        let x_mean = position_expectation(&phi, ax)?;
        let mut x_shift = apply_position(&phi, ax)?.state;
        x_shift.add_scaled(Complex64::new(-x_mean, 0.0), &phi)?;
        out.position = out.position.max(x_shift.sub(&offset)?.norm());

        let p_mean = momentum_expectation(&phi, ax, params.hbar)?;
        let mut p_shift = apply_momentum(&phi, ax, params.hbar)?.state;
        p_shift.add_scaled(Complex64::new(-p_mean, 0.0), &phi)?;
        let predicted = offset.scaled(Complex64::new(0.0, params.hbar / (2.0 * s2)));
        out.momentum = out.momentum.max(p_shift.sub(&predicted)?.norm());
    }
    Ok(out)
}

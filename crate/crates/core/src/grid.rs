//! Finite periodic discretization of L2(R^d).
//!
//! States are sampled on an `N^d` grid centered at the origin. Position acts
//! diagonally, momentum and kinetic energy act spectrally through the DFT.
//! The continuum inner product is approximated by the rectangle rule, which
//! is spectrally accurate for smooth, well-contained states.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest supported number of points per axis.
pub const MIN_POINTS: usize = 16;
/// Default memory budget in grid sites (complex amplitudes).
pub const MAX_SITES: usize = 1 << 24;

/// Width of the boundary band, as a fraction of the extent, whose probability
/// mass triggers a boundary warning.
pub const BOUNDARY_BAND: f64 = 1.0 / 40.0;
/// Probability mass inside the boundary band above which results are flagged.
pub const BOUNDARY_MASS_TOL: f64 = 1e-6;

/// Uniform grid of `points^dim` sites on `[-extent/2, extent/2)^dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    points: usize,
    extent: f64,
}

impl GridSpec {
    pub fn new(dim: usize, points: usize, extent: f64) -> Result<Self> {
        Self::with_budget(dim, points, extent, MAX_SITES)
    }

    pub fn with_budget(dim: usize, points: usize, extent: f64, max_sites: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if points < MIN_POINTS || !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis must be a power of two >= {MIN_POINTS}, got {points}"
            )));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::InvalidGrid(format!("extent must be positive, got {extent}")));
        }
        let sites = points
            .checked_pow(dim as u32)
            .filter(|&s| s <= max_sites)
            .ok_or_else(|| Error::InvalidGrid(format!("{points}^{dim} sites exceed the budget of {max_sites}")))?;
        debug_assert!(sites > 0);
        Ok(Self { dim, points, extent })
    }

    pub fn line(points: usize, extent: f64) -> Result<Self> {
        Self::new(1, points, extent)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn half_extent(&self) -> f64 {
        0.5 * self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.points as f64
    }

    pub fn sites(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    /// `dx^d`, the quadrature weight of one site.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn coordinate(&self, j: usize) -> f64 {
        -self.half_extent() + j as f64 * self.spacing()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.coordinate(j)).collect()
    }

    /// Angular wavenumber of DFT bin `j` in standard FFT order.
    pub fn wavenumber(&self, j: usize) -> f64 {
        let n = self.points as isize;
        let j = j as isize;
        let signed = if j < n / 2 { j } else { j - n };
        2.0 * std::f64::consts::PI * signed as f64 / self.extent
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.wavenumber(j)).collect()
    }

    fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.dim - 1 - axis) as u32)
    }

    /// Index along `axis` of a flattened (row-major) site index.
    pub fn axis_index(&self, site: usize, axis: usize) -> usize {
        (site / self.stride(axis)) % self.points
    }

    /// Position vector of a site.
    pub fn position(&self, site: usize) -> Vec<f64> {
        (0..self.dim).map(|ax| self.coordinate(self.axis_index(site, ax))).collect()
    }

    /// Wavevector of a DFT site.
    pub fn wavevector(&self, site: usize) -> Vec<f64> {
        (0..self.dim).map(|ax| self.wavenumber(self.axis_index(site, ax))).collect()
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis < self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, got: axis + 1 })
        }
    }
}

/// Complex amplitudes on a grid. Normalized states satisfy
/// `sum |phi_i|^2 dx^d = 1`; operator outputs are left unnormalized.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    grid: GridSpec,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, amps: vec![Complex64::new(0.0, 0.0); grid.sites()] }
    }

    pub fn from_amplitudes(grid: GridSpec, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != grid.sites() {
            return Err(Error::DimensionMismatch { expected: grid.sites(), got: amps.len() });
        }
        Ok(Self { grid, amps })
    }

    /// Samples `f(x)` at every site.
    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let amps = (0..grid.sites()).map(|s| f(&grid.position(s))).collect();
        Self { grid, amps }
    }

    /// Builds a grid state from orthonormal site coordinates `c_i = phi_i sqrt(dx^d)`.
    pub fn from_coordinates(grid: GridSpec, coords: &DVector<Complex64>) -> Result<Self> {
        let w = grid.cell_volume().sqrt().recip();
        Self::from_amplitudes(grid, coords.iter().map(|c| c * w).collect())
    }

    /// Orthonormal site coordinates; the grid inner product becomes the
    /// plain Euclidean one.
    pub fn to_coordinates(&self) -> DVector<Complex64> {
        let w = self.grid.cell_volume().sqrt();
        DVector::from_iterator(self.amps.len(), self.amps.iter().map(|a| a * w))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidParameter("cannot normalize a zero state".into()));
        }
        let inv = n.recip();
        self.amps.iter_mut().for_each(|a| *a *= inv);
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// `(self, other)`, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.check_same_grid(other)?;
        let s: Complex64 = self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn real_metric(&self, other: &Self) -> Result<f64> {
        Ok(self.inner(other)?.re)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self { grid: self.grid, amps: self.amps.iter().map(|a| a * c).collect() }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: Complex64, other: &Self) -> Result<()> {
        self.check_same_grid(other)?;
        self.amps.iter_mut().zip(&other.amps).for_each(|(a, b)| *a += c * b);
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_scaled(Complex64::new(-1.0, 0.0), other)?;
        Ok(out)
    }

    /// Multiplies each amplitude by `f(x)`.
    pub fn multiply_by(&self, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let amps = self.amps.iter().enumerate().map(|(s, a)| a * f(&self.grid.position(s))).collect();
        Self { grid: self.grid, amps }
    }

    /// Probability mass within `BOUNDARY_BAND * extent` of any face.
    pub fn boundary_mass(&self) -> f64 {
        let band = BOUNDARY_BAND * self.grid.extent();
        let edge = self.grid.half_extent() - band;
        let mass: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(s, _)| self.grid.position(*s).iter().any(|x| x.abs() >= edge))
            .map(|(_, a)| a.norm_sqr())
            .sum();
        mass * self.grid.cell_volume() / self.norm_sq().max(f64::MIN_POSITIVE)
    }

    pub fn near_boundary(&self) -> bool {
        self.boundary_mass() > BOUNDARY_MASS_TOL
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

pub fn inner_product(phi: &StateVector, psi: &StateVector) -> Result<Complex64> {
    phi.inner(psi)
}

/// `G(X, Y) = Re (X, Y)`.
pub fn real_metric(x: &StateVector, y: &StateVector) -> Result<f64> {
    x.real_metric(y)
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

fn transform_axes(grid: &GridSpec, data: &mut [Complex64], forward: bool) {
    let n = grid.points();
    let (fwd, inv) = plans(n);
    let fft = if forward { fwd } else { inv };
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    if grid.dim() == 1 {
        fft.process_with_scratch(data, &mut scratch);
    } else {
        let mut lane = vec![Complex64::new(0.0, 0.0); n];
        for axis in 0..grid.dim() {
            let stride = grid.stride(axis);
            let outer = data.len() / (n * stride);
            for o in 0..outer {
                for i in 0..stride {
                    let base = o * n * stride + i;
                    for (j, l) in lane.iter_mut().enumerate() {
                        *l = data[base + j * stride];
                    }
                    fft.process_with_scratch(&mut lane, &mut scratch);
                    for (j, l) in lane.iter().enumerate() {
                        data[base + j * stride] = *l;
                    }
                }
            }
        }
    }
    if !forward {
        let inv_n = (data.len() as f64).recip();
        data.iter_mut().for_each(|a| *a *= inv_n);
    }
}

/// Unnormalized forward DFT over all axes, in place.
pub fn forward_dft(grid: &GridSpec, data: &mut [Complex64]) {
    transform_axes(grid, data, true);
}

/// Inverse DFT over all axes (includes the `1/N^d` factor), in place.
pub fn inverse_dft(grid: &GridSpec, data: &mut [Complex64]) {
    transform_axes(grid, data, false);
}

/// Applies a wavevector-diagonal operator `f(k)`.
pub fn apply_spectral(phi: &StateVector, f: impl Fn(&[f64]) -> Complex64) -> StateVector {
    let grid = *phi.grid();
    let mut data = phi.amps.clone();
    forward_dft(&grid, &mut data);
    for (s, a) in data.iter_mut().enumerate() {
        *a *= f(&grid.wavevector(s));
    }
    inverse_dft(&grid, &mut data);
    StateVector { grid, amps: data }
}

/// Potential energy term of the Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Potential {
    Free,
    /// Constant force `f`, `V(x) = -f . x`.
    Linear {
        force: Vec<f64>,
    },
    /// Isotropic spring, `V(x) = k |x|^2 / 2`.
    Harmonic {
        stiffness: f64,
    },
    /// Values sampled at every grid site.
    Tabulated {
        values: Vec<f64>,
    },
}

/// `h = -hbar^2/(2m) Laplacian + V(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub mass: f64,
    pub hbar: f64,
    pub potential: Potential,
}

impl HamiltonianSpec {
    pub fn new(mass: f64, hbar: f64, potential: Potential) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::InvalidParameter(format!("mass must be positive, got {mass}")));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {hbar}")));
        }
        match &potential {
            Potential::Tabulated { values } if values.iter().any(|v| !v.is_finite()) => {
                return Err(Error::InvalidParameter("tabulated potential must be finite".into()))
            }
            Potential::Harmonic { stiffness } if !stiffness.is_finite() => {
                return Err(Error::InvalidParameter("stiffness must be finite".into()))
            }
            Potential::Linear { force } if force.iter().any(|f| !f.is_finite()) => {
                return Err(Error::InvalidParameter("force must be finite".into()))
            }
            _ => {}
        }
        Ok(Self { mass, hbar, potential })
    }

    /// `hbar = m = 1`.
    pub fn natural(potential: Potential) -> Self {
        Self { mass: 1.0, hbar: 1.0, potential }
    }

    /// The operator `factor * h`, expressed through mass and potential.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::InvalidParameter(format!("scale factor must be positive, got {factor}")));
        }
        let potential = match &self.potential {
            Potential::Free => Potential::Free,
            Potential::Linear { force } => Potential::Linear { force: force.iter().map(|f| f * factor).collect() },
            Potential::Harmonic { stiffness } => Potential::Harmonic { stiffness: stiffness * factor },
            Potential::Tabulated { values } => {
                Potential::Tabulated { values: values.iter().map(|v| v * factor).collect() }
            }
        };
        Self::new(self.mass / factor, self.hbar, potential)
    }

    /// `V(x)` for analytic potentials; `None` for tabulated ones.
    pub fn potential_at(&self, x: &[f64]) -> Option<f64> {
        match &self.potential {
            Potential::Free => Some(0.0),
            Potential::Linear { force } => Some(-force.iter().zip(x).map(|(f, xi)| f * xi).sum::<f64>()),
            Potential::Harmonic { stiffness } => Some(0.5 * stiffness * x.iter().map(|xi| xi * xi).sum::<f64>()),
            Potential::Tabulated { .. } => None,
        }
    }

    /// `-grad V(x)` for analytic potentials.
    pub fn force_at(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.potential {
            Potential::Free => Ok(vec![0.0; x.len()]),
            Potential::Linear { force } => {
                if force.len() != x.len() {
                    return Err(Error::DimensionMismatch { expected: x.len(), got: force.len() });
                }
                Ok(force.clone())
            }
            Potential::Harmonic { stiffness } => Ok(x.iter().map(|xi| -stiffness * xi).collect()),
            Potential::Tabulated { .. } => Err(Error::UnsupportedPotential("analytic force")),
        }
    }

    /// Potential sampled at every grid site.
    pub fn potential_on(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        match &self.potential {
            Potential::Tabulated { values } => {
                if values.len() != grid.sites() {
                    return Err(Error::DimensionMismatch { expected: grid.sites(), got: values.len() });
                }
                Ok(values.clone())
            }
            Potential::Linear { force } if force.len() != grid.dim() => {
                Err(Error::DimensionMismatch { expected: grid.dim(), got: force.len() })
            }
            _ => Ok((0..grid.sites()).map(|s| self.potential_at(&grid.position(s)).unwrap_or(0.0)).collect()),
        }
    }

    fn kinetic_symbol(&self, k: &[f64]) -> f64 {
        self.hbar * self.hbar * k.iter().map(|ki| ki * ki).sum::<f64>() / (2.0 * self.mass)
    }
}

/// Operator output plus the boundary-proximity flag of its input.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub state: StateVector,
    pub boundary_warning: bool,
}

impl Applied {
    fn new(input: &StateVector, state: StateVector) -> Self {
        Self { state, boundary_warning: input.near_boundary() }
    }
}

/// `x_axis phi`.
pub fn apply_position(phi: &StateVector, axis: usize) -> Result<Applied> {
    phi.grid().check_axis(axis)?;
    let out = phi.multiply_by(|x| Complex64::new(x[axis], 0.0));
    Ok(Applied::new(phi, out))
}

/// `p_axis phi = -i hbar d/dx_axis phi`, evaluated spectrally.
pub fn apply_momentum(phi: &StateVector, axis: usize, hbar: f64) -> Result<Applied> {
    phi.grid().check_axis(axis)?;
    let out = apply_spectral(phi, |k| Complex64::new(hbar * k[axis], 0.0));
    Ok(Applied::new(phi, out))
}

/// `p^2/(2m) phi`.
pub fn apply_kinetic(phi: &StateVector, h: &HamiltonianSpec) -> Applied {
    let out = apply_spectral(phi, |k| Complex64::new(h.kinetic_symbol(k), 0.0));
    Applied::new(phi, out)
}

/// `(p^2/(2m) + V) phi`.
pub fn apply_hamiltonian(phi: &StateVector, h: &HamiltonianSpec) -> Result<Applied> {
    let v = h.potential_on(phi.grid())?;
    let mut out = apply_kinetic(phi, h);
    for ((o, a), vi) in out.state.amps.iter_mut().zip(&phi.amps).zip(&v) {
        *o += a * vi;
    }
    Ok(out)
}

/// `<phi, x_axis phi>` for a normalized state.
pub fn position_expectation(phi: &StateVector, axis: usize) -> Result<f64> {
    Ok(phi.inner(&apply_position(phi, axis)?.state)?.re)
}

/// `<phi, p_axis phi>` for a normalized state.
pub fn momentum_expectation(phi: &StateVector, axis: usize, hbar: f64) -> Result<f64> {
    Ok(phi.inner(&apply_momentum(phi, axis, hbar)?.state)?.re)
}

/// `<phi, h phi>` for a normalized state.
pub fn energy_expectation(phi: &StateVector, h: &HamiltonianSpec) -> Result<f64> {
    Ok(phi.inner(&apply_hamiltonian(phi, h)?.state)?.re)
}

/// Strang splitting `e^{-iV dt/2h} e^{-iT dt/h} e^{-iV dt/2h}` with
/// precomputed phase tables; reusable across steps and states.
#[derive(Debug, Clone)]
pub struct SplitStep {
    grid: GridSpec,
    half_potential: Vec<Complex64>,
    kinetic: Vec<Complex64>,
}

impl SplitStep {
    pub fn new(grid: GridSpec, h: &HamiltonianSpec, dt: f64) -> Result<Self> {
        if !dt.is_finite() {
            return Err(Error::InvalidParameter("time step must be finite".into()));
        }
        let v = h.potential_on(&grid)?;
        let half_potential = v.iter().map(|vi| Complex64::from_polar(1.0, -vi * dt / (2.0 * h.hbar))).collect();
        let kinetic = (0..grid.sites())
            .map(|s| Complex64::from_polar(1.0, -h.kinetic_symbol(&grid.wavevector(s)) * dt / h.hbar))
            .collect();
        Ok(Self { grid, half_potential, kinetic })
    }

    pub fn step(&self, phi: &mut StateVector) -> Result<()> {
        if phi.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let data = &mut phi.amps;
        data.iter_mut().zip(&self.half_potential).for_each(|(a, p)| *a *= p);
        forward_dft(&self.grid, data);
        data.iter_mut().zip(&self.kinetic).for_each(|(a, p)| *a *= p);
        inverse_dft(&self.grid, data);
        data.iter_mut().zip(&self.half_potential).for_each(|(a, p)| *a *= p);
        Ok(())
    }
}

/// `exp(-i h dt / hbar) phi` by one Strang split-step.
pub fn evolve_unitary(phi: &StateVector, h: &HamiltonianSpec, dt: f64) -> Result<StateVector> {
    let mut out = phi.clone();
    SplitStep::new(*phi.grid(), h, dt)?.step(&mut out)?;
    Ok(out)
}

/// Step-halving error estimate: `|| U(dt) phi - U(dt/2)^2 phi ||`.
pub fn split_step_error(phi: &StateVector, h: &HamiltonianSpec, dt: f64) -> Result<f64> {
    let full = evolve_unitary(phi, h, dt)?;
    let half = SplitStep::new(*phi.grid(), h, 0.5 * dt)?;
    let mut two = phi.clone();
    half.step(&mut two)?;
    half.step(&mut two)?;
    Ok(full.sub(&two)?.norm())
}

/// Matrix of `h` in orthonormal site coordinates, assembled column by column.
pub fn dense_hamiltonian(grid: &GridSpec, h: &HamiltonianSpec) -> Result<DMatrix<Complex64>> {
    let n = grid.sites();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = Complex64::new(1.0, 0.0);
        let col = apply_hamiltonian(&StateVector::from_coordinates(*grid, &e)?, h)?.state.to_coordinates();
        m.set_column(j, &col);
    }
    Ok(m)
}

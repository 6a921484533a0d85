//! Random walks of the state driven by independent GUE Hamiltonians, and the
//! translation-generated walk obtained when the state is kept on the
//! classical-space submanifold.
//!
//! Each trial draws from its own generator seeded by
//! `trial_seed(master_seed, stream, trial)`, so ensembles are reproducible
//! regardless of how trials are scheduled across threads. Dense steps cost
//! `O(N^2)` per Taylor term; dense walks are capped at `MAX_DENSE_DIM`.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{forward_dft, inverse_dft, GridSpec, StateVector};
use crate::linalg::evolve_taylor;
use crate::manifold::{fs_angle_from_overlap, make_packet, tangent_frame, PacketParams, MARGIN_SIGMAS};
use crate::seed::{stream_id, trial_rng, trial_seed};

pub const MAX_DENSE_DIM: usize = 512;

/// Gaussian unitary ensemble: `Var(H_jj) = s^2`, `Var(Re H_jk) = Var(Im H_jk) = s^2/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GueEnsemble {
    pub dim: usize,
    pub scale: f64,
    pub seed: u64,
}

impl GueEnsemble {
    /// `scale = 0` is accepted and yields the zero Hamiltonian.
    pub fn new(dim: usize, scale: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("GUE dimension must be >= 2, got {dim}")));
        }
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(Error::InvalidParameter(format!("GUE scale must be >= 0, got {scale}")));
        }
        Ok(Self { dim, scale, seed: 0 })
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// One independent draw from the ensemble.
pub fn sample_gue<R: Rng + ?Sized>(ens: &GueEnsemble, rng: &mut R) -> DMatrix<Complex64> {
    let n = ens.dim;
    let s = ens.scale;
    let off = s * std::f64::consts::FRAC_1_SQRT_2;
    let mut h = DMatrix::zeros(n, n);
    for j in 0..n {
        let d: f64 = StandardNormal.sample(rng);
        h[(j, j)] = Complex64::new(s * d, 0.0);
        for k in (j + 1)..n {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let z = Complex64::new(off * re, off * im);
            h[(j, k)] = z;
            h[(k, j)] = z.conj();
        }
    }
    h
}

/// GUE scale whose tangent-step components match a classical walk with
/// per-axis step standard deviation `step_sd`: a translation by `xi dt`
/// moves a packet by `xi dt / (2 sigma)` along the unit position direction,
/// while a GUE step has component variance `s^2 dt^2 / (2 hbar^2)`.
pub fn calibrate_scale(step_sd: f64, sigma: f64, hbar: f64) -> f64 {
    hbar * step_sd / (std::f64::consts::SQRT_2 * sigma)
}

/// Variance of a GUE step component along any unit fiber-orthogonal direction.
pub fn gue_component_variance(scale: f64, dt: f64, hbar: f64) -> f64 {
    scale * scale * dt * dt / (2.0 * hbar * hbar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepModel {
    Gue(GueEnsemble),
    /// I.i.d. `Normal(0, step_sd^2)` translation rates per axis.
    Gaussian {
        step_sd: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordPolicy {
    /// Distance after every step plus the final state.
    Full,
    /// Final distance only.
    Summary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub n_steps: usize,
    pub dt: f64,
    pub hbar: f64,
    pub step: StepModel,
    pub n_trials: usize,
    pub master_seed: u64,
    pub record: RecordPolicy,
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || self.n_trials == 0 {
            return Err(Error::InvalidParameter("walks need at least one step and one trial".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {}", self.hbar)));
        }
        if let StepModel::Gaussian { step_sd } = self.step {
            if !(step_sd.is_finite() && step_sd >= 0.0) {
                return Err(Error::InvalidParameter(format!("step_sd must be >= 0, got {step_sd}")));
            }
        }
        Ok(())
    }
}

/// What one trial leaves behind for the statistics layer.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkRecord {
    pub trial: u64,
    pub seed: u64,
    /// Fubini-Study distance to the initial state, per step or final only.
    pub fs_distances: Vec<f64>,
    pub final_state: Option<DVector<Complex64>>,
    /// Tangent components per step, when requested.
    pub components: Option<Vec<Vec<f64>>>,
}

impl WalkRecord {
    pub fn final_distance(&self) -> f64 {
        self.fs_distances.last().copied().unwrap_or(0.0)
    }
}

/// Stable `arccos |(a, b)|` for unit vectors.
pub fn fs_distance_dense(a: &DVector<Complex64>, b: &DVector<Complex64>) -> f64 {
    let c = a.dotc(b);
    (b - a * c).norm().atan2(c.norm())
}

const GUE_WALK_STREAM: &str = "gue-walk";
const CONSTRAINED_STREAM: &str = "constrained-walk";
const GUE_PROJECTION_STREAM: &str = "gue-projection";

/// One trial of `phi_{k+1} = exp(-i H_k dt / hbar) phi_k` with independent GUE `H_k`.
pub fn walk_unconstrained(phi0: &DVector<Complex64>, cfg: &WalkConfig, trial: u64) -> Result<WalkRecord> {
    cfg.validate()?;
    let StepModel::Gue(ens) = cfg.step else {
        return Err(Error::InvalidParameter("unconstrained walks need a GUE step model".into()));
    };
    if phi0.len() != ens.dim {
        return Err(Error::DimensionMismatch { expected: ens.dim, got: phi0.len() });
    }
    if ens.dim > MAX_DENSE_DIM {
        return Err(Error::InvalidParameter(format!("dense walks are capped at N = {MAX_DENSE_DIM}")));
    }
    if (phi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter("initial state must be unit-norm".into()));
    }
    let stream = stream_id(GUE_WALK_STREAM) ^ ens.seed;
    let seed = trial_seed(cfg.master_seed, stream, trial);
    let mut rng = trial_rng(cfg.master_seed, stream, trial);
    let mut phi = phi0.clone();
    let mut distances = Vec::with_capacity(cfg.n_steps);
    for _ in 0..cfg.n_steps {
        let h = sample_gue(&ens, &mut rng);
        phi = evolve_taylor(&phi, &h, cfg.dt, cfg.hbar)?;
        if cfg.record == RecordPolicy::Full {
            distances.push(fs_distance_dense(phi0, &phi));
        }
    }
    if cfg.record == RecordPolicy::Summary {
        distances.push(fs_distance_dense(phi0, &phi));
    }
    Ok(WalkRecord {
        trial,
        seed,
        fs_distances: distances,
        final_state: (cfg.record == RecordPolicy::Full).then_some(phi),
        components: None,
    })
}

/// All trials of an unconstrained walk, in trial order.
pub fn run_unconstrained(phi0: &DVector<Complex64>, cfg: &WalkConfig) -> Result<Vec<WalkRecord>> {
    (0..cfg.n_trials as u64).into_par_iter().map(|t| walk_unconstrained(phi0, cfg, t)).collect()
}

/// Unit direction obtained by removing the complex component of `raw` along
/// the unit state `phi`; the result is tangent to projective space at `phi`.
pub fn tangent_direction(phi: &DVector<Complex64>, raw: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    if raw.len() != phi.len() {
        return Err(Error::DimensionMismatch { expected: phi.len(), got: raw.len() });
    }
    let v = raw - phi * phi.dotc(raw);
    let n = v.norm();
    if n < 1e-12 {
        return Err(Error::DegenerateDirection("tangent"));
    }
    Ok(v / Complex64::new(n, 0.0))
}

/// `Re( -i H phi dt / hbar, v_j )` for each direction.
pub fn step_tangent_components(
    phi: &DVector<Complex64>,
    h: &DMatrix<Complex64>,
    dt: f64,
    hbar: f64,
    directions: &[DVector<Complex64>],
) -> Result<Vec<f64>> {
    if h.nrows() != phi.len() || h.ncols() != phi.len() {
        return Err(Error::DimensionMismatch { expected: phi.len(), got: h.nrows() });
    }
    let step = (h * phi) * Complex64::new(0.0, -dt / hbar);
    directions
        .iter()
        .map(|v| {
            if v.len() != phi.len() {
                return Err(Error::DimensionMismatch { expected: phi.len(), got: v.len() });
            }
            if (v.norm() - 1.0).abs() > 1e-8 || phi.dotc(v).norm() > 1e-8 {
                return Err(Error::InvalidParameter("directions must be unit and orthogonal to the fiber".into()));
            }
            Ok(step.dotc(v).re)
        })
        .collect()
}

/// Result of one translation-constrained trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedWalk {
    pub record: WalkRecord,
    /// `d = sum_k xi_k dt`.
    pub displacement: Vec<f64>,
    /// Cumulative displacement after each step (full record only).
    pub path: Option<Vec<Vec<f64>>>,
    /// `|| phi_N - phi_0(x - d) ||` on the grid.
    pub translation_error: f64,
}

/// Translation-generated walk on the classical-space submanifold. The
/// packet's DFT is computed once and shared by all trials.
#[derive(Debug, Clone)]
pub struct ConstrainedWalker {
    params: PacketParams,
    grid: GridSpec,
    spectrum: Vec<Complex64>,
    /// Signed mode number of each DFT index, `k_j = modes[j] * 2 pi / L`.
    modes: Vec<i64>,
}

impl ConstrainedWalker {
    pub fn new(params: &PacketParams, grid: &GridSpec) -> Result<Self> {
        let phi0 = make_packet(params, grid)?;
        let mut spectrum = phi0.into_amplitudes();
        forward_dft(grid, &mut spectrum);
        let dk = 2.0 * std::f64::consts::PI / grid.extent();
        let modes = grid.wavenumbers().iter().map(|k| (k / dk).round() as i64).collect();
        Ok(Self { params: params.clone(), grid: *grid, spectrum, modes })
    }

    /// Applies the translation unitaries for the given per-step rates.
    pub fn translate(&self, rates: &[Vec<f64>], dt: f64) -> Result<StateVector> {
        let mut spec = self.spectrum.clone();
        for xi in rates {
            self.apply_translation(&mut spec, xi, dt);
        }
        inverse_dft(&self.grid, &mut spec);
        StateVector::from_amplitudes(self.grid, spec)
    }

    fn apply_translation(&self, spec: &mut [Complex64], xi: &[f64], dt: f64) {
        // exp(-i k_j xi dt) = z^{m_j} with z = exp(-i dk xi dt), built by
        // repeated multiplication per axis instead of one sincos per site.
        let dk = 2.0 * std::f64::consts::PI / self.grid.extent();
        let half = self.grid.points() / 2;
        let tables: Vec<Vec<Complex64>> = xi
            .iter()
            .map(|x| {
                let z = Complex64::from_polar(1.0, -dk * x * dt);
                let mut powers = Vec::with_capacity(half + 1);
                let mut w = Complex64::new(1.0, 0.0);
                for _ in 0..=half {
                    powers.push(w);
                    w *= z;
                }
                self.modes
                    .iter()
                    .map(|&m| if m >= 0 { powers[m as usize] } else { powers[(-m) as usize].conj() })
                    .collect()
            })
            .collect();
        if let [table] = tables.as_slice() {
            spec.iter_mut().zip(table).for_each(|(a, t)| *a *= t);
        } else {
            for (site, a) in spec.iter_mut().enumerate() {
                for (axis, table) in tables.iter().enumerate() {
                    *a *= table[self.grid.axis_index(site, axis)];
                }
            }
        }
    }

    /// `phi_0(x - d)` evaluated analytically: the packet moved to `a + d` with
    /// the phase `exp(-i p.d / hbar)` picked up by the plane-wave factor.
    pub fn translated_packet(&self, d: &[f64]) -> Result<StateVector> {
        let center: Vec<f64> = self.params.position.iter().zip(d).map(|(a, di)| a + di).collect();
        let moved = self.params.with_phase_point(center, self.params.momentum.clone())?;
        let phase: f64 = self.params.momentum.iter().zip(d).map(|(p, di)| p * di).sum::<f64>() / self.params.hbar;
        Ok(make_packet(&moved, &self.grid)?.scaled(Complex64::from_polar(1.0, -phase)))
    }

    fn overlap_with_initial(&self, spec: &[Complex64]) -> Complex64 {
        let s: Complex64 = self.spectrum.iter().zip(spec).map(|(a, b)| a.conj() * b).sum();
        s * (self.grid.cell_volume() / self.grid.sites() as f64)
    }

    fn check_extent(&self, d: &[f64]) -> Result<()> {
        let margin = MARGIN_SIGMAS * self.params.sigma;
        for (axis, (a, di)) in self.params.position.iter().zip(d).enumerate() {
            if (a + di).abs() + margin > self.grid.half_extent() {
                return Err(Error::MarginViolation { axis, margin, half_extent: self.grid.half_extent() });
            }
        }
        Ok(())
    }

    pub fn run_trial(&self, cfg: &WalkConfig, trial: u64) -> Result<ConstrainedWalk> {
        cfg.validate()?;
        let StepModel::Gaussian { step_sd } = cfg.step else {
            return Err(Error::InvalidParameter("constrained walks need a Gaussian step model".into()));
        };
        let dim = self.params.dim();
        let stream = stream_id(CONSTRAINED_STREAM);
        let seed = trial_seed(cfg.master_seed, stream, trial);
        let mut rng = trial_rng(cfg.master_seed, stream, trial);
        let normal = Normal::new(0.0, step_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;

        let full = cfg.record == RecordPolicy::Full;
        let mut spec = self.spectrum.clone();
        let mut d = vec![0.0; dim];
        let mut distances = Vec::with_capacity(if full { cfg.n_steps } else { 1 });
        let mut path = full.then(|| Vec::with_capacity(cfg.n_steps));
        for _ in 0..cfg.n_steps {
            let xi: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
            self.apply_translation(&mut spec, &xi, cfg.dt);
            d.iter_mut().zip(&xi).for_each(|(di, x)| *di += x * cfg.dt);
            self.check_extent(&d)?;
            if let Some(p) = path.as_mut() {
                p.push(d.clone());
                distances.push(fs_angle_from_overlap(self.overlap_with_initial(&spec).norm()));
            }
        }
        if !full {
            distances.push(fs_angle_from_overlap(self.overlap_with_initial(&spec).norm()));
        }
        inverse_dft(&self.grid, &mut spec);
        let final_state = StateVector::from_amplitudes(self.grid, spec)?;
        let translation_error = final_state.sub(&self.translated_packet(&d)?)?.norm();
        Ok(ConstrainedWalk {
            record: WalkRecord {
                trial,
                seed,
                fs_distances: distances,
                final_state: full.then(|| final_state.to_coordinates()),
                components: None,
            },
            displacement: d,
            path,
            translation_error,
        })
    }

    pub fn run(&self, cfg: &WalkConfig) -> Result<Vec<ConstrainedWalk>> {
        (0..cfg.n_trials as u64).into_par_iter().map(|t| self.run_trial(cfg, t)).collect()
    }
}

/// Single constrained trial; see [`ConstrainedWalker`] for ensembles.
pub fn walk_constrained(
    params: &PacketParams,
    grid: &GridSpec,
    cfg: &WalkConfig,
    trial: u64,
) -> Result<ConstrainedWalk> {
    ConstrainedWalker::new(params, grid)?.run_trial(cfg, trial)
}

/// Components of GUE steps `-i H phi dt / hbar` along the unit position
/// direction `e_a[axis]` of a packet, with `H` acting on the grid basis.
pub fn project_gue_step_onto_classical(
    params: &PacketParams,
    grid: &GridSpec,
    scale: f64,
    dt: f64,
    n_samples: usize,
    master_seed: u64,
    axis: usize,
) -> Result<Vec<f64>> {
    let n = grid.sites();
    if n > MAX_DENSE_DIM {
        return Err(Error::InvalidParameter(format!("GUE on the grid basis is capped at {MAX_DENSE_DIM} sites")));
    }
    if axis >= params.dim() {
        return Err(Error::DimensionMismatch { expected: params.dim(), got: axis + 1 });
    }
    let ens = GueEnsemble::new(n, scale)?;
    let phi = make_packet(params, grid)?.to_coordinates();
    let direction = [tangent_frame(params, grid)?.position[axis].to_coordinates()];
    let stream = stream_id(GUE_PROJECTION_STREAM) ^ (axis as u64);
    (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(master_seed, stream, i);
            let h = sample_gue(&ens, &mut rng);
            Ok(step_tangent_components(&phi, &h, dt, params.hbar, &direction)?[0])
        })
        .collect()
}

/// CSV dump `trial,step,fs_distance[,component_j...]`.
pub fn write_trajectory_csv<W: Write>(mut w: W, records: &[WalkRecord], n_steps: usize) -> io::Result<()> {
    let n_comp = records.iter().find_map(|r| r.components.as_ref().and_then(|c| c.first().map(Vec::len))).unwrap_or(0);
    write!(w, "trial,step,fs_distance")?;
    for j in 0..n_comp {
        write!(w, ",component_{j}")?;
    }
    writeln!(w)?;
    for r in records {
        let first_step = if r.fs_distances.len() == n_steps { 1 } else { n_steps };
        for (i, d) in r.fs_distances.iter().enumerate() {
            write!(w, "{},{},{:e}", r.trial, first_step + i, d)?;
            if let Some(c) = r.components.as_ref().and_then(|c| c.get(i)) {
                for v in c {
                    write!(w, ",{v:e}")?;
                }
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

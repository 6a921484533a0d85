//! The experiments behind `run`. Each writes its tables and a `report.json`
//! and returns the acceptance criteria it decides.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use stategeom_core::dynamics::{
    commutator_expectation, decompose_velocity, ehrenfest_projections, quantum_classical_compare, Observable,
};
use stategeom_core::grid::{GridSpec, HamiltonianSpec, Potential};
use stategeom_core::macro_est::{
    freezing_report, freezing_sweep, log_spaced, Kelvin, MacroScenario, Meters, PascalSeconds, Radians, Seconds,
};
use stategeom_core::manifold::{
    fubini_study_distance, make_packet, overlap_gaussian, phase_space_metric_identity_residual,
    shifted_operator_identity_residuals, PacketParams,
};
use stategeom_core::seed::{stream_id, trial_rng, TrialRng};
use stategeom_core::stats::{
    born_rule_curve, diffusion_fit, isotropy_test, moments, normality_test, pooled_z, BornRow, BornTarget,
};
use stategeom_core::walk::{
    calibrate_scale, fs_distance_dense, gue_component_variance, project_gue_step_onto_classical, run_unconstrained,
    sample_gue, step_tangent_components, tangent_direction, walk_unconstrained, write_trajectory_csv,
    ConstrainedWalker, GueEnsemble, RecordPolicy, StepModel, WalkConfig,
};

use crate::config::{Config, Experiment};
use crate::manifest::{Artifacts, StreamEntry, SCHEMA_VERSION};
use crate::RunError;

/// Absolute slack for velocity components whose closed form is zero.
pub const COMPONENT_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    /// One of `<`, `<=`, `>`, `>=`, `in`, `is`; `is` checks hold when `measured` is 1.
    pub rule: &'static str,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub passed: bool,
}

impl Check {
    pub fn below(name: &str, measured: f64, upper: f64) -> Self {
        Self { name: name.into(), measured, rule: "<", lower: None, upper: Some(upper), passed: measured < upper }
    }

    pub fn at_most(name: &str, measured: f64, upper: f64) -> Self {
        Self { name: name.into(), measured, rule: "<=", lower: None, upper: Some(upper), passed: measured <= upper }
    }

    pub fn at_least(name: &str, measured: f64, lower: f64) -> Self {
        Self { name: name.into(), measured, rule: ">=", lower: Some(lower), upper: None, passed: measured >= lower }
    }

    pub fn above(name: &str, measured: f64, lower: f64) -> Self {
        Self { name: name.into(), measured, rule: ">", lower: Some(lower), upper: None, passed: measured > lower }
    }

    pub fn within(name: &str, measured: f64, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            rule: "in",
            lower: Some(lower),
            upper: Some(upper),
            passed: (lower..=upper).contains(&measured),
        }
    }

    pub fn flag(name: &str, ok: bool) -> Self {
        let measured = if ok { 1.0 } else { 0.0 };
        Self { name: name.into(), measured, rule: "is", lower: Some(1.0), upper: Some(1.0), passed: ok }
    }

    pub fn describe(&self) -> String {
        if self.rule == "is" {
            return format!("{}: {}", self.name, if self.passed { "yes" } else { "no" });
        }
        match (self.lower, self.upper) {
            (Some(l), Some(u)) => format!("{} = {:.4e} in [{l:.3e}, {u:.3e}]", self.name, self.measured),
            (None, Some(u)) => format!("{} = {:.4e} {} {u:.3e}", self.name, self.measured, self.rule),
            (Some(l), None) => format!("{} = {:.4e} {} {l:.3e}", self.name, self.measured, self.rule),
            (None, None) => format!("{} = {:.4e}", self.name, self.measured),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: u32,
    pub title: String,
    pub experiment: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl Criterion {
    fn new(id: u32, title: &str, experiment: Experiment, checks: Vec<Check>) -> Self {
        Self {
            id,
            title: title.into(),
            experiment: experiment.name().into(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn summary(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let checks: Vec<String> = self.checks.iter().map(Check::describe).collect();
        format!("{status} criterion {:>2} ({}): {}", self.id, self.title, checks.join("; "))
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema_version: u32,
    experiment: &'a str,
    master_seed: u64,
    passed: bool,
    criteria: &'a [Criterion],
    details: T,
}

/// Shared state of one experiment run.
pub struct Context<'a> {
    pub cfg: &'a Config,
    pub seed: u64,
    pub art: &'a mut Artifacts,
    pub streams: Vec<StreamEntry>,
    /// Wall-clock seconds per criterion and per experiment; manifest only.
    pub elapsed: BTreeMap<String, f64>,
}

impl Context<'_> {
    fn stream(&mut self, label: &str, id: u64, count: usize) {
        self.streams.push(StreamEntry { label: label.into(), id, count: count as u64 });
    }

    fn timed<T>(&mut self, key: String, f: impl FnOnce(&mut Self) -> Result<T, RunError>) -> Result<T, RunError> {
        let start = Instant::now();
        let out = f(self)?;
        self.elapsed.insert(key, start.elapsed().as_secs_f64());
        Ok(out)
    }

    fn packet(&self, a: f64, p: f64) -> Result<PacketParams, RunError> {
        let k = &self.cfg.packet;
        Ok(PacketParams::new(vec![a], vec![p], k.sigma, k.mass, k.hbar)?)
    }

    fn hamiltonian(&self, potential: Potential) -> Result<HamiltonianSpec, RunError> {
        Ok(HamiltonianSpec::new(self.cfg.packet.mass, self.cfg.packet.hbar, potential)?)
    }

    fn report<T: Serialize>(&mut self, e: Experiment, criteria: &[Criterion], details: T) -> Result<(), RunError> {
        let report = Report {
            schema_version: SCHEMA_VERSION,
            experiment: e.name(),
            master_seed: self.seed,
            passed: criteria.iter().all(|c| c.passed),
            criteria,
            details,
        };
        self.art.write_json("report.json", &report)?;
        self.art.write_bytes("schema.toml", crate::schema(e).as_bytes())?;
        Ok(())
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0f64, |m, v| if m.is_nan() || v.is_nan() { f64::NAN } else { m.max(v) })
}

pub fn run(e: Experiment, ctx: &mut Context) -> Result<Vec<Criterion>, RunError> {
    let start = Instant::now();
    let criteria = match e {
        Experiment::VerifyMetric => verify_metric(ctx)?,
        Experiment::Decompose => decompose(ctx)?,
        Experiment::Ehrenfest => ehrenfest(ctx)?,
        Experiment::ClassicalCompare => classical_compare(ctx)?,
        Experiment::ConstrainedWalk => constrained_walk(ctx)?,
        Experiment::GueWalk => gue_walk(ctx)?,
        Experiment::BornCheck => born_check(ctx)?,
        Experiment::MacroEstimate => macro_estimate(ctx)?,
        Experiment::All => unreachable!("expanded by the caller"),
    };
    ctx.elapsed.insert(format!("experiment {}", e.name()), start.elapsed().as_secs_f64());
    Ok(criteria)
}

// ---------------------------------------------------------------- metric

#[derive(Serialize)]
struct PositionRow {
    a: f64,
    b: f64,
    fs_angle: f64,
    cos2_grid: f64,
    closed_form: f64,
    residual: f64,
}

#[derive(Serialize)]
struct PhaseRow {
    a: f64,
    p: f64,
    b: f64,
    q: f64,
    closed_form: f64,
    residual: f64,
}

#[derive(Serialize)]
struct ShiftedRow {
    a: f64,
    p: f64,
    position_residual: f64,
    momentum_residual: f64,
}

#[derive(Serialize)]
struct MetricDetails {
    grid_points: usize,
    grid_extent: f64,
    max_position_residual: f64,
    max_phase_space_residual: f64,
    max_shifted_position_residual: f64,
    max_shifted_momentum_residual: f64,
}

pub const METRIC_TOLERANCE: f64 = 1e-6;

fn verify_metric(ctx: &mut Context) -> Result<Vec<Criterion>, RunError> {
    let cfg = ctx.cfg;
    let m = &cfg.metric;
    let grid = GridSpec::line(cfg.grid.points, cfg.grid.extent)?;
    let (sigma, hbar) = (cfg.packet.sigma, cfg.packet.hbar);

    let c1 = ctx.timed("criterion 1".into(), |ctx| {
        let lattice = linspace(-m.lattice_half_width * sigma, m.lattice_half_width * sigma, m.lattice_points);
        let packets = lattice
            .iter()
            .map(|&a| make_packet(&ctx.packet(a, 0.0)?, &grid).map_err(RunError::from))
            .collect::<Result<Vec<_>, _>>()?;
        let mut rows = Vec::with_capacity(lattice.len() * lattice.len());
        for (i, &a) in lattice.iter().enumerate() {
            for (j, &b) in lattice.iter().enumerate() {
                let theta = fubini_study_distance(&packets[i], &packets[j])?;
                let cos2 = theta.cos().powi(2);
                let closed = overlap_gaussian(&[a], &[b], sigma).powi(2);
                rows.push(PositionRow {
                    a,
                    b,
                    fs_angle: theta,
                    cos2_grid: cos2,
                    closed_form: closed,
                    residual: (closed - cos2).abs(),
                });
            }
        }
        let worst = max_of(rows.iter().map(|r| r.residual));
        ctx.art.write_csv("position_metric.csv", rows)?;
        Ok(worst)
    })?;

    let c2 = ctx.timed("criterion 2".into(), |ctx| {
        let base = m.base_momentum * hbar / sigma;
        let da = linspace(-m.max_position_offset * sigma, m.max_position_offset * sigma, m.phase_points);
        let dq = linspace(-m.max_momentum_offset * hbar / sigma, m.max_momentum_offset * hbar / sigma, m.phase_points);
        let mut rows = Vec::new();
        for &d in &da {
            for &q in &dq {
                let (a, b, p, q) = (-0.5 * d, 0.5 * d, base, base + q);
                let residual = phase_space_metric_identity_residual(&[a], &[p], &[b], &[q], sigma, hbar, &grid)?;
                let closed = stategeom_core::manifold::phase_space_overlap_sq(&[a], &[p], &[b], &[q], sigma, hbar);
                rows.push(PhaseRow { a, p, b, q, closed_form: closed, residual });
            }
        }
        let worst = max_of(rows.iter().map(|r| r.residual));
        ctx.art.write_csv("phase_space_metric.csv", rows)?;
        Ok(worst)
    })?;

    let mut shifted = Vec::new();
    for a in [-2.0, 0.0, 2.0] {
        for p in [-1.0, 0.0, 1.0] {
            let (a, p) = (a * sigma, p * hbar / sigma);
            let r = shifted_operator_identity_residuals(&ctx.packet(a, p)?, &grid)?;
            shifted.push(ShiftedRow { a, p, position_residual: r.position, momentum_residual: r.momentum });
        }
    }
    let details = MetricDetails {
        grid_points: grid.points(),
        grid_extent: grid.extent(),
        max_position_residual: c1,
        max_phase_space_residual: c2,
        max_shifted_position_residual: max_of(shifted.iter().map(|r| r.position_residual)),
        max_shifted_momentum_residual: max_of(shifted.iter().map(|r| r.momentum_residual)),
    };
    ctx.art.write_csv("shifted_operators.csv", shifted)?;
    let criteria = vec![
        Criterion::new(
            1,
            "position metric identity",
            Experiment::VerifyMetric,
            vec![Check::below("max residual", c1, METRIC_TOLERANCE)],
        ),
        Criterion::new(
            2,
            "phase-space metric identity",
            Experiment::VerifyMetric,
            vec![Check::below("max residual", c2, METRIC_TOLERANCE)],
        ),
    ];
    ctx.report(Experiment::VerifyMetric, &criteria, details)?;
    Ok(criteria)
}

// ---------------------------------------------------------------- decompose

fn lattice_potentials(force: f64) -> [(&'static str, Potential); 2] {
    [("free", Potential::Free), ("linear", Potential::Linear { force: vec![force] })]
}

#[derive(Serialize)]
struct DecompositionRow {
    potential: &'static str,
    a: f64,
    p: f64,
    total_speed_sq: f64,
    residual_sq: f64,
    relative_residual: f64,
    classical_measured: f64,
    classical_predicted: f64,
    acceleration_measured: f64,
    acceleration_predicted: f64,
    spreading_measured: f64,
    spreading_predicted: f64,
    phase_rate_measured: f64,
    phase_rate_predicted: f64,
    worst_component_excess: f64,
    boundary_warning: bool,
}

pub const RESIDUAL_TOLERANCE: f64 = 1e-6;
pub const COMPONENT_TOLERANCE: f64 = 1e-4;

fn decompose(ctx: &mut Context) -> Result<Vec<Criterion>, RunError> {
    let cfg = ctx.cfg;
    let l = &cfg.decompose;
    let grid = GridSpec::line(cfg.grid.points, cfg.grid.extent)?;
    let rows = ctx.timed("criterion 3".into(), |ctx| {
        let mut rows = Vec::new();
        for (name, potential) in lattice_potentials(l.force) {
            let h = ctx.hamiltonian(potential)?;
            for &a in &l.positions {
                for &p in &l.momenta {
                    let d = decompose_velocity(&ctx.packet(a, p)?, &h, &grid)?;
                    rows.push(DecompositionRow {
                        potential: name,
                        a,
                        p,
                        total_speed_sq: d.total_speed_sq,
                        residual_sq: d.residual_sq,
                        relative_residual: d.relative_residual(),
                        classical_measured: d.measured.classical[0],
                        classical_predicted: d.predicted.classical[0],
                        acceleration_measured: d.measured.acceleration[0],
                        acceleration_predicted: d.predicted.acceleration[0],
                        spreading_measured: d.measured.spreading,
                        spreading_predicted: d.predicted.spreading,
                        phase_rate_measured: d.measured.phase_rate,
                        phase_rate_predicted: d.predicted.phase_rate,
                        worst_component_excess: d.worst_excess(COMPONENT_TOLERANCE, COMPONENT_FLOOR),
                        boundary_warning: d.boundary_warning,
                    });
                }
            }
        }
        Ok(rows)
    })?;
    let residual = max_of(rows.iter().map(|r| r.relative_residual));
    let excess = rows.iter().map(|r| r.worst_component_excess).fold(f64::NEG_INFINITY, f64::max);
    let boundary = rows.iter().any(|r| r.boundary_warning);
    let criteria = vec![Criterion::new(
        3,
        "velocity decomposition",
        Experiment::Decompose,
        vec![
            Check::below("max residual_sq / speed_sq", residual, RESIDUAL_TOLERANCE),
            Check::at_most("max component excess over 1e-4 relative", excess, 0.0),
            Check::flag("clear of the grid boundary", !boundary),
        ],
    )];
    ctx.art.write_csv("decomposition.csv", rows)?;
    ctx.report(Experiment::Decompose, &criteria, serde_json::json!({ "component_floor": COMPONENT_FLOOR }))?;
    Ok(criteria)
}

// ---------------------------------------------------------------- ehrenfest

#[derive(Serialize)]
struct EhrenfestRow {
    potential: &'static str,
    a: f64,
    p: f64,
    poisson_position_rate: f64,
    poisson_momentum_rate: f64,
    commutator_position_rate: f64,
    commutator_momentum_rate: f64,
    projection_position_rate: f64,
    projection_momentum_rate: f64,
    max_error: f64,
}

pub const EHRENFEST_TOLERANCE: f64 = 1e-6;

fn ehrenfest(ctx: &mut Context) -> Result<Vec<Criterion>, RunError> {
    let cfg = ctx.cfg;
    let l = &cfg.ehrenfest;
    let grid = GridSpec::line(cfg.grid.points, cfg.grid.extent)?;
    let rows = ctx.timed("criterion 4".into(), |ctx| {
        let mut rows = Vec::new();
        for (name, potential) in lattice_potentials(l.force) {
            let h = ctx.hamiltonian(potential)?;
            for &a in &l.positions {
                for &p in &l.momenta {
                    let params = ctx.packet(a, p)?;
                    let phi = make_packet(&params, &grid)?;
                    let x_rate = p / h.mass;
                    let p_rate = h.force_at(&[a])?[0];
                    let cx = commutator_expectation(&phi, Observable::Position, &h)?[0];
                    let cp = commutator_expectation(&phi, Observable::Momentum, &h)?[0];
                    let proj = ehrenfest_projections(&params, &h, &grid)?;
                    let (px, pp) = (proj.position[0], proj.momentum[0]);
                    let max_error = max_of([cx - x_rate, cp - p_rate, px - x_rate, pp - p_rate].map(f64::abs));
                    rows.push(EhrenfestRow {
                        potential: name,
                        a,
                        p,
                        poisson_position_rate: x_rate,
                        poisson_momentum_rate: p_rate,
                        commutator_position_rate: cx,
                        commutator_momentum_rate: cp,
                        projection_position_rate: px,
                        projection_momentum_rate: pp,
                        max_error,
                    });
                }
            }
        }
        Ok(rows)
    })?;
    let worst = max_of(rows.iter().map(|r| r.max_error));
    let criteria = vec![Criterion::new(
        4,
        "commutators and Ehrenfest rates",
        Experiment::Ehrenfest,
        vec![Check::below("max deviation from Poisson brackets", worst, EHRENFEST_TOLERANCE)],
    )];
    ctx.art.write_csv("ehrenfest.csv", rows)?;
    ctx.report(Experiment::Ehrenfest, &criteria, serde_json::json!({ "max_error": worst }))?;
    Ok(criteria)
}

// ---------------------------------------------------------------- classical

#[derive(Serialize)]
struct TrajectoryRow {
    time: f64,
    quantum_position: f64,
    classical_position: f64,
    deviation: f64,
}

#[derive(Serialize)]
struct ClassicalDetails {
    angular_frequency: f64,
    period: f64,
    t_final: f64,
    grid_spacing: f64,
    max_position_deviation: f64,
    max_momentum_deviation: f64,
    boundary_warning: bool,
}

fn classical_compare(ctx: &mut Context) -> Result<Vec<Criterion>, RunError> {
    let cfg = ctx.cfg;
    let k = &cfg.classical;
    let grid = GridSpec::line(cfg.grid.points, cfg.grid.extent)?;
    let omega = (k.stiffness / cfg.packet.mass).sqrt();
    let period = 2.0 * std::f64::consts::PI / omega;
    let t_final = k.periods * period;
    let report = ctx.timed("criterion 5".into(), |ctx| {
        let h = ctx.hamiltonian(Potential::Harmonic { stiffness: k.stiffness })?;
        Ok(quantum_classical_compare(&ctx.packet(k.position, k.momentum)?, &h, &grid, t_final, k.dt)?)
    })?;
    let rows: Vec<TrajectoryRow> = report
        .times
        .iter()
        .zip(report.quantum_position.iter().zip(&report.classical_position))
        .map(|(&time, (q, c))| TrajectoryRow {
            time,
            quantum_position: q[0],
            classical_position: c[0],
            deviation: (q[0] - c[0]).abs(),
        })
        .collect();
    ctx.art.write_csv("trajectory.csv", rows)?;
    let criteria = vec![Criterion::new(
        5,
        "packet follows the classical orbit",
        Experiment::ClassicalCompare,
        vec![
            Check::below("max |<x> - x_cl| / dx", report.max_position_deviation / report.grid_spacing, 1.0),
            Check::flag("clear of the grid boundary", !report.boundary_warning),
        ],
    )];
    let details = ClassicalDetails {
        angular_frequency: omega,
        period,
        t_final,
        grid_spacing: report.grid_spacing,
        max_position_deviation: report.max_position_deviation,
        max_momentum_deviation: report.max_momentum_deviation,
        boundary_warning: report.boundary_warning,
    };
    ctx.report(Experiment::ClassicalCompare, &criteria, details)?;
    Ok(criteria)
}

// ---------------------------------------------------------------- constrained

#[derive(Serialize)]
struct DisplacementRow {
    trial: u64,
    seed: u64,
    displacement: f64,
    fs_distance: f64,
    translation_error: f64,
}

#[derive(Serialize)]
struct VarianceRow {
    step: usize,
    time: f64,
    variance: f64,
    predicted_variance: f64,
}

#[derive(Serialize)]
struct ComponentRow {
    sample: usize,
    component: f64,
}

pub const VARIANCE_TOLERANCE: f64 = 0.05;
pub const DIFFUSION_TOLERANCE: f64 = 0.05;

fn constrained_walk(ctx: &mut Context) -> Result<Vec<Criterion>, RunError> {
    let cfg = ctx.cfg;
    let alpha = cfg.stats.alpha;
    let w = &cfg.constrained;
    let (sigma, hbar) = (cfg.packet.sigma, cfg.packet.hbar);

    let (c6, details6) = ctx.timed("criterion 6".into(), |ctx| {
        let grid = GridSpec::line(w.grid_points, w.extent)?;
        let walker = ConstrainedWalker::new(&ctx.packet(0.0, 0.0)?, &grid)?;
        let walk = WalkConfig {
            n_steps: w.steps,
            dt: w.dt,
            hbar,
            step: StepModel::Gaussian { step_sd: w.step_sd },
            n_trials: w.trials,
            master_seed: ctx.seed,
            record: RecordPolicy::Full,
        };
        let runs = walker.run(&walk)?;
        ctx.stream("constrained-walk", stream_id("constrained-walk"), w.trials);

        let finals: Vec<f64> = runs.iter().map(|r| r.displacement[0]).collect();
        let normality = normality_test(&finals, alpha)?;
        let predicted_var = w.steps as f64 * (w.step_sd * w.dt).powi(2);
        let var_error = (normality.variance / predicted_var - 1.0).abs();

        let times: Vec<f64> = (1..=w.steps).map(|k| k as f64 * w.dt).collect();
        let paths: Vec<Vec<f64>> =
            (0..w.steps).map(|k| runs.iter().map(|r| r.path.as_ref().expect("full record")[k][0]).collect()).collect();
        let fit = diffusion_fit(&times, &paths)?;
        let predicted_d = w.step_sd * w.step_sd * w.dt / 2.0;
        let d_error = (fit.d_fit / predicted_d - 1.0).abs();
        let max_translation_error = max_of(runs.iter().map(|r| r.translation_error));

        ctx.art.write_csv(
            "displacements.csv",
            runs.iter().map(|r| DisplacementRow {
                trial: r.record.trial,
                seed: r.record.seed,
                displacement: r.displacement[0],
                fs_distance: r.record.final_distance(),
                translation_error: r.translation_error,
            }),
        )?;
        ctx.art.write_csv(
            "variance_curve.csv",
            fit.times.iter().zip(&fit.variances).enumerate().map(|(k, (&time, &variance))| VarianceRow {
                step: k + 1,
                time,
                variance,
                predicted_variance: 2.0 * predicted_d * time,
            }),
        )?;
        let checks = vec![
            Check::above("normality p-value", normality.p_value, alpha),
            Check::below("|Var(d) / (n s^2 dt^2) - 1|", var_error, VARIANCE_TOLERANCE),
            Check::below("|D_fit / (s^2 dt / 2) - 1|", d_error, DIFFUSION_TOLERANCE),
        ];
        let details = serde_json::json!({
            "normality": normality,
            "predicted_variance": predicted_var,
            "diffusion_fit": fit,
            "predicted_diffusion": predicted_d,
            "max_translation_error": max_translation_error,
        });
        Ok((checks, details))
    })?;

    let g = &cfg.gue_projection;
    let (c7, details7) = ctx.timed("criterion 7".into(), |ctx| {
        let grid = GridSpec::line(g.grid_points, g.extent)?;
        let scale = calibrate_scale(g.step_sd, sigma, hbar);
        let samples =
            project_gue_step_onto_classical(&ctx.packet(0.0, 0.0)?, &grid, scale, g.dt, g.samples, ctx.seed, 0)?;
        ctx.stream("gue-projection (axis 0)", stream_id("gue-projection"), g.samples);
        let normality = normality_test(&samples, alpha)?;
        let predicted = gue_component_variance(scale, g.dt, hbar);
        ctx.art.write_csv(
            "gue_components.csv",
            samples.iter().enumerate().map(|(sample, &component)| ComponentRow { sample, component }),
        )?;
        let checks = vec![Check::above("normality p-value", normality.p_value, alpha)];
        let details = serde_json::json!({
            "normality": normality,
            "ensemble_scale": scale,
            "predicted_variance": predicted,
        });
        Ok((checks, details))
    })?;

    let criteria = vec![
        Criterion::new(6, "constrained walk is Gaussian diffusion", Experiment::ConstrainedWalk, c6),
        Criterion::new(7, "GUE steps along the classical direction are Gaussian", Experiment::ConstrainedWalk, c7),
    ];
    ctx.report(
        Experiment::ConstrainedWalk,
        &criteria,
        serde_json::json!({ "constrained": details6, "gue_projection": details7 }),
    )?;
    Ok(criteria)
}

// ---------------------------------------------------------------- gue walk

/// Complex vector with i.i.d. standard normal real and imaginary parts.
fn gaussian_vector(n: usize, rng: &mut TrialRng) -> DVector<Complex64> {
    DVector::from_fn(n, |_, _| Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
}

fn basis(n: usize, j: usize) -> DVector<Complex64> {
    let mut v = DVector::zeros(n);
    v[j] = Complex64::new(1.0, 0.0);
    v
}

#[derive(Serialize)]
struct SetRow {
    set: usize,
    base: usize,
    direction: &'static str,
    mean: f64,
    variance: f64,
    predicted_variance: f64,
}

#[derive(Serialize)]
struct SampleRow {
    set: usize,
    sample: usize,
    component: f64,
}

#[derive(Serialize)]
struct GrowthRow {
    step: usize,
    mean_fs_distance_sq: f64,
    small_step_prediction: f64,
}

const DIRECTIONS: [&str; 4] = ["e1", "i*e2", "(e3+e4)/sqrt2", "random"];

fn gue_walk(ctx: &mut Context) -> Result<Vec<Criterion>, RunError> {
    let cfg = ctx.cfg;
    let i = &cfg.isotropy;
    let hbar = cfg.packet.hbar;
    let n = i.dim;
    let ens = GueEnsemble::new(n, i.scale)?;

    let (checks, report, rows) = ctx.timed("criterion 8".into(), |ctx| {
        let phi1 = basis(n, 0);
        let base_walk = WalkConfig {
            n_steps: i.base_steps,
            dt: i.dt,
            hbar,
            step: StepModel::Gue(ens.with_seed(stream_id("base-state"))),
            n_trials: 1,
            master_seed: ctx.seed,
            record: RecordPolicy::Full,
        };
        let phi2 = walk_unconstrained(&phi1, &base_walk, 0)?.final_state.expect("full record");
        ctx.stream("gue-walk ^ base-state", stream_id("gue-walk") ^ stream_id("base-state"), 1);
        let bases = [phi1, phi2];

        let direction_stream = stream_id("isotropy-direction");
        let mut sets = Vec::new();
        let mut rows = Vec::new();
        let sample_stream = stream_id("isotropy");
        for (b, phi) in bases.iter().enumerate() {
            let sqrt_half = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            let raw = [
                basis(n, 1),
                basis(n, 2) * Complex64::i(),
                (basis(n, 3) + basis(n, 4)) * sqrt_half,
                gaussian_vector(n, &mut trial_rng(ctx.seed, direction_stream, b as u64)),
            ];
            for (d, r) in raw.iter().enumerate() {
                let dir = [tangent_direction(phi, r)?];
                let set = sets.len();
                let offset = (set * i.samples) as u64;
                let samples = (0..i.samples as u64)
                    .into_par_iter()
                    .map(|k| {
                        let h = sample_gue(&ens, &mut trial_rng(ctx.seed, sample_stream, offset + k));
                        Ok(step_tangent_components(phi, &h, i.dt, hbar, &dir)?[0])
                    })
                    .collect::<Result<Vec<f64>, stategeom_core::Error>>()?;
                let mo = moments(&samples);
                rows.push(SetRow {
                    set,
                    base: b,
                    direction: DIRECTIONS[d],
                    mean: mo.mean,
                    variance: mo.variance,
                    predicted_variance: gue_component_variance(i.scale, i.dt, hbar),
                });
                sets.push(samples);
            }
        }
        ctx.stream("isotropy-direction", direction_stream, bases.len());
        ctx.stream("isotropy", sample_stream, sets.len() * i.samples);
        let report = isotropy_test(&sets, cfg.stats.alpha)?;
        ctx.art.write_csv(
            "isotropy_samples.csv",
            sets.iter().enumerate().flat_map(|(set, s)| {
                s.iter().enumerate().map(move |(sample, &component)| SampleRow { set, sample, component })
            }),
        )?;
        let checks = vec![
            Check::above("min pairwise KS p-value (Bonferroni level)", report.p_value, report.threshold),
            Check::at_least("sample sets (directions x base states)", sets.len() as f64, 8.0),
        ];
        Ok((checks, report, rows))
    })?;
    ctx.art.write_csv("isotropy_sets.csv", rows)?;

    // Distance growth of free dense walks from e_0.
    let walk = WalkConfig {
        n_steps: i.walk_steps,
        dt: i.dt,
        hbar,
        step: StepModel::Gue(ens),
        n_trials: i.walk_trials,
        master_seed: ctx.seed,
        record: RecordPolicy::Full,
    };
    let records = run_unconstrained(&basis(n, 0), &walk)?;
    ctx.stream("gue-walk", stream_id("gue-walk"), i.walk_trials);
    let mut trajectories = Vec::new();
    write_trajectory_csv(&mut trajectories, &records, i.walk_steps)?;
    ctx.art.write_bytes("trajectories.csv", &trajectories)?;
    let per_step = (n as f64 - 1.0) * (i.scale * i.dt / hbar).powi(2);
    let growth: Vec<GrowthRow> = (0..i.walk_steps)
        .map(|k| {
            let sq: Vec<f64> = records.iter().map(|r| r.fs_distances[k].powi(2)).collect();
            GrowthRow {
                step: k + 1,
                mean_fs_distance_sq: moments(&sq).mean,
                small_step_prediction: per_step * (k + 1) as f64,
            }
        })
        .collect();
    ctx.art.write_csv("distance_growth.csv", growth)?;

    let criteria = vec![Criterion::new(8, "isotropy and homogeneity of GUE steps", Experiment::GueWalk, checks)];
    ctx.report(Experiment::GueWalk, &criteria, serde_json::json!({ "isotropy": report, "directions": DIRECTIONS }))?;
    Ok(criteria)
}

// ---------------------------------------------------------------- born

#[derive(Serialize)]
struct PairRow {
    group: String,
    first: String,
    second: String,
    pooled_z: f64,
}

#[derive(Serialize)]
struct SensitivityRow {
    eps: f64,
    label: String,
    fs_distance: f64,
    born_probability: f64,
    frequency: f64,
    std_error: f64,
}

pub const BORN_MAX_Z: f64 = 3.0;
pub const CLOSED_FORM_TOLERANCE: f64 = 1e-12;

fn born_check(ctx: &mut Context) -> Result<Vec<Criterion>, RunError> {
    let cfg = ctx.cfg;
    let b = &cfg.born;
    let (sigma, hbar) = (cfg.packet.sigma, cfg.packet.hbar);
    let grid = GridSpec::line(b.grid_points, b.extent)?;
    let n = grid.sites();

    let (checks, rows, pairs, sensitivity) = ctx.timed("criterion 9".into(), |ctx| {
        let phi0 = make_packet(&ctx.packet(0.0, 0.0)?, &grid)?.to_coordinates();
        let mut targets = vec![BornTarget {
            label: "origin".into(),
            state: phi0.clone(),
            gaussian_closed_form: Some(1.0),
            group: None,
        }];
        let direction_stream = stream_id("born-target");
        for (j, &o) in b.offsets.iter().enumerate() {
            let group = format!("offset {o}");
            let closed = (-o * o / 4.0).exp();
            for sign in [-1.0, 1.0] {
                let state = make_packet(&ctx.packet(sign * o * sigma, 0.0)?, &grid)?.to_coordinates();
                targets.push(BornTarget {
                    label: format!("packet {:+}", sign * o),
                    state,
                    gaussian_closed_form: Some(closed),
                    group: Some(group.clone()),
                });
            }
            // same Fubini-Study distance, generic direction
            let theta = fs_distance_dense(&phi0, &targets[targets.len() - 1].state);
            let raw = gaussian_vector(n, &mut trial_rng(ctx.seed, direction_stream, j as u64));
            let u = tangent_direction(&phi0, &raw)?;
            let state = &phi0 * Complex64::new(theta.cos(), 0.0) + u * Complex64::new(theta.sin(), 0.0);
            targets.push(BornTarget {
                label: format!("random at offset {o}"),
                state,
                gaussian_closed_form: None,
                group: Some(group),
            });
        }
        ctx.stream("born-target", direction_stream, b.offsets.len());

        let walk = WalkConfig {
            n_steps: b.steps,
            dt: b.dt,
            hbar,
            step: StepModel::Gue(GueEnsemble::new(n, b.scale)?),
            n_trials: b.trials,
            master_seed: ctx.seed,
            record: RecordPolicy::Full,
        };
        let finals: Vec<DVector<Complex64>> =
            run_unconstrained(&phi0, &walk)?.into_iter().map(|r| r.final_state.expect("full record")).collect();
        ctx.stream("gue-walk", stream_id("gue-walk"), b.trials);
        let rows = born_rule_curve(&finals, &phi0, &targets, b.eps)?;

        let mut pairs = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            for s in &rows[i + 1..] {
                if let (Some(g), Some(h)) = (&r.group, &s.group) {
                    if g == h {
                        pairs.push(PairRow {
                            group: g.clone(),
                            first: r.label.clone(),
                            second: s.label.clone(),
                            pooled_z: pooled_z(r, s),
                        });
                    }
                }
            }
        }
        let closed_gap =
            max_of(rows.iter().filter_map(|r| r.gaussian_closed_form.map(|g| (g - r.born_probability).abs())));
        let grouped: Vec<&BornRow> = rows.iter().filter(|r| r.group.is_some()).collect();
        let min_hits = grouped.iter().map(|r| r.hits).min().unwrap_or(0) as f64;
        let max_hits = grouped.iter().map(|r| r.hits).max().unwrap_or(0) as f64;
        let checks = vec![
            Check::below(
                "max pooled z within equal-distance groups",
                max_of(pairs.iter().map(|p| p.pooled_z)),
                BORN_MAX_Z,
            ),
            Check::below("max |closed form - grid Born probability|", closed_gap, CLOSED_FORM_TOLERANCE),
            Check::at_least("fewest hits on a grouped target", min_hits, 1.0),
            Check::at_most("most hits on a grouped target", max_hits, b.trials as f64 - 1.0),
        ];

        let mut sensitivity = Vec::new();
        for factor in [0.5, 1.0, 1.5] {
            let eps = (b.eps * factor).min(1.5);
            for r in born_rule_curve(&finals, &phi0, &targets, eps)? {
                sensitivity.push(SensitivityRow {
                    eps,
                    label: r.label,
                    fs_distance: r.fs_distance,
                    born_probability: r.born_probability,
                    frequency: r.frequency,
                    std_error: r.std_error,
                });
            }
        }
        Ok((checks, rows, pairs, sensitivity))
    })?;
    ctx.art.write_csv("born.csv", rows.iter())?;
    ctx.art.write_csv("born_pairs.csv", pairs)?;
    ctx.art.write_csv("eps_sensitivity.csv", sensitivity)?;
    let criteria = vec![Criterion::new(9, "Born statistics of dense walks", Experiment::BornCheck, checks)];
    let details = serde_json::json!({
        "eps": b.eps,
        "time": b.dt * b.steps as f64,
        "rows": rows,
    });
    ctx.report(Experiment::BornCheck, &criteria, details)?;
    Ok(criteria)
}

// ---------------------------------------------------------------- macro

#[derive(Serialize)]
struct SweepCsvRow {
    radius_m: f64,
    diffusion_m2_s: f64,
    displacement_m: f64,
    theta_rad: f64,
    frozen: bool,
}

/// Order-of-magnitude targets of the reference chain.
pub const DISPLACEMENT_BRACKET: (f64, f64) = (1e-13, 1e-12);
pub const THETA_TARGET: f64 = 1e-7;
pub const THETA_FACTOR: f64 = 3.0;

fn macro_estimate(ctx: &mut Context) -> Result<Vec<Criterion>, RunError> {
    let m = &ctx.cfg.macro_estimate;
    let (report, sweep) = ctx.timed("criterion 10".into(), |_| {
        let mut s = MacroScenario::new(
            Meters(m.radius_m),
            Kelvin(m.temperature_k),
            PascalSeconds(m.viscosity_pa_s),
            Seconds(m.observation_time_s),
            Meters(m.resolution_sigma_m),
            Meters(m.wavelength_m),
        )?;
        s.dimension = m.dimension;
        let theta_min = m.theta_min_rad.map(Radians);
        let report = freezing_report(&s, theta_min)?;
        let radii = log_spaced(m.sweep_min_radius_m, m.sweep_max_radius_m, m.sweep_points)?;
        Ok((report, freezing_sweep(&s, &radii, theta_min)?))
    })?;
    ctx.art.write_csv(
        "sweep.csv",
        sweep.iter().map(|r| SweepCsvRow {
            radius_m: r.radius.0,
            diffusion_m2_s: r.diffusion.0,
            displacement_m: r.displacement.0,
            theta_rad: r.theta.0,
            frozen: r.frozen,
        }),
    )?;
    let reference = &report.reference;
    let checks = vec![
        Check::within(
            "reference displacement (m)",
            reference.displacement.0,
            DISPLACEMENT_BRACKET.0,
            DISPLACEMENT_BRACKET.1,
        ),
        Check::within("reference theta / 1e-7 rad", reference.theta.0 / THETA_TARGET, 1.0 / THETA_FACTOR, THETA_FACTOR),
        Check::above("direct Stokes-Einstein D (m^2/s)", report.direct.diffusion.0, 0.0),
        Check::flag("discrepancy note present", !report.note.is_empty() && report.discrepancy_ratio.is_finite()),
    ];
    let criteria = vec![Criterion::new(10, "macroscopic freezing chain", Experiment::MacroEstimate, checks)];
    ctx.report(Experiment::MacroEstimate, &criteria, &report)?;
    Ok(criteria)
}

//! Schema and physics sanity checks that run without executing anything.

use std::fmt;

use serde::Serialize;
use stategeom_core::grid::{split_step_error, GridSpec, HamiltonianSpec, Potential};
use stategeom_core::manifold::{make_packet, PacketParams, MARGIN_SIGMAS};
use stategeom_core::stats::{MIN_ISOTROPY_SAMPLES, MIN_NORMALITY_SAMPLES};
use stategeom_core::walk::MAX_DENSE_DIM;

use crate::config::{locate, Config, Experiment, Units};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Dotted key, e.g. `packet.sigma`.
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match self.line {
            Some(l) => write!(f, "{level}: line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{level}: {}: {}", self.key, self.message),
        }
    }
}

/// Samples used by the acceptance thresholds; smaller ensembles get a warning.
pub const ACCEPTANCE_SAMPLES: usize = 10_000;
pub const ACCEPTANCE_BORN_TRIALS: usize = 100_000;
/// Accumulated split-step error above which a smaller `dt` is suggested.
pub const SPLIT_STEP_BUDGET: f64 = 1e-4;
/// Mean squared Fubini-Study angle per GUE step above which steps stop being small.
pub const GUE_STEP_ANGLE_SQ: f64 = 0.25;

struct Collector<'a> {
    text: Option<&'a str>,
    out: Vec<Diagnostic>,
}

impl Collector<'_> {
    fn push(&mut self, severity: Severity, key: &str, message: String) {
        let (section, field) = key.rsplit_once('.').unwrap_or(("", key));
        let line = self.text.and_then(|t| locate(t, section, field).or_else(|| locate(t, section, "")));
        self.out.push(Diagnostic { severity, key: key.to_string(), line, message });
    }

    fn error(&mut self, key: &str, message: String) {
        self.push(Severity::Error, key, message);
    }

    fn warn(&mut self, key: &str, message: String) {
        self.push(Severity::Warning, key, message);
    }

    fn positive(&mut self, key: &str, v: f64) -> bool {
        let ok = v.is_finite() && v > 0.0;
        if !ok {
            self.error(key, format!("must be positive and finite, got {v}"));
        }
        ok
    }

    fn at_least(&mut self, key: &str, v: usize, min: usize) -> bool {
        let ok = v >= min;
        if !ok {
            self.error(key, format!("must be at least {min}, got {v}"));
        }
        ok
    }

    fn grid(&mut self, key: &str, points: usize, extent: f64) -> Option<GridSpec> {
        match GridSpec::line(points, extent) {
            Ok(g) => Some(g),
            Err(e) => {
                self.error(key, e.to_string());
                None
            }
        }
    }

    /// Checks that a packet centered at `reach` fits; suggests an extent otherwise.
    fn margin(&mut self, key: &str, extent: f64, reach: f64, sigma: f64) {
        let needed = 2.0 * (reach.abs() + MARGIN_SIGMAS * sigma);
        if needed > extent {
            let suggested = (needed * 1.25).ceil();
            self.error(
                key,
                format!(
                    "packet reaching {reach} with width {sigma} needs extent >= {needed}; \
                     suggested extent = {suggested} (keep spacing by scaling points too)"
                ),
            );
        }
    }

    fn samples(&mut self, key: &str, v: usize, min: usize, acceptance: usize) {
        if self.at_least(key, v, min) && v < acceptance {
            self.warn(key, format!("{v} is below the {acceptance} used by the acceptance thresholds"));
        }
    }
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Diagnostics for running `experiment` with `cfg`; `text` is the source for
/// line numbers. An empty list means the configuration is ready to run.
pub fn validate(cfg: &Config, text: Option<&str>, experiment: Experiment) -> Vec<Diagnostic> {
    let mut c = Collector { text, out: Vec::new() };
    if cfg.seed.is_none() {
        c.error("seed", "missing; set `seed = <u64>` or pass --seed (runs are never seeded from the clock)".into());
    }
    let parts = experiment.parts();
    let grid_experiment = parts.iter().any(|e| *e != Experiment::MacroEstimate);
    if cfg.units == Units::Si && grid_experiment {
        c.error("units", format!("`si` applies only to macro-estimate; {experiment} runs in natural units"));
    }
    let alpha = cfg.stats.alpha;
    if !(alpha > 0.0 && alpha < 1.0) {
        c.error("stats.alpha", format!("must lie in (0, 1), got {alpha}"));
    }

    let p = &cfg.packet;
    let packet_ok =
        c.positive("packet.sigma", p.sigma) & c.positive("packet.mass", p.mass) & c.positive("packet.hbar", p.hbar);
    let sigma = if packet_ok { p.sigma } else { 1.0 };

    for e in parts {
        match e {
            Experiment::VerifyMetric => {
                let m = &cfg.metric;
                c.at_least("metric.lattice_points", m.lattice_points, 2);
                c.at_least("metric.phase_points", m.phase_points, 2);
                for (k, v) in [
                    ("metric.lattice_half_width", m.lattice_half_width),
                    ("metric.max_position_offset", m.max_position_offset),
                    ("metric.max_momentum_offset", m.max_momentum_offset),
                ] {
                    c.positive(k, v);
                }
                if c.grid("grid.points", cfg.grid.points, cfg.grid.extent).is_some() {
                    let reach = sigma * m.lattice_half_width.max(0.5 * m.max_position_offset);
                    c.margin("grid.extent", cfg.grid.extent, reach, sigma);
                }
            }
            Experiment::Decompose | Experiment::Ehrenfest => {
                let (name, l) = if e == Experiment::Decompose {
                    ("decompose", &cfg.decompose)
                } else {
                    ("ehrenfest", &cfg.ehrenfest)
                };
                if l.positions.is_empty() || l.momenta.is_empty() {
                    c.error(
                        &format!("{name}.positions"),
                        "lattice needs at least one position and one momentum".into(),
                    );
                }
                if !l.force.is_finite() {
                    c.error(&format!("{name}.force"), format!("must be finite, got {}", l.force));
                }
                if c.grid("grid.points", cfg.grid.points, cfg.grid.extent).is_some() {
                    c.margin("grid.extent", cfg.grid.extent, max_abs(&l.positions), sigma);
                }
            }
            Experiment::ClassicalCompare => {
                let k = &cfg.classical;
                let ok = c.positive("classical.stiffness", k.stiffness)
                    & c.positive("classical.periods", k.periods)
                    & c.positive("classical.dt", k.dt);
                if let Some(g) = c.grid("grid.points", cfg.grid.points, cfg.grid.extent) {
                    if ok && packet_ok {
                        // amplitude of the classical orbit bounds the packet's reach
                        let omega = (k.stiffness / p.mass).sqrt();
                        let reach = (k.position.powi(2) + (k.momentum / (p.mass * omega)).powi(2)).sqrt();
                        c.margin("grid.extent", cfg.grid.extent, reach, sigma);
                        convergence(&mut c, cfg, &g, omega, reach);
                    }
                }
            }
            Experiment::ConstrainedWalk => {
                let w = &cfg.constrained;
                let ok = c.positive("constrained.dt", w.dt) & c.positive("constrained.step_sd", w.step_sd);
                c.at_least("constrained.steps", w.steps, 3);
                c.samples("constrained.trials", w.trials, MIN_NORMALITY_SAMPLES, ACCEPTANCE_SAMPLES);
                if c.grid("constrained.grid_points", w.grid_points, w.extent).is_some() && ok {
                    // six standard deviations of the final displacement
                    let reach = 6.0 * w.step_sd * w.dt * (w.steps as f64).sqrt();
                    c.margin("constrained.extent", w.extent, reach, sigma);
                }
                let g = &cfg.gue_projection;
                let ok = c.positive("gue_projection.dt", g.dt) & c.positive("gue_projection.step_sd", g.step_sd);
                c.samples("gue_projection.samples", g.samples, MIN_NORMALITY_SAMPLES, ACCEPTANCE_SAMPLES);
                if g.grid_points > MAX_DENSE_DIM {
                    c.error("gue_projection.grid_points", format!("dense GUE is capped at {MAX_DENSE_DIM} sites"));
                } else if c.grid("gue_projection.grid_points", g.grid_points, g.extent).is_some() && ok {
                    c.margin("gue_projection.extent", g.extent, 0.0, sigma);
                }
            }
            Experiment::GueWalk => {
                let i = &cfg.isotropy;
                let ok = c.positive("isotropy.dt", i.dt) & c.positive("isotropy.scale", i.scale);
                if i.dim < 6 || i.dim > MAX_DENSE_DIM {
                    c.error("isotropy.dim", format!("must lie in [6, {MAX_DENSE_DIM}], got {}", i.dim));
                } else if ok {
                    gue_step_size(&mut c, "isotropy.dt", i.dim, i.scale, i.dt, p.hbar);
                }
                c.samples("isotropy.samples", i.samples, MIN_ISOTROPY_SAMPLES, ACCEPTANCE_SAMPLES);
                c.at_least("isotropy.base_steps", i.base_steps, 1);
                c.at_least("isotropy.walk_trials", i.walk_trials, 2);
                c.at_least("isotropy.walk_steps", i.walk_steps, 1);
            }
            Experiment::BornCheck => {
                let b = &cfg.born;
                let ok = c.positive("born.dt", b.dt) & c.positive("born.scale", b.scale);
                c.at_least("born.steps", b.steps, 1);
                if c.at_least("born.trials", b.trials, MIN_NORMALITY_SAMPLES) && b.trials < ACCEPTANCE_BORN_TRIALS {
                    c.warn(
                        "born.trials",
                        format!("{} is below the {ACCEPTANCE_BORN_TRIALS} used by the acceptance thresholds", b.trials),
                    );
                }
                if !(b.eps > 0.0 && b.eps < std::f64::consts::FRAC_PI_2) {
                    c.error("born.eps", format!("must lie in (0, pi/2), got {}", b.eps));
                }
                if b.offsets.is_empty() || b.offsets.iter().any(|o| !(o.is_finite() && *o > 0.0)) {
                    c.error("born.offsets", "needs at least one positive offset".into());
                }
                if b.grid_points > MAX_DENSE_DIM {
                    c.error("born.grid_points", format!("dense walks are capped at {MAX_DENSE_DIM} sites"));
                } else if c.grid("born.grid_points", b.grid_points, b.extent).is_some() {
                    c.margin("born.extent", b.extent, sigma * max_abs(&b.offsets), sigma);
                    if ok {
                        gue_step_size(&mut c, "born.dt", b.grid_points, b.scale, b.dt, p.hbar);
                    }
                }
            }
            Experiment::MacroEstimate => {
                let m = &cfg.macro_estimate;
                for (k, v) in [
                    ("macro.radius_m", m.radius_m),
                    ("macro.temperature_k", m.temperature_k),
                    ("macro.viscosity_pa_s", m.viscosity_pa_s),
                    ("macro.observation_time_s", m.observation_time_s),
                    ("macro.resolution_sigma_m", m.resolution_sigma_m),
                    ("macro.wavelength_m", m.wavelength_m),
                ] {
                    c.positive(k, v);
                }
                if m.dimension == 0 {
                    c.error("macro.dimension", "must be at least 1".into());
                }
                if let Some(t) = m.theta_min_rad {
                    c.positive("macro.theta_min_rad", t);
                }
                if !(m.sweep_min_radius_m > 0.0 && m.sweep_max_radius_m > m.sweep_min_radius_m) {
                    c.error("macro.sweep_min_radius_m", "sweep needs 0 < min < max".into());
                }
                c.at_least("macro.sweep_points", m.sweep_points, 2);
            }
            Experiment::All => unreachable!("expanded by parts()"),
        }
    }
    dedup(c.out)
}

/// Flags a split-step size whose accumulated error over the run exceeds the budget.
fn convergence(c: &mut Collector, cfg: &Config, grid: &GridSpec, omega: f64, reach: f64) {
    let k = &cfg.classical;
    let p = &cfg.packet;
    let Ok(params) = PacketParams::new(vec![k.position], vec![k.momentum], p.sigma, p.mass, p.hbar) else {
        return;
    };
    if reach + MARGIN_SIGMAS * p.sigma > grid.half_extent() {
        return;
    }
    let Ok(h) = HamiltonianSpec::new(p.mass, p.hbar, Potential::Harmonic { stiffness: k.stiffness }) else {
        return;
    };
    let Ok(phi) = make_packet(&params, grid) else {
        return;
    };
    let steps = (k.periods * 2.0 * std::f64::consts::PI / omega / k.dt).ceil();
    // step-halving estimates the local error of the coarse step up to a factor 4/3
    if let Ok(local) = split_step_error(&phi, &h, k.dt) {
        let total = local * steps;
        if total > SPLIT_STEP_BUDGET {
            c.warn("classical.dt", format!("dt convergence: estimated accumulated split-step error {total:.1e} exceeds {SPLIT_STEP_BUDGET:.0e}; reduce dt"));
        }
    }
}

fn gue_step_size(c: &mut Collector, key: &str, dim: usize, scale: f64, dt: f64, hbar: f64) {
    let angle_sq = (dim as f64 - 1.0) * (scale * dt / hbar).powi(2);
    if angle_sq > GUE_STEP_ANGLE_SQ {
        c.warn(key, format!("dt convergence: mean squared step angle {angle_sq:.3} exceeds {GUE_STEP_ANGLE_SQ}; steps are not small"));
    }
}

fn dedup(mut v: Vec<Diagnostic>) -> Vec<Diagnostic> {
    let mut seen = Vec::new();
    v.retain(|d| {
        let key = (d.key.clone(), d.message.clone());
        let fresh = !seen.contains(&key);
        seen.push(key);
        fresh
    });
    v
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse, preset};

    #[test]
    fn default_preset_is_clean() {
        let text = preset("default").unwrap();
        let cfg = parse(text).unwrap();
        let d = validate(&cfg, Some(text), Experiment::All);
        assert!(d.is_empty(), "{d:?}");
    }

    #[test]
    fn rounded_viscosity_preset_is_clean_for_the_macro_estimate() {
        let text = preset("paper-1mm").unwrap();
        let cfg = parse(text).unwrap();
        assert!(validate(&cfg, Some(text), Experiment::MacroEstimate).is_empty());
        assert!(has_errors(&validate(&cfg, Some(text), Experiment::Decompose)));
    }

    #[test]
    fn missing_seed_is_an_error() {
        let d = validate(&Config::default(), None, Experiment::MacroEstimate);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].key, "seed");
        assert_eq!(d[0].severity, Severity::Error);
    }

    #[test]
    fn wide_packet_gets_a_margin_diagnostic_with_a_suggestion() {
        let text = "seed = 1\n[packet]\nsigma = 4.0\n[grid]\npoints = 512\nextent = 40.0\n";
        let cfg = parse(text).unwrap();
        let d = validate(&cfg, Some(text), Experiment::VerifyMetric);
        let margin = d.iter().find(|d| d.key == "grid.extent").expect("margin diagnostic");
        assert!(margin.message.contains("suggested extent"), "{}", margin.message);
        assert_eq!(margin.line, Some(6));
    }

    #[test]
    fn coarse_split_step_is_flagged() {
        let text = "seed = 1\n[classical]\ndt = 0.2\n";
        let d = validate(&parse(text).unwrap(), Some(text), Experiment::ClassicalCompare);
        assert!(d.iter().any(|d| d.key == "classical.dt" && d.message.contains("dt convergence")), "{d:?}");
        assert_eq!(d[0].line, Some(3));
    }

    #[test]
    fn small_samples_warn_and_tiny_samples_fail() {
        let text = "seed = 1\n[constrained]\ntrials = 500\n";
        let d = validate(&parse(text).unwrap(), Some(text), Experiment::ConstrainedWalk);
        assert!(!has_errors(&d));
        assert!(d.iter().any(|d| d.key == "constrained.trials"));
        let text = "seed = 1\n[constrained]\ntrials = 5\n";
        assert!(has_errors(&validate(&parse(text).unwrap(), Some(text), Experiment::ConstrainedWalk)));
    }
}

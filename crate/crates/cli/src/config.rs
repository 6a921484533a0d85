//! Run configuration: a TOML tree with one section per experiment, plus the
//! shipped presets.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    VerifyMetric,
    Decompose,
    Ehrenfest,
    ClassicalCompare,
    ConstrainedWalk,
    GueWalk,
    BornCheck,
    MacroEstimate,
    All,
}

impl Experiment {
    /// Every concrete experiment, in the order `all` runs them.
    pub const SUITE: [Experiment; 8] = [
        Experiment::VerifyMetric,
        Experiment::Decompose,
        Experiment::Ehrenfest,
        Experiment::ClassicalCompare,
        Experiment::ConstrainedWalk,
        Experiment::GueWalk,
        Experiment::BornCheck,
        Experiment::MacroEstimate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::VerifyMetric => "verify-metric",
            Experiment::Decompose => "decompose",
            Experiment::Ehrenfest => "ehrenfest",
            Experiment::ClassicalCompare => "classical-compare",
            Experiment::ConstrainedWalk => "constrained-walk",
            Experiment::GueWalk => "gue-walk",
            Experiment::BornCheck => "born-check",
            Experiment::MacroEstimate => "macro-estimate",
            Experiment::All => "all",
        }
    }

    pub fn parts(self) -> Vec<Experiment> {
        match self {
            Experiment::All => Self::SUITE.to_vec(),
            e => vec![e],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::SUITE
            .into_iter()
            .chain([Experiment::All])
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// `hbar = m = 1` scales for the grid experiments.
    #[default]
    Natural,
    /// SI; only the macroscopic estimate is formulated in these units.
    Si,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub units: Units,
    pub output_dir: Option<PathBuf>,
    pub grid: GridSection,
    pub packet: PacketSection,
    pub metric: MetricSection,
    pub decompose: LatticeSection,
    pub ehrenfest: LatticeSection,
    pub classical: ClassicalSection,
    pub constrained: ConstrainedSection,
    pub gue_projection: GueProjectionSection,
    pub isotropy: IsotropySection,
    pub born: BornSection,
    #[serde(rename = "macro")]
    pub macro_estimate: MacroSection,
    pub stats: StatsSection,
}

/// One-dimensional grid shared by the deterministic experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub points: usize,
    pub extent: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { points: 512, extent: 40.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacketSection {
    pub sigma: f64,
    pub mass: f64,
    pub hbar: f64,
}

impl Default for PacketSection {
    fn default() -> Self {
        Self { sigma: 1.0, mass: 1.0, hbar: 1.0 }
    }
}

/// Offsets are in units of `sigma` (positions) and `hbar / sigma` (momenta).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSection {
    pub lattice_points: usize,
    pub lattice_half_width: f64,
    pub phase_points: usize,
    pub max_position_offset: f64,
    pub max_momentum_offset: f64,
    pub base_momentum: f64,
}

impl Default for MetricSection {
    fn default() -> Self {
        Self {
            lattice_points: 17,
            lattice_half_width: 2.0,
            phase_points: 5,
            max_position_offset: 4.0,
            max_momentum_offset: 2.0,
            base_momentum: 0.3,
        }
    }
}

/// Phase-space lattice evaluated under the free and a linear potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    pub positions: Vec<f64>,
    pub momenta: Vec<f64>,
    pub force: f64,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self { positions: vec![-2.0, 0.0, 2.0], momenta: vec![-1.0, 0.0, 1.0], force: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalSection {
    pub stiffness: f64,
    pub position: f64,
    pub momentum: f64,
    pub periods: f64,
    pub dt: f64,
}

impl Default for ClassicalSection {
    fn default() -> Self {
        Self { stiffness: 1.0, position: 3.0, momentum: 0.5, periods: 1.0, dt: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstrainedSection {
    pub grid_points: usize,
    pub extent: f64,
    pub step_sd: f64,
    pub dt: f64,
    pub steps: usize,
    pub trials: usize,
}

impl Default for ConstrainedSection {
    fn default() -> Self {
        Self { grid_points: 256, extent: 40.0, step_sd: 1.0, dt: 0.1, steps: 100, trials: 10_000 }
    }
}

/// GUE steps on the grid basis, projected on the classical direction. The
/// ensemble scale is calibrated so the projection matches `step_sd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GueProjectionSection {
    pub grid_points: usize,
    pub extent: f64,
    pub step_sd: f64,
    pub dt: f64,
    pub samples: usize,
}

impl Default for GueProjectionSection {
    fn default() -> Self {
        Self { grid_points: 256, extent: 40.0, step_sd: 1.0, dt: 0.1, samples: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsotropySection {
    pub dim: usize,
    pub scale: f64,
    pub dt: f64,
    pub samples: usize,
    /// Dense steps separating the second base state from the first.
    pub base_steps: usize,
    pub walk_trials: usize,
    pub walk_steps: usize,
}

impl Default for IsotropySection {
    fn default() -> Self {
        Self { dim: 128, scale: 1.0, dt: 0.02, samples: 10_000, base_steps: 3, walk_trials: 100, walk_steps: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BornSection {
    pub grid_points: usize,
    pub extent: f64,
    pub trials: usize,
    pub steps: usize,
    pub dt: f64,
    pub scale: f64,
    pub eps: f64,
    /// Packet target centers, in units of `sigma`; each is used with both signs.
    pub offsets: Vec<f64>,
}

impl Default for BornSection {
    fn default() -> Self {
        Self {
            grid_points: 64,
            extent: 18.0,
            trials: 100_000,
            steps: 2,
            dt: 0.06,
            scale: 1.0,
            eps: 0.75,
            offsets: vec![0.5, 0.75, 1.0, 1.25],
        }
    }
}

/// SI inputs of the macroscopic estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroSection {
    pub radius_m: f64,
    pub temperature_k: f64,
    pub viscosity_pa_s: f64,
    pub observation_time_s: f64,
    pub resolution_sigma_m: f64,
    pub wavelength_m: f64,
    pub dimension: u32,
    pub theta_min_rad: Option<f64>,
    pub sweep_min_radius_m: f64,
    pub sweep_max_radius_m: f64,
    pub sweep_points: usize,
}

impl Default for MacroSection {
    fn default() -> Self {
        Self {
            radius_m: 1e-3,
            temperature_k: 293.0,
            viscosity_pa_s: 1.8e-5,
            observation_time_s: 1e-13,
            resolution_sigma_m: 1e-5,
            wavelength_m: 1e-5,
            dimension: 3,
            theta_min_rad: None,
            sweep_min_radius_m: 1e-9,
            sweep_max_radius_m: 1e-1,
            sweep_points: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsSection {
    pub alpha: f64,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self { alpha: 0.01 }
    }
}

pub const PRESETS: [(&str, &str); 3] = [
    ("default", include_str!("../presets/default.toml")),
    ("paper-1mm", include_str!("../presets/paper-1mm.toml")),
    ("quick", include_str!("../presets/quick.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Parses a configuration; the error message carries the line and column.
pub fn parse(text: &str) -> Result<Config, String> {
    toml::from_str(text).map_err(|e| e.to_string())
}

/// 1-based line of `key` inside `[section]` (or at top level for `""`).
pub fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            if key.is_empty() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        if current == section && !key.is_empty() {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

//! Experiment runner for `stategeom-core`: configuration, seeded runs,
//! artifact persistence and manifests.

pub mod config;
pub mod experiments;
pub mod manifest;
pub mod validate;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use config::{Config, Experiment};
use experiments::{Context, Criterion};
use manifest::{inventory, Artifacts, Manifest, SeedDerivation, MANIFEST_FILE, SCHEMA_VERSION};
use validate::{has_errors, validate, Severity};

pub const TOOL: &str = "stategeom";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable naming the directory that default output paths live in.
pub const OUT_ENV: &str = "STATEGEOM_OUT";

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Config = 2,
    Criterion = 3,
    Internal = 4,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] stategeom_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit(&self) -> Exit {
        match self {
            RunError::Config(_) => Exit::Config,
            _ => Exit::Internal,
        }
    }
}

/// Column documentation shipped with each experiment's tables.
pub fn schema(e: Experiment) -> &'static str {
    match e {
        Experiment::VerifyMetric => include_str!("../schemas/verify-metric.toml"),
        Experiment::Decompose => include_str!("../schemas/decompose.toml"),
        Experiment::Ehrenfest => include_str!("../schemas/ehrenfest.toml"),
        Experiment::ClassicalCompare => include_str!("../schemas/classical-compare.toml"),
        Experiment::ConstrainedWalk => include_str!("../schemas/constrained-walk.toml"),
        Experiment::GueWalk => include_str!("../schemas/gue-walk.toml"),
        Experiment::BornCheck => include_str!("../schemas/born-check.toml"),
        Experiment::MacroEstimate => include_str!("../schemas/macro-estimate.toml"),
        Experiment::All => include_str!("../schemas/all.toml"),
    }
}

/// A parsed configuration with its source text, for line-precise diagnostics.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub text: String,
    pub source: String,
}

pub fn load_config(path: Option<&Path>, preset: Option<&str>) -> Result<LoadedConfig, RunError> {
    let (text, source) = match (path, preset) {
        (Some(_), Some(_)) => return Err(RunError::Config("--config and --preset are mutually exclusive".into())),
        (Some(p), None) => {
            let text = fs::read_to_string(p).map_err(|e| RunError::Config(format!("{}: {e}", p.display())))?;
            (text, format!("file {}", p.display()))
        }
        (None, Some(name)) => {
            let text = config::preset(name).ok_or_else(|| {
                let names: Vec<&str> = config::PRESETS.iter().map(|(n, _)| *n).collect();
                RunError::Config(format!("unknown preset `{name}` (available: {})", names.join(", ")))
            })?;
            (text.to_string(), format!("preset {name}"))
        }
        (None, None) => (String::new(), "built-in defaults".to_string()),
    };
    let config = config::parse(&text).map_err(|e| RunError::Config(format!("{source}: {e}")))?;
    Ok(LoadedConfig { config, text, source })
}

/// Output directory when `--out` is absent: the configured one, else
/// `<$STATEGEOM_OUT or runs>/<experiment>-seed<seed>`.
pub fn default_out_dir(cfg: &Config, experiment: Experiment, seed: u64, env_root: Option<PathBuf>) -> PathBuf {
    if let Some(dir) = &cfg.output_dir {
        return dir.clone();
    }
    env_root.unwrap_or_else(|| PathBuf::from("runs")).join(format!("{experiment}-seed{seed}"))
}

#[derive(Debug)]
pub struct RunOutcome {
    pub criteria: Vec<Criterion>,
    pub manifest: Manifest,
    pub out: PathBuf,
    /// Non-fatal diagnostics found before running.
    pub warnings: Vec<String>,
}

impl RunOutcome {
    pub fn failed(&self) -> Vec<&Criterion> {
        self.criteria.iter().filter(|c| !c.passed).collect()
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    schema_version: u32,
    master_seed: u64,
    passed: bool,
    criteria: &'a [Criterion],
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

fn ensure_empty(out: &Path) -> Result<(), RunError> {
    if out.exists() {
        if !out.is_dir() {
            return Err(RunError::Config(format!("output path {} is not a directory", out.display())));
        }
        if fs::read_dir(out)?.next().is_some() {
            return Err(RunError::Config(format!(
                "output directory {} is not empty; choose another with --out",
                out.display()
            )));
        }
    }
    Ok(())
}

/// Validates, runs every part of `experiment`, and writes reports and the manifest.
pub fn execute(experiment: Experiment, loaded: &LoadedConfig, out: &Path) -> Result<RunOutcome, RunError> {
    let cfg = &loaded.config;
    let diagnostics = validate(cfg, Some(&loaded.text), experiment);
    if has_errors(&diagnostics) {
        let lines: Vec<String> =
            diagnostics.iter().filter(|d| d.severity == Severity::Error).map(|d| d.to_string()).collect();
        return Err(RunError::Config(format!("{}:\n{}", loaded.source, lines.join("\n"))));
    }
    let warnings = diagnostics.iter().map(|d| d.to_string()).collect();
    let seed = cfg.seed.expect("validated");
    ensure_empty(out)?;

    let started = unix_ms();
    let mut art = Artifacts::new(out)?;
    let mut criteria = Vec::new();
    let mut streams = Vec::new();
    let mut elapsed = BTreeMap::new();
    let suite = experiment == Experiment::All;
    for part in experiment.parts() {
        if suite {
            art.enter(part.name())?;
        }
        let mut ctx = Context { cfg, seed, art: &mut art, streams: Vec::new(), elapsed: BTreeMap::new() };
        criteria.extend(experiments::run(part, &mut ctx)?);
        streams.extend(ctx.streams.into_iter().map(|mut s| {
            s.label = format!("{part}: {}", s.label);
            s
        }));
        elapsed.extend(ctx.elapsed);
        art.leave();
    }
    if suite {
        let summary = Summary {
            schema_version: SCHEMA_VERSION,
            master_seed: seed,
            passed: criteria.iter().all(|c| c.passed),
            criteria: &criteria,
        };
        art.write_json("summary.json", &summary)?;
        art.write_bytes("schema.toml", schema(Experiment::All).as_bytes())?;
    }

    let mut snapshot = cfg.clone();
    snapshot.seed = Some(seed);
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: TOOL.into(),
        tool_version: VERSION.into(),
        experiment: experiment.name().into(),
        config_source: loaded.source.clone(),
        config: serde_json::to_value(&snapshot).map_err(std::io::Error::other)?,
        seeds: SeedDerivation {
            master_seed: seed,
            rule: "seed = splitmix64(splitmix64(splitmix64(master) ^ stream * 0x9E3779B97F4A7C15) ^ index); \
                   stream ids are FNV-1a of the label, XOR-combined where a label lists two"
                .into(),
            generator: "ChaCha8 seeded from the 64-bit trial seed".into(),
            streams,
        },
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        elapsed_seconds: elapsed,
        files: inventory(art.root(), &art.files())?,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(out.join(MANIFEST_FILE), text)?;
    Ok(RunOutcome { criteria, manifest, out: out.to_path_buf(), warnings })
}

//! Acceptance suite: runs `stategeom run all --seed 42` twice and prints one
//! PASS/FAIL line per criterion. Exits non-zero when any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use serde_json::Value;

const SEED: &str = "42";
const SUITE_LIMIT: Duration = Duration::from_secs(25 * 60);

/// Runtime ceiling in seconds for criteria 1 through 10.
const RUNTIME_LIMITS: [(u64, f64); 10] =
    [(1, 5.0), (2, 10.0), (3, 30.0), (4, 10.0), (5, 30.0), (6, 120.0), (7, 300.0), (8, 300.0), (9, 600.0), (10, 1.0)];

struct Run {
    dir: PathBuf,
    wall: Duration,
    status: Option<i32>,
    stderr: String,
}

fn run_suite(dir: PathBuf) -> Run {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_stategeom"))
        .args(["run", "all", "--seed", SEED, "--out"])
        .arg(&dir)
        .output()
        .expect("stategeom binary runs");
    Run {
        dir,
        wall: start.elapsed(),
        status: out.status.code(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn read_json(path: &Path) -> Option<Value> {
    serde_json::from_str(&fs::read_to_string(path).ok()?).ok()
}

/// Relative paths of every regular file below `root`.
fn files(root: &Path) -> BTreeSet<String> {
    let mut found = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let Ok(entries) = fs::read_dir(&dir) else { continue };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(rel) = path.strip_prefix(root) {
                found.insert(rel.to_string_lossy().replace('\\', "/"));
            }
        }
    }
    found
}

fn describe_check(c: &Value) -> String {
    let name = c["name"].as_str().unwrap_or("?");
    let measured = c["measured"].as_f64().unwrap_or(f64::NAN);
    let rule = c["rule"].as_str().unwrap_or("?");
    match rule {
        "is" => format!("{name}: {}", if c["passed"].as_bool() == Some(true) { "yes" } else { "no" }),
        "in" => format!(
            "{name} = {measured:.4e} in [{:.3e}, {:.3e}]",
            c["lower"].as_f64().unwrap_or(f64::NAN),
            c["upper"].as_f64().unwrap_or(f64::NAN)
        ),
        "<" | "<=" => format!("{name} = {measured:.4e} {rule} {:.3e}", c["upper"].as_f64().unwrap_or(f64::NAN)),
        _ => format!("{name} = {measured:.4e} {rule} {:.3e}", c["lower"].as_f64().unwrap_or(f64::NAN)),
    }
}

fn line(passed: bool, id: u64, title: &str, detail: &str) {
    println!("{} criterion {id:>2} ({title}): {detail}", if passed { "PASS" } else { "FAIL" });
}

/// Compares every artifact except the manifest, which carries wall-clock data.
fn compare_runs(a: &Path, b: &Path) -> Result<usize, String> {
    let fa = files(a);
    let fb = files(b);
    if fa != fb {
        let only_a: Vec<_> = fa.difference(&fb).collect();
        let only_b: Vec<_> = fb.difference(&fa).collect();
        return Err(format!("file sets differ (first only: {only_a:?}, second only: {only_b:?})"));
    }
    let mut compared = 0;
    for rel in fa.iter().filter(|r| r.as_str() != "manifest.json") {
        let x = fs::read(a.join(rel)).map_err(|e| format!("{rel}: {e}"))?;
        let y = fs::read(b.join(rel)).map_err(|e| format!("{rel}: {e}"))?;
        if x != y {
            return Err(format!("{rel} differs"));
        }
        compared += 1;
    }
    if compared == 0 {
        return Err("no artifacts produced".into());
    }
    Ok(compared)
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    println!("running `stategeom run all --seed {SEED}` (first pass)");
    let first = run_suite(tmp.path().join("first"));
    println!("running `stategeom run all --seed {SEED}` (second pass)");
    let second = run_suite(tmp.path().join("second"));

    let summary = read_json(&first.dir.join("summary.json"));
    let manifest = read_json(&first.dir.join("manifest.json"));
    if summary.is_none() || manifest.is_none() {
        eprintln!("first run exited with {:?} and left no summary:\n{}", first.status, first.stderr);
    }
    let criteria = summary.as_ref().and_then(|s| s["criteria"].as_array().cloned()).unwrap_or_default();
    let elapsed = manifest.as_ref().and_then(|m| m["elapsed_seconds"].as_object().cloned()).unwrap_or_default();

    let mut failures = 0;
    for (id, limit) in RUNTIME_LIMITS {
        let Some(c) = criteria.iter().find(|c| c["id"].as_u64() == Some(id)) else {
            line(false, id, "not reported", "criterion missing from summary.json");
            failures += 1;
            continue;
        };
        let title = c["title"].as_str().unwrap_or("?");
        let checks = c["checks"].as_array().cloned().unwrap_or_default();
        let checks_ok = !checks.is_empty() && checks.iter().all(|k| k["passed"].as_bool() == Some(true));
        let seconds = elapsed.get(&format!("criterion {id}")).and_then(Value::as_f64);
        let runtime_ok = seconds.is_some_and(|s| s < limit);
        let mut parts: Vec<String> = checks.iter().map(describe_check).collect();
        parts.push(match seconds {
            Some(s) => format!("runtime {s:.3} s < {limit} s"),
            None => "runtime not recorded".into(),
        });
        let passed = checks_ok && runtime_ok && c["passed"].as_bool() == Some(true);
        line(passed, id, title, &parts.join("; "));
        failures += usize::from(!passed);
    }

    let determinism = compare_runs(&first.dir, &second.dir);
    let suite_ok = first.wall <= SUITE_LIMIT;
    let detail = match &determinism {
        Ok(n) => format!("{n} artifacts byte-identical across two runs"),
        Err(e) => e.clone(),
    };
    let passed = determinism.is_ok() && suite_ok;
    line(
        passed,
        11,
        "determinism",
        &format!("{detail}; suite {:.1} s <= {} s", first.wall.as_secs_f64(), SUITE_LIMIT.as_secs()),
    );
    failures += usize::from(!passed);

    if failures == 0 {
        println!("acceptance: all 11 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} of 11 criteria fail");
        ExitCode::FAILURE
    }
}

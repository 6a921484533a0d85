//! Tests that turn walk ensembles into accept/reject evidence.
//!
//! All aggregates go through sorted pairwise sums so that reports do not
//! depend on the order in which trials finished.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DVector;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::seed::{order_free_sum, stream_id, trial_rng};
use crate::walk::fs_distance_dense;

pub const DEFAULT_ALPHA: f64 = 0.01;
pub const MIN_NORMALITY_SAMPLES: usize = 100;
pub const MIN_ISOTROPY_SAMPLES: usize = 1000;
/// Replicates in the simulated null distribution of the fitted-normal KS statistic.
pub const LILLIEFORS_REPLICATES: usize = 2000;
const HISTOGRAM_BINS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_pass(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Equal-width bins over `[min, max]`; the last bin is closed.
    pub fn new(samples: &[f64], bins: usize) -> Self {
        let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(*x), h.max(*x)));
        if samples.is_empty() || hi <= lo {
            let v = if samples.is_empty() { 0.0 } else { lo };
            return Self { edges: vec![v, v], counts: vec![samples.len() as u64] };
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0u64; bins];
        for x in samples {
            let i = (((x - lo) / width) as usize).min(bins - 1);
            counts[i] += 1;
        }
        Self { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub first: usize,
    pub second: usize,
    pub ks_statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub test: String,
    pub sample_count: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Largest KS distance among the comparisons made.
    pub ks_statistic: f64,
    /// Smallest p-value among the comparisons made.
    pub p_value: f64,
    pub alpha: f64,
    /// Per-comparison rejection level after Bonferroni correction.
    pub threshold: f64,
    pub histogram: Histogram,
    pub verdict: Verdict,
    pub degenerate: bool,
    pub comparisons: Vec<PairComparison>,
}

/// Sample moments: mean, unbiased variance, skewness, excess kurtosis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

pub fn moments(samples: &[f64]) -> Moments {
    let n = samples.len() as f64;
    let mean = order_free_sum(samples) / n;
    let centered: Vec<f64> = samples.iter().map(|x| x - mean).collect();
    let power_mean = |k: i32| order_free_sum(&centered.iter().map(|c| c.powi(k)).collect::<Vec<_>>()) / n;
    let m2 = power_mean(2);
    let (skewness, excess_kurtosis) =
        if m2 > 0.0 { (power_mean(3) / m2.powf(1.5), power_mean(4) / (m2 * m2) - 3.0) } else { (0.0, 0.0) };
    Moments { mean, variance: if n > 1.0 { m2 * n / (n - 1.0) } else { 0.0 }, skewness, excess_kurtosis }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Kolmogorov survival function `Q(l) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 l^2)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn sorted(samples: &[f64]) -> Vec<f64> {
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn ks_distance_sorted(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0f64, |d, (i, x)| {
        let f = cdf(*x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// One-sample KS statistic and asymptotic p-value (Stephens' finite-n
/// correction) against a fully specified CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let d = ks_distance_sorted(&sorted(samples), cdf);
    let en = (samples.len() as f64).sqrt();
    (d, kolmogorov_q((en + 0.12 + 0.11 / en) * d))
}

/// Two-sample KS statistic and asymptotic p-value.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (xs, ys) = (sorted(x), sorted(y));
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    (d, kolmogorov_q((en + 0.12 + 0.11 / en) * d))
}

/// KS distance between the samples and a normal with their own mean and
/// unbiased variance.
fn fitted_normal_distance(samples: &[f64]) -> f64 {
    let m = moments(samples);
    let sd = m.variance.sqrt();
    ks_distance_sorted(&sorted(samples), |x| normal_cdf((x - m.mean) / sd))
}

fn lilliefors_null(n: usize) -> Arc<Vec<f64>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().unwrap().get(&n) {
        return t.clone();
    }
    let stream = stream_id("lilliefors-null") ^ n as u64;
    let mut table: Vec<f64> = (0..LILLIEFORS_REPLICATES as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(0, stream, i);
            let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            fitted_normal_distance(&x)
        })
        .collect();
    table.sort_by(f64::total_cmp);
    let table = Arc::new(table);
    cache.lock().unwrap().insert(n, table.clone());
    table
}

/// Monte Carlo p-value `(1 + #{null >= d}) / (M + 1)` for the fitted-normal KS
/// statistic `d` at sample size `n`. Estimating the mean and variance makes
/// the plain Kolmogorov p-value far too conservative, so the null is simulated.
pub fn lilliefors_p_value(d: f64, n: usize) -> f64 {
    let null = lilliefors_null(n);
    let below = null.partition_point(|v| *v < d);
    (1 + null.len() - below) as f64 / (null.len() + 1) as f64
}

/// KS test of the samples against `Normal(sample mean, sample variance)`.
pub fn normality_test(samples: &[f64], alpha: f64) -> Result<StatsReport> {
    check_alpha(alpha)?;
    if samples.len() < MIN_NORMALITY_SAMPLES {
        return Err(Error::TooFewSamples { need: MIN_NORMALITY_SAMPLES, got: samples.len() });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("samples must be finite".into()));
    }
    let m = moments(samples);
    let histogram = Histogram::new(samples, HISTOGRAM_BINS);
    let degenerate = !(m.variance > 0.0);
    let (ks_statistic, p_value) = if degenerate {
        (1.0, 0.0)
    } else {
        let d = fitted_normal_distance(samples);
        (d, lilliefors_p_value(d, samples.len()))
    };
    Ok(StatsReport {
        test: "normality".into(),
        sample_count: samples.len(),
        mean: m.mean,
        variance: m.variance,
        skewness: m.skewness,
        excess_kurtosis: m.excess_kurtosis,
        ks_statistic,
        p_value,
        alpha,
        threshold: alpha,
        histogram,
        verdict: Verdict::from_pass(!degenerate && p_value > alpha),
        degenerate,
        comparisons: Vec::new(),
    })
}

/// Pairwise two-sample KS across sample sets; passes when every pair has
/// `p > alpha / n_pairs`.
pub fn isotropy_test(sets: &[Vec<f64>], alpha: f64) -> Result<StatsReport> {
    check_alpha(alpha)?;
    if sets.len() < 2 {
        return Err(Error::TooFewSamples { need: 2, got: sets.len() });
    }
    if let Some(small) = sets.iter().find(|s| s.len() < MIN_ISOTROPY_SAMPLES) {
        return Err(Error::TooFewSamples { need: MIN_ISOTROPY_SAMPLES, got: small.len() });
    }
    let pairs: Vec<(usize, usize)> = (0..sets.len()).flat_map(|i| ((i + 1)..sets.len()).map(move |j| (i, j))).collect();
    let comparisons: Vec<PairComparison> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (d, p) = ks_two_sample(&sets[i], &sets[j]);
            PairComparison { first: i, second: j, ks_statistic: d, p_value: p }
        })
        .collect();
    let threshold = alpha / pairs.len() as f64;
    let pooled: Vec<f64> = sets.iter().flatten().copied().collect();
    let m = moments(&pooled);
    let degenerate = !(m.variance > 0.0);
    let ks_statistic = comparisons.iter().map(|c| c.ks_statistic).fold(0.0, f64::max);
    let p_value = comparisons.iter().map(|c| c.p_value).fold(1.0, f64::min);
    Ok(StatsReport {
        test: "isotropy".into(),
        sample_count: pooled.len(),
        mean: m.mean,
        variance: m.variance,
        skewness: m.skewness,
        excess_kurtosis: m.excess_kurtosis,
        ks_statistic,
        p_value,
        alpha,
        threshold,
        histogram: Histogram::new(&pooled, HISTOGRAM_BINS),
        verdict: Verdict::from_pass(!degenerate && p_value > threshold),
        degenerate,
        comparisons,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// A state whose Fubini-Study ball is counted in a Born check.
#[derive(Debug, Clone, PartialEq)]
pub struct BornTarget {
    pub label: String,
    pub state: DVector<Complex64>,
    /// `exp(-(a-b)^2 / (4 sigma^2))` for packet targets.
    pub gaussian_closed_form: Option<f64>,
    /// Targets sharing a group are expected to be hit equally often.
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BornRow {
    pub label: String,
    pub group: Option<String>,
    pub fs_distance: f64,
    pub born_probability: f64,
    pub gaussian_closed_form: Option<f64>,
    pub hits: u64,
    pub trials: u64,
    pub frequency: f64,
    pub std_error: f64,
    pub zero_hits: bool,
}

/// Fraction of final states inside the FS ball of radius `eps` around each
/// target, next to the Born value `|(psi, phi_0)|^2`.
pub fn born_rule_curve(
    final_states: &[DVector<Complex64>],
    phi0: &DVector<Complex64>,
    targets: &[BornTarget],
    eps: f64,
) -> Result<Vec<BornRow>> {
    if final_states.is_empty() {
        return Err(Error::TooFewSamples { need: 1, got: 0 });
    }
    if !(eps > 0.0 && eps < std::f64::consts::FRAC_PI_2) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, pi/2), got {eps}")));
    }
    let cos_eps = eps.cos();
    let n = final_states.len() as u64;
    targets
        .iter()
        .map(|t| {
            if t.state.len() != phi0.len() {
                return Err(Error::DimensionMismatch { expected: phi0.len(), got: t.state.len() });
            }
            if (t.state.norm() - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParameter(format!("target {} is not unit-norm", t.label)));
            }
            let overlap = t.state.dotc(phi0).norm();
            let hits = final_states.par_iter().filter(|phi| t.state.dotc(phi).norm() > cos_eps).count() as u64;
            let frequency = hits as f64 / n as f64;
            Ok(BornRow {
                label: t.label.clone(),
                group: t.group.clone(),
                fs_distance: fs_distance_dense(phi0, &t.state),
                born_probability: overlap * overlap,
                gaussian_closed_form: t.gaussian_closed_form,
                hits,
                trials: n,
                frequency,
                std_error: (frequency * (1.0 - frequency) / n as f64).sqrt(),
                zero_hits: hits == 0,
            })
        })
        .collect()
}

/// `|f_1 - f_2|` in units of the pooled standard error of two proportions.
pub fn pooled_z(a: &BornRow, b: &BornRow) -> f64 {
    let pooled = (a.hits + b.hits) as f64 / (a.trials + b.trials) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / a.trials as f64 + 1.0 / b.trials as f64)).sqrt();
    let diff = (a.frequency - b.frequency).abs();
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionFit {
    pub d_fit: f64,
    pub slope: f64,
    /// Uncentered coefficient of determination of the through-origin fit.
    pub r_squared: f64,
    pub times: Vec<f64>,
    pub variances: Vec<f64>,
    pub monotone: bool,
}

/// Least-squares `Var(x(t)) = 2 D t` through the origin; `samples[k]` holds
/// the displacements observed at `times[k]`.
pub fn diffusion_fit(times: &[f64], samples: &[Vec<f64>]) -> Result<DiffusionFit> {
    if times.len() < 3 {
        return Err(Error::TooFewSamples { need: 3, got: times.len() });
    }
    if times.len() != samples.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: samples.len() });
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.iter().all(|t| *t == 0.0) {
        return Err(Error::InvalidParameter("times must be non-negative and not all zero".into()));
    }
    let variances =
        samples
            .iter()
            .map(|s| {
                if s.len() < 2 {
                    Err(Error::TooFewSamples { need: 2, got: s.len() })
                } else {
                    Ok(moments(s).variance)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
    let tv: Vec<f64> = times.iter().zip(&variances).map(|(t, v)| t * v).collect();
    let tt: Vec<f64> = times.iter().map(|t| t * t).collect();
    let slope = order_free_sum(&tv) / order_free_sum(&tt);
    let ss_res: Vec<f64> = times.iter().zip(&variances).map(|(t, v)| (v - slope * t).powi(2)).collect();
    let ss_tot: Vec<f64> = variances.iter().map(|v| v * v).collect();
    let (res, tot) = (order_free_sum(&ss_res), order_free_sum(&ss_tot));
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let monotone = order.windows(2).all(|w| variances[w[1]] >= variances[w[0]]);
    Ok(DiffusionFit {
        d_fit: slope / 2.0,
        slope,
        r_squared: if tot > 0.0 { 1.0 - res / tot } else { 1.0 },
        times: times.to_vec(),
        variances,
        monotone,
    })
}

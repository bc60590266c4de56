//! Prediction of per-token nondeterministic variation from a single run.
//!
//! Logit-level variation is roughly uniform across tokens, so a single
//! scalar noise scale `s` captures it. First-order (delta-method)
//! propagation through the softmax Jacobian under i.i.d. logit noise then
//! predicts the per-token probability standard deviation from one run's
//! probabilities alone:
//!
//! ```text
//! sigma_i = s * p_i * sqrt((1 - p_i)^2 + sum_{j != i} p_j^2) / T
//! ```
//!
//! which is `s/T` times the Euclidean norm of the i-th Jacobian row. Ranges
//! follow by scaling with the expected range of `N` standard normal draws.
//! The first-order model is accurate for small `s`; validation against a
//! full ensemble is always reported alongside predictions.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::metrics::{sample_std, RunEnsemble, VariationStats};
use crate::seeds::{derive_seed, StreamTag};
use crate::softmax::{sensitivity_regime, ProbabilityVector, Regime, RegimeThresholds};

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error(
        "no logits present in the calibration ensembles; supply the noise scale s directly \
         (it cannot be measured from probabilities alone)"
    )]
    MissingLogits,
    #[error("noise scale must be >= 0, got {0}")]
    NegativeNoise(f64),
    #[error("range prediction needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("predicted and observed token sets are disjoint")]
    TokenSetMismatch,
    #[error("no ensembles supplied for calibration")]
    NoEnsembles,
}

/// Where a noise scale came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseSource {
    CalibratedFromEnsemble,
    UserSupplied,
}

/// Per-logit standard deviation of the order-induced perturbation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseScale {
    s: f64,
    source: NoiseSource,
}

impl NoiseScale {
    pub fn user_supplied(s: f64) -> Result<Self, EstimatorError> {
        if s < 0.0 || s.is_nan() {
            return Err(EstimatorError::NegativeNoise(s));
        }
        Ok(NoiseScale {
            s,
            source: NoiseSource::UserSupplied,
        })
    }

    pub fn value(&self) -> f64 {
        self.s
    }

    pub fn source(&self) -> NoiseSource {
        self.source
    }
}

/// Median over all (step, token) cells of the per-cell sample standard
/// deviation of logits across runs. The median is robust to outlier cells.
///
/// Only columns with complete logit data enter (a column imputed in any run
/// has no trustworthy spread). Errors if no such column exists.
pub fn calibrate_noise(ensembles: &[RunEnsemble]) -> Result<NoiseScale, EstimatorError> {
    if ensembles.is_empty() {
        return Err(EstimatorError::NoEnsembles);
    }
    let mut cell_stds = Vec::new();
    for e in ensembles {
        if !e.has_logits() {
            continue;
        }
        for c in 0..e.n_tokens() {
            let Some(column) = e.logit_column(c) else {
                continue;
            };
            if column.iter().any(|z| z.is_nan()) {
                continue;
            }
            cell_stds.push(sample_std(&column).expect("ensemble has >= 2 runs"));
        }
    }
    if cell_stds.is_empty() {
        return Err(EstimatorError::MissingLogits);
    }
    cell_stds.sort_by(|a, b| a.total_cmp(b));
    Ok(NoiseScale {
        s: cell_stds[cell_stds.len() / 2],
        source: NoiseSource::CalibratedFromEnsemble,
    })
}

/// First-order propagation of i.i.d. logit noise through the softmax:
/// per-token predicted standard deviation of the probability.
pub fn predict_std(p: &ProbabilityVector, s: &NoiseScale) -> Vec<f64> {
    let probs = p.probs();
    let t = p.temperature();
    let sum_sq: f64 = probs.iter().map(|&x| x * x).sum();
    probs
        .iter()
        .map(|&pi| {
            let rest = (sum_sq - pi * pi).max(0.0);
            s.value() * pi * ((1.0 - pi) * (1.0 - pi) + rest).sqrt() / t
        })
        .collect()
}

/// Expected range of `n` independent standard-normal draws, `d_n`.
///
/// `d_2 = 2/sqrt(pi)` is analytic; other orders are estimated once by a
/// seeded Monte Carlo (10^6 samples) and cached, so every process computes
/// identical values.
pub struct RangeFactorTable {
    cache: Mutex<HashMap<usize, f64>>,
    mc_samples: usize,
}

/// Expected range of two standard normals, `2 / sqrt(pi)`.
pub const D2_ANALYTIC: f64 = std::f64::consts::FRAC_2_SQRT_PI;

impl Default for RangeFactorTable {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeFactorTable {
    pub fn new() -> Self {
        RangeFactorTable {
            cache: Mutex::new(HashMap::from([(2, D2_ANALYTIC)])),
            mc_samples: 1_000_000,
        }
    }

    /// Reduced sample count for tests that only need coarse factors.
    pub fn with_samples(mc_samples: usize) -> Self {
        RangeFactorTable {
            cache: Mutex::new(HashMap::from([(2, D2_ANALYTIC)])),
            mc_samples,
        }
    }

    pub fn factor(&self, n: usize) -> Result<f64, EstimatorError> {
        if n < 2 {
            return Err(EstimatorError::TooFewRuns(n));
        }
        if let Some(&d) = self.cache.lock().unwrap().get(&n) {
            return Ok(d);
        }
        let d = expected_range_monte_carlo(n, self.mc_samples);
        self.cache.lock().unwrap().insert(n, d);
        Ok(d)
    }
}

fn expected_range_monte_carlo(n: usize, samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(0, StreamTag::RangeFactor, &[n as u64]));
    let mut total = 0.0f64;
    for _ in 0..samples {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for _ in 0..n {
            let x: f64 = rng.sample(StandardNormal);
            min = min.min(x);
            max = max.max(x);
        }
        total += max - min;
    }
    total / samples as f64
}

/// Predicted per-token range over `n_runs` runs: `d_{n_runs} * sigma_i`.
pub fn predict_range(
    p: &ProbabilityVector,
    s: &NoiseScale,
    n_runs: usize,
    table: &RangeFactorTable,
) -> Result<Vec<f64>, EstimatorError> {
    let d = table.factor(n_runs)?;
    Ok(predict_std(p, s).into_iter().map(|sig| d * sig).collect())
}

/// Per-step predicted variation, matched to observations by token id.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictedVariation {
    pub step_index: usize,
    pub token_ids: Vec<u32>,
    pub sigma: Vec<f64>,
    pub range: Vec<f64>,
}

/// Relative-error summary for one sensitivity regime.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RegimeErrors {
    pub count: usize,
    pub median_rel_err_sigma: f64,
    pub p90_rel_err_sigma: f64,
    pub median_rel_err_range: f64,
    pub p90_rel_err_range: f64,
}

/// Validation of predictions against an observed ensemble, reported per
/// sensitivity regime. The mid regime is the meaningful one: saturated
/// tokens have near-zero denominators, so their relative errors are
/// reported separately rather than polluting a single summary.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub matched: usize,
    pub suppressed_low: RegimeErrors,
    pub amplified_mid: RegimeErrors,
    pub suppressed_high: RegimeErrors,
}

impl ErrorReport {
    pub fn regime(&self, r: Regime) -> &RegimeErrors {
        match r {
            Regime::SuppressedLow => &self.suppressed_low,
            Regime::AmplifiedMid => &self.amplified_mid,
            Regime::SuppressedHigh => &self.suppressed_high,
        }
    }
}

/// Compares predictions with observed per-token statistics, matching on
/// `(step_index, token_id)`. Imputed observed columns are skipped. Relative
/// error is `|pred - obs| / obs` with `0/0` counted as zero.
pub fn validate_estimate(
    predicted: &[PredictedVariation],
    observed: &[VariationStats],
    thresholds: RegimeThresholds,
) -> Result<ErrorReport, EstimatorError> {
    let mut by_regime: HashMap<Regime, (Vec<f64>, Vec<f64>)> = HashMap::new();
    let mut matched = 0usize;
    for obs in observed {
        let Some(pred) = predicted.iter().find(|p| p.step_index == obs.step_index) else {
            continue;
        };
        for (c, &token) in obs.token_ids.iter().enumerate() {
            if obs.imputed[c] {
                continue;
            }
            let Some(pc) = pred.token_ids.iter().position(|&t| t == token) else {
                continue;
            };
            matched += 1;
            let regime = sensitivity_regime(obs.mean_prob[c].clamp(0.0, 1.0), thresholds)
                .expect("mean probability is in range");
            let entry = by_regime.entry(regime).or_default();
            entry.0.push(relative_error(pred.sigma[pc], obs.sigma[c]));
            entry.1.push(relative_error(pred.range[pc], obs.range[c]));
        }
    }
    if matched == 0 {
        return Err(EstimatorError::TokenSetMismatch);
    }
    let summarize = |regime: Regime| -> RegimeErrors {
        match by_regime.get(&regime) {
            None => RegimeErrors::default(),
            Some((sig, rng)) => {
                let mut sig = sig.clone();
                let mut rng = rng.clone();
                sig.sort_by(|a, b| a.total_cmp(b));
                rng.sort_by(|a, b| a.total_cmp(b));
                RegimeErrors {
                    count: sig.len(),
                    median_rel_err_sigma: quantile_sorted(&sig, 0.5),
                    p90_rel_err_sigma: quantile_sorted(&sig, 0.9),
                    median_rel_err_range: quantile_sorted(&rng, 0.5),
                    p90_rel_err_range: quantile_sorted(&rng, 0.9),
                }
            }
        }
    };
    Ok(ErrorReport {
        matched,
        suppressed_low: summarize(Regime::SuppressedLow),
        amplified_mid: summarize(Regime::AmplifiedMid),
        suppressed_high: summarize(Regime::SuppressedHigh),
    })
}

fn relative_error(pred: f64, obs: f64) -> f64 {
    if obs == 0.0 {
        if pred == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (pred - obs).abs() / obs
    }
}

/// Nearest-rank quantile of an ascending-sorted slice.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

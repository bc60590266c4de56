//! Temperature softmax, its Jacobian, and sensitivity-regime classification.
//!
//! The softmax saturates near 0 and 1 and amplifies in the middle, which is
//! why order-induced logit noise shows up in token probabilities only for
//! tokens with competing candidates. The Jacobian `J_ij = p_i (δ_ij - p_j) / T`
//! is the quantitative form of that statement and drives the single-run
//! variation estimator.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SoftmaxError {
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("logits must be finite (entry {index} is {value})")]
    NonFiniteLogit { index: usize, value: f64 },
    #[error("a logit vector needs at least 2 entries, got {0}")]
    TooFewTokens(usize),
    #[error("probability {value} at entry {index} is outside [0, 1]")]
    ProbabilityOutOfRange { index: usize, value: f64 },
    #[error("probabilities sum to {sum}, expected 1 within 1e-12")]
    NotNormalized { sum: f64 },
    #[error("top-k probabilities sum to {sum}, exceeding 1 + 1e-6")]
    MassExceedsOne { sum: f64 },
}

/// One run's pre-softmax scores over the vocabulary at one generation step.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitVector {
    pub z: Vec<f64>,
    pub step_index: usize,
    pub run_id: u64,
}

impl LogitVector {
    pub fn new(z: Vec<f64>, step_index: usize, run_id: u64) -> Result<Self, SoftmaxError> {
        if z.len() < 2 {
            return Err(SoftmaxError::TooFewTokens(z.len()));
        }
        if let Some((index, &value)) = z.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(SoftmaxError::NonFiniteLogit { index, value });
        }
        Ok(LogitVector {
            z,
            step_index,
            run_id,
        })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Index of the largest logit, first occurrence on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.z.iter().enumerate() {
            if v > self.z[best] {
                best = i;
            }
        }
        best
    }
}

/// A probability distribution (or top-k slice of one) with the temperature it
/// was produced at.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVector {
    p: Vec<f64>,
    temperature: f64,
    complete: bool,
}

impl ProbabilityVector {
    /// A full distribution: entries in [0, 1] summing to 1 within 1e-12.
    pub fn new(p: Vec<f64>, temperature: f64) -> Result<Self, SoftmaxError> {
        if temperature <= 0.0 || !temperature.is_finite() {
            return Err(SoftmaxError::NonPositiveTemperature(temperature));
        }
        check_range(&p)?;
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(SoftmaxError::NotNormalized { sum });
        }
        Ok(ProbabilityVector {
            p,
            temperature,
            complete: true,
        })
    }

    /// A top-k slice: entries in [0, 1] with total mass at most 1 + 1e-6.
    pub fn from_topk(p: Vec<f64>, temperature: f64) -> Result<Self, SoftmaxError> {
        if temperature <= 0.0 || !temperature.is_finite() {
            return Err(SoftmaxError::NonPositiveTemperature(temperature));
        }
        check_range(&p)?;
        let sum: f64 = p.iter().sum();
        if sum > 1.0 + 1e-6 {
            return Err(SoftmaxError::MassExceedsOne { sum });
        }
        Ok(ProbabilityVector {
            p,
            temperature,
            complete: false,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Whether this covers the full vocabulary (sums to 1) or a top-k slice.
    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.p.iter().enumerate() {
            if v > self.p[best] {
                best = i;
            }
        }
        best
    }
}

fn check_range(p: &[f64]) -> Result<(), SoftmaxError> {
    for (index, &value) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) || value.is_nan() {
            return Err(SoftmaxError::ProbabilityOutOfRange { index, value });
        }
    }
    Ok(())
}

/// `p_i = exp(z_i / T) / Σ_j exp(z_j / T)`, computed with max-subtraction.
pub fn softmax_t(logits: &LogitVector, temperature: f64) -> Result<ProbabilityVector, SoftmaxError> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(SoftmaxError::NonPositiveTemperature(temperature));
    }
    if let Some((index, &value)) = logits.z.iter().enumerate().find(|(_, v)| v.is_nan()) {
        return Err(SoftmaxError::NonFiniteLogit { index, value });
    }
    let max = logits.z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut p: Vec<f64> = logits
        .z
        .iter()
        .map(|&z| ((z - max) / temperature).exp())
        .collect();
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    Ok(ProbabilityVector {
        p,
        temperature,
        complete: true,
    })
}

/// Probability of the first token in a two-token vocabulary: the sigmoid of
/// the logit difference, `1 / (1 + exp(-(z1 - z2)))`. Identical to the first
/// component of `softmax_t([z1, z2], 1)`.
pub fn two_token_prob(z1: f64, z2: f64) -> f64 {
    1.0 / (1.0 + (-(z1 - z2)).exp())
}

/// Dense V x V softmax Jacobian, `J_ij = p_i (δ_ij - p_j) / T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian {
    data: Vec<f64>,
    n: usize,
}

impl Jacobian {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }
}

/// Derivative of the temperature softmax at `p`: rows sum to zero, the matrix
/// is symmetric, and the diagonal `p_i (1 - p_i) / T` peaks at `p_i = 0.5`.
pub fn softmax_jacobian(p: &ProbabilityVector) -> Jacobian {
    let n = p.len();
    let t = p.temperature();
    let probs = p.probs();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            data[i * n + j] = probs[i] * (delta - probs[j]) / t;
        }
    }
    Jacobian { data, n }
}

/// Sensitivity regime of a token probability under logit perturbations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    /// Near zero: competing logits dominate, perturbations are suppressed.
    SuppressedLow,
    /// Mid range: the softmax amplifies logit noise.
    AmplifiedMid,
    /// Near one: the winning logit dominates, perturbations are suppressed.
    SuppressedHigh,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::SuppressedLow => "suppressed_low",
            Regime::AmplifiedMid => "amplified_mid",
            Regime::SuppressedHigh => "suppressed_high",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Boundaries of the amplified mid range. The narrow variant reflects the
/// alternative 0.2/0.8 reading of where variations become significant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegimeThresholds {
    pub low: f64,
    pub high: f64,
}

impl RegimeThresholds {
    /// Default boundaries: 0.1 and 0.9.
    pub const DEFAULT: RegimeThresholds = RegimeThresholds { low: 0.1, high: 0.9 };
    /// Narrower mid range: 0.2 and 0.8.
    pub const NARROW: RegimeThresholds = RegimeThresholds { low: 0.2, high: 0.8 };
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Classifies a probability by sensitivity to logit perturbations: below
/// `low` -> suppressed low, above `high` -> suppressed high, else amplified.
pub fn sensitivity_regime(
    p: f64,
    thresholds: RegimeThresholds,
) -> Result<Regime, SoftmaxError> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(SoftmaxError::ProbabilityOutOfRange { index: 0, value: p });
    }
    Ok(if p < thresholds.low {
        Regime::SuppressedLow
    } else if p > thresholds.high {
        Regime::SuppressedHigh
    } else {
        Regime::AmplifiedMid
    })
}

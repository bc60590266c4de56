//! Variation metrics over run ensembles: per-token standard deviation and
//! range, standard-error sizing, and probability-binned profiles.
//!
//! The standard deviation uses the population `1/N` divisor. Per-token
//! columns are canonicalized by sorting before evaluation, so the statistics
//! are bitwise invariant under any permutation of the runs.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("empty input")]
    EmptyInput,
    #[error("standard deviation must be non-negative, got {0}")]
    NegativeSigma(f64),
    #[error("bin width must be in (0, 1], got {0}")]
    InvalidBinWidth(f64),
    #[error("histogram edges must be strictly increasing")]
    NonMonotoneEdges,
    #[error("probability {value} at run {run}, column {column} is outside [0, 1]")]
    ProbabilityOutOfRange { run: usize, column: usize, value: f64 },
    #[error("ensemble needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// The N x V matrix of token probabilities at one generation step across
/// runs, with optional logits. Every row was generated from the identical
/// preceding context (guaranteed upstream by divergence truncation).
///
/// Columns marked imputed carry probabilities that were filled in for runs
/// whose top-k did not include the token; those columns are excluded from
/// aggregation by default.
#[derive(Clone, Debug, PartialEq)]
pub struct RunEnsemble {
    step_index: usize,
    token_ids: Vec<u32>,
    n_runs: usize,
    probs: Vec<f64>,          // row-major N x V
    logits: Option<Vec<f64>>, // row-major N x V; NaN where unavailable
    imputed: Vec<bool>,       // per column
}

impl RunEnsemble {
    pub fn new(
        step_index: usize,
        token_ids: Vec<u32>,
        probs: Vec<Vec<f64>>,
        logits: Option<Vec<Vec<f64>>>,
    ) -> Result<Self, MetricsError> {
        let n_runs = probs.len();
        if n_runs < 2 {
            return Err(MetricsError::TooFewRuns(n_runs));
        }
        let v = token_ids.len();
        let mut flat = Vec::with_capacity(n_runs * v);
        for (run, row) in probs.iter().enumerate() {
            if row.len() != v {
                return Err(MetricsError::DimensionMismatch(format!(
                    "run {run} has {} probabilities for {v} tokens",
                    row.len()
                )));
            }
            for (column, &value) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) || value.is_nan() {
                    return Err(MetricsError::ProbabilityOutOfRange { run, column, value });
                }
                flat.push(value);
            }
        }
        let logits = match logits {
            None => None,
            Some(rows) => {
                if rows.len() != n_runs {
                    return Err(MetricsError::DimensionMismatch(format!(
                        "{} logit rows for {n_runs} runs",
                        rows.len()
                    )));
                }
                let mut lf = Vec::with_capacity(n_runs * v);
                for row in &rows {
                    if row.len() != v {
                        return Err(MetricsError::DimensionMismatch(format!(
                            "logit row has {} entries for {v} tokens",
                            row.len()
                        )));
                    }
                    lf.extend_from_slice(row);
                }
                Some(lf)
            }
        };
        Ok(RunEnsemble {
            step_index,
            token_ids,
            n_runs,
            probs: flat,
            logits,
            imputed: vec![false; v],
        })
    }

    pub fn with_imputed(mut self, imputed: Vec<bool>) -> Result<Self, MetricsError> {
        if imputed.len() != self.token_ids.len() {
            return Err(MetricsError::DimensionMismatch(format!(
                "{} imputation flags for {} columns",
                imputed.len(),
                self.token_ids.len()
            )));
        }
        self.imputed = imputed;
        Ok(self)
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.token_ids
    }

    pub fn n_runs(&self) -> usize {
        self.n_runs
    }

    pub fn n_tokens(&self) -> usize {
        self.token_ids.len()
    }

    pub fn has_logits(&self) -> bool {
        self.logits.is_some()
    }

    pub fn imputed(&self) -> &[bool] {
        &self.imputed
    }

    pub fn prob(&self, run: usize, column: usize) -> f64 {
        self.probs[run * self.n_tokens() + column]
    }

    pub fn logit(&self, run: usize, column: usize) -> Option<f64> {
        self.logits.as_ref().map(|l| l[run * self.n_tokens() + column])
    }

    pub fn prob_column(&self, column: usize) -> Vec<f64> {
        (0..self.n_runs).map(|r| self.prob(r, column)).collect()
    }

    pub fn logit_column(&self, column: usize) -> Option<Vec<f64>> {
        self.logits
            .as_ref()
            .map(|l| (0..self.n_runs).map(|r| l[r * self.n_tokens() + column]).collect())
    }

    /// Per-run argmax over the probability row (first index on ties).
    pub fn selected_tokens(&self) -> Vec<u32> {
        (0..self.n_runs)
            .map(|r| {
                let row = &self.probs[r * self.n_tokens()..(r + 1) * self.n_tokens()];
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                self.token_ids[best]
            })
            .collect()
    }
}

/// Per-token variation summary for one step's ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationStats {
    pub step_index: usize,
    pub token_ids: Vec<u32>,
    pub sigma: Vec<f64>,
    pub range: Vec<f64>,
    pub mean_prob: Vec<f64>,
    pub logit_sigma: Option<Vec<f64>>,
    pub logit_range: Option<Vec<f64>>,
    pub imputed: Vec<bool>,
    pub n_runs: usize,
}

/// Population standard deviation with the `1/N` divisor:
/// `sqrt((1/N) Σ (x_i - mean)^2)`, evaluated with a two-pass scheme.
///
/// The exact value never exceeds half the sample range (Popoviciu's
/// inequality, with equality for two-point equal-mass samples), but the
/// two-pass evaluation can overshoot that bound by an ulp exactly at the
/// saturating cases; the result is capped so the bound holds as stated.
/// A constant input yields exactly zero.
pub fn std_dev(samples: &[f64]) -> Result<f64, MetricsError> {
    let n = samples.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    let (min, max) = min_max(samples);
    if min == max {
        return Ok(0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>();
    Ok((ss / n as f64).sqrt().min((max - min) / 2.0))
}

/// Sample standard deviation (`1/(N-1)` divisor), used where an unbiased
/// estimator is called for (noise calibration).
pub fn sample_std(samples: &[f64]) -> Result<f64, MetricsError> {
    let n = samples.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    let (min, max) = min_max(samples);
    if min == max {
        return Ok(0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let ss = samples.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Max minus min over the runs.
pub fn prob_range(samples: &[f64]) -> Result<f64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let (min, max) = min_max(samples);
    Ok(max - min)
}

fn min_max(samples: &[f64]) -> (f64, f64) {
    let mut min = samples[0];
    let mut max = samples[0];
    for &x in &samples[1..] {
        if x < min {
            min = x;
        }
        if x > max {
            max = x;
        }
    }
    (min, max)
}

/// Standard error of the estimated standard deviation, `σ / sqrt(2(N-1))`.
pub fn se_std(sigma: f64, n: usize) -> Result<f64, MetricsError> {
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    if sigma < 0.0 || sigma.is_nan() {
        return Err(MetricsError::NegativeSigma(sigma));
    }
    Ok(sigma / (2.0 * (n as f64 - 1.0)).sqrt())
}

/// Applies `std_dev`, `prob_range`, and the mean to every token column.
///
/// Columns are sorted into a canonical order before evaluation, so the result
/// is bitwise unchanged under any permutation of the ensemble rows.
pub fn ensemble_stats(e: &RunEnsemble) -> Result<VariationStats, MetricsError> {
    let v = e.n_tokens();
    let mut sigma = Vec::with_capacity(v);
    let mut range = Vec::with_capacity(v);
    let mut mean_prob = Vec::with_capacity(v);
    for c in 0..v {
        let mut column = e.prob_column(c);
        column.sort_by(|a, b| a.total_cmp(b));
        sigma.push(std_dev(&column)?);
        range.push(prob_range(&column)?);
        mean_prob.push(column.iter().sum::<f64>() / column.len() as f64);
    }
    let (logit_sigma, logit_range) = if e.has_logits() {
        let mut ls = Vec::with_capacity(v);
        let mut lr = Vec::with_capacity(v);
        for c in 0..v {
            let mut column = e.logit_column(c).unwrap();
            if column.iter().any(|x| x.is_nan()) {
                // Incomplete logit data (imputed cells): no logit statistics
                // for this column.
                ls.push(f64::NAN);
                lr.push(f64::NAN);
                continue;
            }
            column.sort_by(|a, b| a.total_cmp(b));
            ls.push(std_dev(&column)?);
            lr.push(prob_range(&column)?);
        }
        (Some(ls), Some(lr))
    } else {
        (None, None)
    };
    Ok(VariationStats {
        step_index: e.step_index(),
        token_ids: e.token_ids().to_vec(),
        sigma,
        range,
        mean_prob,
        logit_sigma,
        logit_range,
        imputed: e.imputed().to_vec(),
        n_runs: e.n_runs(),
    })
}

/// Profile of variation metrics as a function of the token probability.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedProfile {
    /// Strictly increasing edges spanning [0, 1]; bin `k` is
    /// `[edges[k], edges[k+1])`, with the final bin closed on the right.
    pub bin_edges: Vec<f64>,
    pub count: Vec<usize>,
    /// Per-bin arithmetic means; `None` for empty bins.
    pub mean_range: Vec<Option<f64>>,
    pub mean_sigma: Vec<Option<f64>>,
}

impl BinnedProfile {
    pub fn n_bins(&self) -> usize {
        self.count.len()
    }

    /// Index of the bin containing `x` under the left-closed convention.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        bin_index(&self.bin_edges, x)
    }
}

/// Which per-token series feeds the binned profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileSource {
    /// Probability-level range and sigma.
    Probs,
    /// Logit-level range and sigma (columns lacking logits are skipped).
    Logits,
}

/// Bins every (token, step) observation by its mean probability and averages
/// the chosen range/sigma series per bin. Imputed columns are excluded unless
/// `include_imputed` is set.
pub fn bin_by_probability(
    stats: &[VariationStats],
    bin_width: f64,
    source: ProfileSource,
    include_imputed: bool,
) -> Result<BinnedProfile, MetricsError> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(MetricsError::InvalidBinWidth(bin_width));
    }
    let edges = width_edges(bin_width);
    let bins = edges.len() - 1;
    let mut count = vec![0usize; bins];
    let mut range_sum = vec![0.0f64; bins];
    let mut sigma_sum = vec![0.0f64; bins];
    for s in stats {
        for c in 0..s.token_ids.len() {
            if s.imputed[c] && !include_imputed {
                continue;
            }
            let (r, g) = match source {
                ProfileSource::Probs => (s.range[c], s.sigma[c]),
                ProfileSource::Logits => match (&s.logit_range, &s.logit_sigma) {
                    (Some(lr), Some(ls)) if !lr[c].is_nan() => (lr[c], ls[c]),
                    _ => continue,
                },
            };
            let Some(b) = bin_index(&edges, s.mean_prob[c]) else {
                continue;
            };
            count[b] += 1;
            range_sum[b] += r;
            sigma_sum[b] += g;
        }
    }
    let mean_range = count
        .iter()
        .zip(&range_sum)
        .map(|(&c, &s)| if c > 0 { Some(s / c as f64) } else { None })
        .collect();
    let mean_sigma = count
        .iter()
        .zip(&sigma_sum)
        .map(|(&c, &s)| if c > 0 { Some(s / c as f64) } else { None })
        .collect();
    Ok(BinnedProfile {
        bin_edges: edges,
        count,
        mean_range,
        mean_sigma,
    })
}

/// Edges `0, w, 2w, ..., 1` with the last edge clamped to exactly 1.
fn width_edges(width: f64) -> Vec<f64> {
    let mut edges = Vec::new();
    let mut k = 0usize;
    loop {
        let e = (k as f64 * width).min(1.0);
        edges.push(e);
        if e >= 1.0 {
            break;
        }
        k += 1;
    }
    edges
}

/// Left-closed right-open bins, final bin closed.
fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if x < edges[0] || x > edges[last] || x.is_nan() {
        return None;
    }
    if x == edges[last] {
        return Some(last - 1);
    }
    // partition_point returns the first edge strictly greater than x.
    let idx = edges.partition_point(|&e| e <= x);
    Some(idx - 1)
}

/// Histogram of raw metric values over explicit edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Normalized by the in-range total; `None` when no value fell in range.
    pub fractions: Option<Vec<f64>>,
    /// Values outside `[edges[0], edges[last]]`.
    pub out_of_range: usize,
}

/// Counts values into left-closed right-open bins (final bin closed) and
/// normalizes by the in-range total.
pub fn distribution_histogram(values: &[f64], edges: &[f64]) -> Result<Histogram, MetricsError> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricsError::NonMonotoneEdges);
    }
    let mut counts = vec![0usize; edges.len() - 1];
    let mut out_of_range = 0usize;
    for &v in values {
        match bin_index(edges, v) {
            Some(b) => counts[b] += 1,
            None => out_of_range += 1,
        }
    }
    let total: usize = counts.iter().sum();
    let fractions = if total > 0 {
        Some(counts.iter().map(|&c| c as f64 / total as f64).collect())
    } else {
        None
    };
    Ok(Histogram {
        edges: edges.to_vec(),
        counts,
        fractions,
        out_of_range,
    })
}

/// Evenly spaced edges over `[lo, hi]`.
pub fn linear_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut edges: Vec<f64> = (0..=bins)
        .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
        .collect();
    if let Some(last) = edges.last_mut() {
        *last = hi;
    }
    edges
}

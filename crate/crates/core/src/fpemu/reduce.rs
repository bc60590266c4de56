//! Order-dependent reductions in an emulated format.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::format::{round_to_format, FloatFormat};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrderError {
    #[error("permutation of length {got} is not a bijection on 0..{got}")]
    NotAPermutation { got: usize },
    #[error("order covers {order} elements but the sequence has {values}")]
    LengthMismatch { order: usize, values: usize },
    #[error("permutation spread requires at least one trial")]
    ZeroTrials,
}

/// How a permuted sequence is reduced to a single value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReductionPolicy {
    /// Left fold in permutation order.
    Sequential,
    /// Left fold over a randomly drawn permutation. Numerically identical to
    /// `Sequential`; the variant records how the order was produced.
    RandomPermutation,
    /// Left-balanced binary tree over the permuted sequence: bottom-up
    /// pairwise passes, with a trailing odd element promoted unchanged.
    PairwiseTree,
}

/// An accumulation order: a bijection on `0..len` plus the reduction policy.
/// Both are part of the value so reductions are reproducible.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccumulationOrder {
    permutation: Vec<usize>,
    policy: ReductionPolicy,
}

impl AccumulationOrder {
    /// The identity order over `len` elements, folded sequentially.
    pub fn identity(len: usize) -> Self {
        AccumulationOrder {
            permutation: (0..len).collect(),
            policy: ReductionPolicy::Sequential,
        }
    }

    /// Validates that `permutation` is a bijection on `0..len`.
    pub fn new(permutation: Vec<usize>, policy: ReductionPolicy) -> Result<Self, OrderError> {
        let n = permutation.len();
        let mut seen = vec![false; n];
        for &i in &permutation {
            if i >= n || seen[i] {
                return Err(OrderError::NotAPermutation { got: n });
            }
            seen[i] = true;
        }
        Ok(AccumulationOrder {
            permutation,
            policy,
        })
    }

    /// A uniformly random permutation of `0..len`, drawn from a seeded
    /// stream.
    pub fn shuffled(len: usize, seed: u64, policy: ReductionPolicy) -> Self {
        let mut permutation: Vec<usize> = (0..len).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        permutation.shuffle(&mut rng);
        AccumulationOrder {
            permutation,
            policy,
        }
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn policy(&self) -> ReductionPolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }
}

/// Result of an emulated reduction. Overflow saturates to infinity and is
/// flagged rather than aborting, so ensembles survive pathological draws.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reduction {
    pub value: f64,
    pub overflowed: bool,
}

impl Reduction {
    fn new(value: f64) -> Self {
        Reduction {
            value,
            overflowed: value.is_infinite(),
        }
    }
}

/// Sums `values` in the given order, rounding the running result to `fmt`
/// after every addition. Inputs are first rounded to `fmt`.
pub fn sum_ordered(
    values: &[f64],
    order: &AccumulationOrder,
    fmt: &FloatFormat,
) -> Result<Reduction, OrderError> {
    if order.len() != values.len() {
        return Err(OrderError::LengthMismatch {
            order: order.len(),
            values: values.len(),
        });
    }
    let rounded: Vec<f64> = order
        .permutation
        .iter()
        .map(|&i| round_to_format(values[i], fmt))
        .collect();
    Ok(Reduction::new(reduce(rounded, order.policy, fmt)))
}

/// Dot product of `a` and `b` accumulated in the given order with per-step
/// rounding to `fmt`.
///
/// Inputs are first rounded to `fmt`. When `fused` is false each elementwise
/// product is rounded to `fmt` before accumulation; when true, each
/// multiply-add pair incurs a single rounding (the product feeds the add at
/// full working precision).
pub fn dot_ordered(
    a: &[f64],
    b: &[f64],
    order: &AccumulationOrder,
    fmt: &FloatFormat,
    fused: bool,
) -> Result<Reduction, OrderError> {
    if a.len() != b.len() {
        return Err(OrderError::LengthMismatch {
            order: a.len(),
            values: b.len(),
        });
    }
    if order.len() != a.len() {
        return Err(OrderError::LengthMismatch {
            order: order.len(),
            values: a.len(),
        });
    }
    let a: Vec<f64> = a.iter().map(|&x| round_to_format(x, fmt)).collect();
    let b: Vec<f64> = b.iter().map(|&x| round_to_format(x, fmt)).collect();
    Ok(dot_prerounded(&a, &b, order, fmt, fused))
}

/// Dot-product kernel over inputs already representable in `fmt` (rounding is
/// idempotent, so re-rounding would be a no-op; callers that cache rounded
/// operands skip it).
pub(crate) fn dot_prerounded(
    a: &[f64],
    b: &[f64],
    order: &AccumulationOrder,
    fmt: &FloatFormat,
    fused: bool,
) -> Reduction {
    match order.policy {
        ReductionPolicy::Sequential | ReductionPolicy::RandomPermutation => {
            let mut acc = 0.0f64;
            if fused {
                for &i in &order.permutation {
                    // One rounding per multiply-add: the product of two
                    // format values is exact in the working real.
                    acc = round_to_format(acc + a[i] * b[i], fmt);
                }
            } else {
                for &i in &order.permutation {
                    let p = round_to_format(a[i] * b[i], fmt);
                    acc = round_to_format(acc + p, fmt);
                }
            }
            Reduction::new(acc)
        }
        ReductionPolicy::PairwiseTree => {
            // Products at the leaves, then the tree. Fused semantics round
            // each leaf multiply together with its first combining add; since
            // tree leaves are combined pairwise, fusing here means the leaf
            // product stays unrounded until its first pairwise add.
            let leaves: Vec<f64> = if fused {
                order.permutation.iter().map(|&i| a[i] * b[i]).collect()
            } else {
                order
                    .permutation
                    .iter()
                    .map(|&i| round_to_format(a[i] * b[i], fmt))
                    .collect()
            };
            Reduction::new(tree_reduce(leaves, fmt))
        }
    }
}

fn reduce(permuted: Vec<f64>, policy: ReductionPolicy, fmt: &FloatFormat) -> f64 {
    match policy {
        ReductionPolicy::Sequential | ReductionPolicy::RandomPermutation => {
            let mut acc = 0.0f64;
            for v in permuted {
                acc = round_to_format(acc + v, fmt);
            }
            acc
        }
        ReductionPolicy::PairwiseTree => tree_reduce(permuted, fmt),
    }
}

/// Bottom-up pairwise reduction; each combining add is rounded to `fmt`.
fn tree_reduce(mut buf: Vec<f64>, fmt: &FloatFormat) -> f64 {
    if buf.is_empty() {
        return 0.0;
    }
    let mut n = buf.len();
    while n > 1 {
        let pairs = n / 2;
        for i in 0..pairs {
            buf[i] = round_to_format(buf[2 * i] + buf[2 * i + 1], fmt);
        }
        if n % 2 == 1 {
            buf[pairs] = buf[n - 1];
            n = pairs + 1;
        } else {
            n = pairs;
        }
    }
    buf[0]
}

/// Extremes of `sum_ordered` over seeded random permutations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spread {
    pub min: f64,
    pub max: f64,
    pub range: f64,
    pub any_overflow: bool,
}

/// Samples `trials` uniformly random sequential orders of `values` and
/// returns the extremes of the rounded sums. Deterministic given `seed`.
pub fn permutation_spread(
    values: &[f64],
    fmt: &FloatFormat,
    trials: usize,
    seed: u64,
) -> Result<Spread, OrderError> {
    if trials == 0 {
        return Err(OrderError::ZeroTrials);
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut any_overflow = false;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut permutation: Vec<usize> = (0..values.len()).collect();
    for _ in 0..trials {
        permutation.shuffle(&mut rng);
        let rounded: Vec<f64> = permutation
            .iter()
            .map(|&i| round_to_format(values[i], fmt))
            .collect();
        let sum = reduce(rounded, ReductionPolicy::Sequential, fmt);
        any_overflow |= sum.is_infinite();
        min = min.min(sum);
        max = max.max(sum);
    }
    Ok(Spread {
        min,
        max,
        range: max - min,
        any_overflow,
    })
}

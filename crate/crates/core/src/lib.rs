//! Desk-scale laboratory for run-to-run variation in LLM token probabilities.
//!
//! GPU inference reorders floating-point reductions between runs, so logits —
//! and the token probabilities derived from them — fluctuate even under
//! nominally deterministic settings. This crate provides the pieces needed to
//! reproduce and study that effect without a GPU:
//!
//! - [`fpemu`]: bit-exact emulation of reduced-precision arithmetic (BF16,
//!   FP16, FP32) and order-dependent reductions, plus an exact-summation
//!   oracle that is permutation-invariant by construction.
//! - [`softmax`]: temperature softmax, its Jacobian, and the classification
//!   of probabilities into sensitivity regimes.
//! - [`metrics`]: per-token standard deviation and range over run ensembles,
//!   standard-error sizing, and probability-binned profiles.
//! - [`trace`]: the generation-trace data model, JSONL/CSV serialization, and
//!   alignment of multi-run traces to the first divergence.
//! - [`simulator`]: a synthetic projection layer whose nondeterminism comes
//!   from accumulation order, plus a phenomenological Gaussian-noise mode.
//! - [`estimator`]: prediction of per-token variation from a single run's
//!   probabilities and a calibrated logit-noise scale.

pub mod estimator;
pub mod fpemu;
pub mod metrics;
pub mod seeds;
pub mod softmax;
pub mod simulator;
pub mod trace;

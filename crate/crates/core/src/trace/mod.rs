//! Generation-trace data model, serialization, and multi-run alignment.
//!
//! A [`TokenTrace`] is one run's record of a generation: ordered steps, each
//! carrying the greedily selected token and the top-k token probabilities
//! (optionally with logits), plus run metadata. Traces serialize to a
//! canonical JSON Lines form (stable field order, floats at 17 significant
//! digits) so identical traces produce identical bytes, with a flat CSV
//! alternative. [`align_to_divergence`] truncates a set of runs at the first
//! step where any run's selected token differs, which guarantees that every
//! compared step was generated from the same preceding context.

mod align;
mod io;

pub use align::{align_to_divergence, common_prefix_by_selection, AlignedEnsembleSet};
pub use io::{fmt_f64, parse_traces, write_traces, ParseReport, RecordError, TraceFormat};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error("alignment needs at least 2 traces, got {0}")]
    SingleTrace(usize),
    #[error("traces mix prompts {0:?} and {1:?}")]
    MixedPrompts(String, String),
    #[error("top-k width mismatch: run {run_id} step {step} has {got}, expected {expected}")]
    TopKWidthMismatch {
        run_id: String,
        step: usize,
        got: usize,
        expected: usize,
    },
}

/// Run metadata carried by every trace.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceMeta {
    pub model: String,
    pub gpu: String,
    pub batch_size: u32,
    pub precision: String,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for TraceMeta {
    fn default() -> Self {
        TraceMeta {
            model: String::new(),
            gpu: String::new(),
            batch_size: 0,
            precision: String::new(),
            temperature: 1.0,
            seed: 0,
        }
    }
}

/// One retained token at one step: id, probability, optional logit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopkEntry {
    pub token_id: u32,
    pub prob: f64,
    pub logit: Option<f64>,
}

/// One generation step: the greedy selection and the top-k slice, sorted by
/// descending probability.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step_index: usize,
    pub selected_token_id: u32,
    pub topk: Vec<TopkEntry>,
}

/// A full per-run record of one generation.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenTrace {
    pub run_id: String,
    pub prompt_id: String,
    pub steps: Vec<StepRecord>,
    pub meta: TraceMeta,
}

impl TokenTrace {
    /// Builds a trace after checking the structural invariants.
    pub fn new(
        run_id: String,
        prompt_id: String,
        steps: Vec<StepRecord>,
        meta: TraceMeta,
    ) -> Result<Self, TraceError> {
        let trace = TokenTrace {
            run_id,
            prompt_id,
            steps,
            meta,
        };
        trace.validate()?;
        Ok(trace)
    }

    /// Checks: contiguous step indices from 0, non-empty sorted top-k with
    /// probabilities in [0, 1] summing to at most 1 + 1e-6, and the selected
    /// token equal to the top-ranked entry.
    pub fn validate(&self) -> Result<(), TraceError> {
        for (expected, step) in self.steps.iter().enumerate() {
            if step.step_index != expected {
                return Err(TraceError::Invalid(format!(
                    "run {:?}: step index {} where {} was expected (steps must be contiguous from 0)",
                    self.run_id, step.step_index, expected
                )));
            }
            if step.topk.is_empty() {
                return Err(TraceError::Invalid(format!(
                    "run {:?} step {}: empty top-k",
                    self.run_id, step.step_index
                )));
            }
            let mut sum = 0.0;
            for entry in &step.topk {
                if !(0.0..=1.0).contains(&entry.prob) || entry.prob.is_nan() {
                    return Err(TraceError::Invalid(format!(
                        "run {:?} step {} token {}: probability {} out of range",
                        self.run_id, step.step_index, entry.token_id, entry.prob
                    )));
                }
                sum += entry.prob;
            }
            if sum > 1.0 + 1e-6 {
                return Err(TraceError::Invalid(format!(
                    "run {:?} step {}: top-k probabilities sum to {sum}",
                    self.run_id, step.step_index
                )));
            }
            if step
                .topk
                .windows(2)
                .any(|w| w[0].prob < w[1].prob)
            {
                return Err(TraceError::Invalid(format!(
                    "run {:?} step {}: top-k not sorted by descending probability",
                    self.run_id, step.step_index
                )));
            }
            if step.selected_token_id != step.topk[0].token_id {
                return Err(TraceError::Invalid(format!(
                    "run {:?} step {}: selected token {} differs from top-ranked {}",
                    self.run_id, step.step_index, step.selected_token_id, step.topk[0].token_id
                )));
            }
        }
        Ok(())
    }

    /// The selected token at every step, in order.
    pub fn selections(&self) -> Vec<u32> {
        self.steps.iter().map(|s| s.selected_token_id).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn entry(token_id: u32, prob: f64, logit: Option<f64>) -> TopkEntry {
        TopkEntry {
            token_id,
            prob,
            logit,
        }
    }

    pub(crate) fn simple_trace(run: &str, selections: &[(u32, f64)]) -> TokenTrace {
        let steps = selections
            .iter()
            .enumerate()
            .map(|(i, &(tok, p))| StepRecord {
                step_index: i,
                selected_token_id: tok,
                topk: vec![
                    entry(tok, p, Some(p.ln())),
                    entry(tok + 1, (p / 2.0).min(1.0 - p), None),
                ],
            })
            .collect();
        TokenTrace::new(
            run.to_string(),
            "prompt-000".to_string(),
            steps,
            TraceMeta::default(),
        )
        .unwrap()
    }

    #[test]
    fn minimal_empty_trace_is_valid() {
        let t = TokenTrace::new(
            "r0".into(),
            "p0".into(),
            vec![],
            TraceMeta::default(),
        );
        assert!(t.is_ok());
    }

    #[test]
    fn non_contiguous_steps_rejected() {
        let steps = vec![StepRecord {
            step_index: 1,
            selected_token_id: 0,
            topk: vec![entry(0, 0.5, None)],
        }];
        assert!(TokenTrace::new("r".into(), "p".into(), steps, TraceMeta::default()).is_err());
    }

    #[test]
    fn unsorted_topk_rejected() {
        let steps = vec![StepRecord {
            step_index: 0,
            selected_token_id: 3,
            topk: vec![entry(3, 0.2, None), entry(4, 0.5, None)],
        }];
        assert!(TokenTrace::new("r".into(), "p".into(), steps, TraceMeta::default()).is_err());
    }

    #[test]
    fn selected_must_match_top_rank() {
        let steps = vec![StepRecord {
            step_index: 0,
            selected_token_id: 9,
            topk: vec![entry(3, 0.5, None)],
        }];
        assert!(TokenTrace::new("r".into(), "p".into(), steps, TraceMeta::default()).is_err());
    }

    #[test]
    fn excess_mass_rejected() {
        let steps = vec![StepRecord {
            step_index: 0,
            selected_token_id: 0,
            topk: vec![entry(0, 0.7, None), entry(1, 0.5, None)],
        }];
        assert!(TokenTrace::new("r".into(), "p".into(), steps, TraceMeta::default()).is_err());
    }
}

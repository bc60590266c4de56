//! Alignment of multi-run traces to the first divergence.

use std::collections::BTreeSet;

use crate::metrics::RunEnsemble;

use super::{TokenTrace, TraceError};

/// Per-step ensembles for the prefix on which every run selected the same
/// tokens.
#[derive(Debug)]
pub struct AlignedEnsembleSet {
    pub prompt_id: String,
    pub common_prefix_len: usize,
    pub n_runs: usize,
    pub ensembles: Vec<RunEnsemble>,
}

/// Length of the longest prefix on which all selection sequences agree,
/// capped at the shortest sequence.
pub fn common_prefix_by_selection<S: AsRef<[u32]>>(selections: &[S]) -> usize {
    let min_len = selections
        .iter()
        .map(|s| s.as_ref().len())
        .min()
        .unwrap_or(0);
    let first = selections[0].as_ref();
    for (step, &expected) in first.iter().enumerate().take(min_len) {
        if selections[1..]
            .iter()
            .any(|s| s.as_ref()[step] != expected)
        {
            return step;
        }
    }
    min_len
}

/// Truncates a set of runs of one prompt at the first step where any run's
/// selected token differs, and builds one ensemble per aligned step.
///
/// Token columns are the sorted union of the ids appearing in any run's
/// top-k at that step. A token absent from some run's top-k is imputed with
/// probability 0 (the conservative floor for something that fell below the
/// k-th value) and its column is flagged so aggregation can exclude it.
/// Logit matrices are attached when at least one cell carries a logit;
/// missing cells hold NaN and are skipped by the statistics.
pub fn align_to_divergence(traces: &[TokenTrace]) -> Result<AlignedEnsembleSet, TraceError> {
    if traces.len() < 2 {
        return Err(TraceError::SingleTrace(traces.len()));
    }
    let prompt_id = traces[0].prompt_id.clone();
    for t in &traces[1..] {
        if t.prompt_id != prompt_id {
            return Err(TraceError::MixedPrompts(
                prompt_id.clone(),
                t.prompt_id.clone(),
            ));
        }
    }
    // All runs must record the same top-k width.
    let mut expected_k: Option<usize> = None;
    for t in traces {
        for step in &t.steps {
            match expected_k {
                None => expected_k = Some(step.topk.len()),
                Some(k) if step.topk.len() != k => {
                    return Err(TraceError::TopKWidthMismatch {
                        run_id: t.run_id.clone(),
                        step: step.step_index,
                        got: step.topk.len(),
                        expected: k,
                    });
                }
                Some(_) => {}
            }
        }
    }

    let selections: Vec<Vec<u32>> = traces.iter().map(|t| t.selections()).collect();
    let prefix = common_prefix_by_selection(&selections);

    let mut ensembles = Vec::with_capacity(prefix);
    for step in 0..prefix {
        let union: BTreeSet<u32> = traces
            .iter()
            .flat_map(|t| t.steps[step].topk.iter().map(|e| e.token_id))
            .collect();
        let token_ids: Vec<u32> = union.into_iter().collect();
        let v = token_ids.len();
        let mut imputed = vec![false; v];
        let mut probs = Vec::with_capacity(traces.len());
        let mut logits = Vec::with_capacity(traces.len());
        let mut any_logit = false;
        for t in traces {
            let record = &t.steps[step];
            let mut prow = vec![0.0f64; v];
            let mut lrow = vec![f64::NAN; v];
            let mut present = vec![false; v];
            for e in &record.topk {
                let c = token_ids.binary_search(&e.token_id).expect("union member");
                prow[c] = e.prob;
                present[c] = true;
                if let Some(z) = e.logit {
                    lrow[c] = z;
                    any_logit = true;
                }
            }
            for c in 0..v {
                if !present[c] {
                    imputed[c] = true;
                }
            }
            probs.push(prow);
            logits.push(lrow);
        }
        let ensemble = RunEnsemble::new(
            step,
            token_ids,
            probs,
            if any_logit { Some(logits) } else { None },
        )
        .map_err(|e| TraceError::Invalid(e.to_string()))?
        .with_imputed(imputed)
        .map_err(|e| TraceError::Invalid(e.to_string()))?;
        ensembles.push(ensemble);
    }
    Ok(AlignedEnsembleSet {
        prompt_id,
        common_prefix_len: prefix,
        n_runs: traces.len(),
        ensembles,
    })
}

//! `tokvar validate`: compare predictions against an observed ensemble and
//! gate on an error budget.

use std::collections::BTreeMap;
use std::path::PathBuf;

use tokvar_core::estimator::{validate_estimate, PredictedVariation, RegimeErrors};
use tokvar_core::metrics::{ensemble_stats, VariationStats};
use tokvar_core::trace::align_to_divergence;

use crate::args::ValidateArgs;
use crate::config_file::ConfigFile;
use crate::{CliError, CmdResult};

use super::{group_by_prompt, parse_thresholds, read_traces, trace_format};

use super::estimate::read_predictions;

const KEYS: &[&str] = &[
    "predictions",
    "observed",
    "format",
    "budget",
    "thresholds",
    "strict",
];

pub fn run(args: &ValidateArgs) -> CmdResult {
    let cfg = ConfigFile::load(args.config.as_deref(), KEYS)?;
    let predictions_path = args
        .predictions
        .clone()
        .or(cfg.get_str("predictions").map(PathBuf::from))
        .ok_or_else(|| CliError::usage("validate requires --predictions"))?;
    let observed_path = args
        .observed
        .clone()
        .or(cfg.get_str("observed").map(PathBuf::from))
        .ok_or_else(|| CliError::usage("validate requires --observed"))?;
    let budget = args.budget.or(cfg.get("budget")?);
    let strict = args.strict || cfg.get("strict")?.unwrap_or(false);
    let thresholds =
        parse_thresholds(args.thresholds.as_deref().or(cfg.get_str("thresholds")))?;

    if let Some(b) = budget {
        if !(0.0..=f64::INFINITY).contains(&b) || b.is_nan() {
            return Err(CliError::usage(format!("budget must be >= 0, got {b}")));
        }
    }

    // Predictions come keyed by (prompt, step); observations by prompt from
    // alignment. A shared (prompt, step) -> synthetic step index lets the
    // pooled comparison match across prompts.
    let rows = read_predictions(&predictions_path)?;
    if rows.is_empty() {
        return Err(CliError::data(format!(
            "{}: no prediction rows",
            predictions_path.display()
        )));
    }
    let mut key_index: BTreeMap<(String, usize), usize> = BTreeMap::new();
    let mut predicted: Vec<PredictedVariation> = Vec::new();
    for row in &rows {
        let key = (row.prompt_id.clone(), row.step);
        let next = key_index.len();
        let idx = *key_index.entry(key).or_insert(next);
        if idx == predicted.len() {
            predicted.push(PredictedVariation {
                step_index: idx,
                token_ids: Vec::new(),
                sigma: Vec::new(),
                range: Vec::new(),
            });
        }
        predicted[idx].token_ids.push(row.token_id);
        predicted[idx].sigma.push(row.pred_sigma);
        predicted[idx].range.push(row.pred_range);
    }

    let observed_traces = read_traces(
        &observed_path,
        trace_format(&observed_path, args.format),
        strict,
    )?;
    let mut observed: Vec<VariationStats> = Vec::new();
    for (prompt_id, runs) in group_by_prompt(observed_traces) {
        if runs.len() < 2 {
            eprintln!("warning: observed prompt {prompt_id:?} has a single run, skipped");
            continue;
        }
        let aligned = align_to_divergence(&runs).map_err(|e| CliError::data(e.to_string()))?;
        for e in &aligned.ensembles {
            let Some(&idx) = key_index.get(&(prompt_id.clone(), e.step_index())) else {
                continue;
            };
            let mut stats = ensemble_stats(e).map_err(|e| CliError::data(e.to_string()))?;
            stats.step_index = idx;
            observed.push(stats);
        }
    }

    let report = validate_estimate(&predicted, &observed, thresholds)
        .map_err(|e| CliError::data(e.to_string()))?;

    println!("matched (step, token) observations: {}", report.matched);
    print_regime("suppressed_low", &report.suppressed_low);
    print_regime("amplified_mid", &report.amplified_mid);
    print_regime("suppressed_high", &report.suppressed_high);

    if let Some(budget) = budget {
        let err = report.amplified_mid.median_rel_err_sigma;
        if err > budget {
            return Err(CliError::data(format!(
                "mid-regime median relative sigma error {err:.4} exceeds budget {budget:.4}"
            )));
        }
        println!("budget check: {err:.4} <= {budget:.4}, ok");
    }
    Ok(())
}

fn print_regime(name: &str, e: &RegimeErrors) {
    println!(
        "{name}: count={} sigma_err median={:.4} p90={:.4} | range_err median={:.4} p90={:.4}",
        e.count,
        e.median_rel_err_sigma,
        e.p90_rel_err_sigma,
        e.median_rel_err_range,
        e.p90_rel_err_range
    );
}

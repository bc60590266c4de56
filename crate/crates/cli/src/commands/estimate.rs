//! `tokvar estimate`: per-token variation predictions from a single run.

use std::path::PathBuf;

use tokvar_core::estimator::{
    calibrate_noise, predict_range, predict_std, NoiseScale, NoiseSource, RangeFactorTable,
};
use tokvar_core::softmax::{sensitivity_regime, ProbabilityVector};
use tokvar_core::trace::align_to_divergence;

use crate::args::EstimateArgs;
use crate::config_file::{resolve, ConfigFile};
use crate::report::{fmt_f64, CsvTable};
use crate::{CliError, CmdResult};

use super::{group_by_prompt, parse_thresholds, read_traces, trace_format};

const KEYS: &[&str] = &[
    "input",
    "format",
    "run",
    "noise-s",
    "calibrate-from",
    "n-runs",
    "thresholds",
    "out",
    "strict",
];

pub fn run(args: &EstimateArgs) -> CmdResult {
    let cfg = ConfigFile::load(args.config.as_deref(), KEYS)?;
    let input = args
        .input
        .clone()
        .or(cfg.get_str("input").map(PathBuf::from))
        .ok_or_else(|| CliError::usage("estimate requires --input"))?;
    let out = args
        .out
        .clone()
        .or(cfg.get_str("out").map(PathBuf::from))
        .ok_or_else(|| CliError::usage("estimate requires --out"))?;
    let n_runs = resolve(&args.n_runs, cfg.get("n-runs")?, 50);
    let strict = args.strict || cfg.get("strict")?.unwrap_or(false);
    let run_sel = args.run.clone().or(cfg.get_str("run").map(String::from));
    let noise_s = args.noise_s.or(cfg.get("noise-s")?);
    let calibrate_from = args
        .calibrate_from
        .clone()
        .or(cfg.get_str("calibrate-from").map(PathBuf::from));
    let thresholds = parse_thresholds(
        args.thresholds.as_deref().or(cfg.get_str("thresholds")),
    )?;

    // Parameter contradictions fail before any file is touched.
    match (noise_s, &calibrate_from) {
        (Some(_), Some(_)) => {
            return Err(CliError::usage(
                "supply either --noise-s or --calibrate-from, not both",
            ))
        }
        (None, None) => {
            return Err(CliError::usage(
                "no noise scale: pass --noise-s <s> or --calibrate-from <traces with >= 2 runs \
                 and logits>",
            ))
        }
        _ => {}
    }

    let traces = read_traces(&input, trace_format(&input, args.format), strict)?;
    if traces.is_empty() {
        return Err(CliError::data(format!("{}: no traces", input.display())));
    }
    let trace = match &run_sel {
        None => &traces[0],
        Some(id) => traces
            .iter()
            .find(|t| &t.run_id == id)
            .ok_or_else(|| {
                CliError::data(format!("run {id:?} not found in {}", input.display()))
            })?,
    };

    let scale = resolve_noise_scale(noise_s, calibrate_from.as_deref(), strict)?;
    let source = match scale.source() {
        NoiseSource::UserSupplied => "user-supplied",
        NoiseSource::CalibratedFromEnsemble => "calibrated",
    };

    let echo = format!(
        "input={} run={} s={} s-source={source} n-runs={n_runs} thresholds={},{}",
        input.display(),
        trace.run_id,
        fmt_f64(scale.value()),
        thresholds.low,
        thresholds.high,
    );

    let table_factors = RangeFactorTable::new();
    let mut table = CsvTable::new(
        "estimate",
        &echo,
        &[
            "prompt_id",
            "run_id",
            "step",
            "token_id",
            "prob",
            "pred_sigma",
            "pred_range",
            "regime",
        ],
    );
    for step in &trace.steps {
        let probs: Vec<f64> = step.topk.iter().map(|e| e.prob).collect();
        let p = ProbabilityVector::from_topk(probs, trace.meta.temperature)
            .map_err(|e| CliError::data(format!("step {}: {e}", step.step_index)))?;
        let sigma = predict_std(&p, &scale);
        let range = predict_range(&p, &scale, n_runs, &table_factors)
            .map_err(|e| CliError::usage(e.to_string()))?;
        for (i, entry) in step.topk.iter().enumerate() {
            let regime = sensitivity_regime(entry.prob, thresholds)
                .map_err(|e| CliError::data(e.to_string()))?;
            table.row([
                trace.prompt_id.clone(),
                trace.run_id.clone(),
                step.step_index.to_string(),
                entry.token_id.to_string(),
                fmt_f64(entry.prob),
                fmt_f64(sigma[i]),
                fmt_f64(range[i]),
                regime.as_str().to_string(),
            ]);
        }
    }
    crate::report::write_output(&out, &table.into_bytes())?;
    println!(
        "estimated {} steps of run {} (s = {}, {source}) -> {}",
        trace.steps.len(),
        trace.run_id,
        scale.value(),
        out.display()
    );
    Ok(())
}

fn resolve_noise_scale(
    noise_s: Option<f64>,
    calibrate_from: Option<&std::path::Path>,
    strict: bool,
) -> Result<NoiseScale, CliError> {
    match (noise_s, calibrate_from) {
        (Some(_), Some(_)) => Err(CliError::usage(
            "supply either --noise-s or --calibrate-from, not both",
        )),
        (Some(s), None) => NoiseScale::user_supplied(s).map_err(|e| CliError::usage(e.to_string())),
        (None, Some(path)) => {
            let traces = read_traces(path, trace_format(path, None), strict)?;
            let mut ensembles = Vec::new();
            for (prompt_id, runs) in group_by_prompt(traces) {
                if runs.len() < 2 {
                    eprintln!(
                        "warning: calibration prompt {prompt_id:?} has a single run, skipped"
                    );
                    continue;
                }
                let aligned =
                    align_to_divergence(&runs).map_err(|e| CliError::data(e.to_string()))?;
                ensembles.extend(aligned.ensembles);
            }
            calibrate_noise(&ensembles).map_err(|e| CliError::data(e.to_string()))
        }
        (None, None) => Err(CliError::usage(
            "no noise scale: pass --noise-s <s> or --calibrate-from <traces with >= 2 runs and logits>",
        )),
    }
}

/// Used by `validate` to re-read prediction tables.
pub fn read_predictions(
    path: &std::path::Path,
) -> Result<Vec<PredictionRow>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(std::io::BufReader::new(file));
    let mut rows = Vec::new();
    for record in rdr.deserialize::<PredictionRow>() {
        let row =
            record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(serde::Deserialize)]
pub struct PredictionRow {
    pub prompt_id: String,
    #[allow(dead_code)]
    pub run_id: String,
    pub step: usize,
    pub token_id: u32,
    #[allow(dead_code)]
    pub prob: f64,
    pub pred_sigma: f64,
    pub pred_range: f64,
    #[allow(dead_code)]
    pub regime: String,
}

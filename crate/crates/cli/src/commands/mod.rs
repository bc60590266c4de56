pub mod analyze;
pub mod estimate;
pub mod simulate;
pub mod validate;

use std::io::BufReader;
use std::path::Path;

use tokvar_core::softmax::RegimeThresholds;
use tokvar_core::trace::{parse_traces, TokenTrace, TraceFormat};

use crate::args::FormatArg;
use crate::CliError;

pub fn trace_format(path: &Path, flag: Option<FormatArg>) -> TraceFormat {
    match flag {
        Some(FormatArg::Jsonl) => TraceFormat::Jsonl,
        Some(FormatArg::Csv) => TraceFormat::Csv,
        None => match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => TraceFormat::Csv,
            _ => TraceFormat::Jsonl,
        },
    }
}

/// Reads and validates a trace file. In non-strict mode malformed records
/// are skipped with a warning per record; in strict mode the first one
/// fails the command.
pub fn read_traces(
    path: &Path,
    format: TraceFormat,
    strict: bool,
) -> Result<Vec<TokenTrace>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let report = parse_traces(BufReader::new(file), format, strict)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    for err in &report.errors {
        eprintln!("warning: {}: {err} (record skipped)", path.display());
    }
    Ok(report.traces)
}

/// Groups traces by prompt id, prompts sorted for deterministic output.
pub fn group_by_prompt(traces: Vec<TokenTrace>) -> Vec<(String, Vec<TokenTrace>)> {
    let mut groups: Vec<(String, Vec<TokenTrace>)> = Vec::new();
    for t in traces {
        match groups.iter_mut().find(|(p, _)| *p == t.prompt_id) {
            Some((_, v)) => v.push(t),
            None => groups.push((t.prompt_id.clone(), vec![t])),
        }
    }
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    groups
}

/// Parses `LOW,HIGH` regime thresholds.
pub fn parse_thresholds(raw: Option<&str>) -> Result<RegimeThresholds, CliError> {
    let Some(raw) = raw else {
        return Ok(RegimeThresholds::DEFAULT);
    };
    let parts: Vec<&str> = raw.split(',').collect();
    let err = || {
        CliError::usage(format!(
            "thresholds must be LOW,HIGH with 0 <= LOW < HIGH <= 1, got {raw:?}"
        ))
    };
    if parts.len() != 2 {
        return Err(err());
    }
    let low: f64 = parts[0].trim().parse().map_err(|_| err())?;
    let high: f64 = parts[1].trim().parse().map_err(|_| err())?;
    if !(0.0..=1.0).contains(&low) || !(0.0..=1.0).contains(&high) || low >= high {
        return Err(err());
    }
    Ok(RegimeThresholds { low, high })
}

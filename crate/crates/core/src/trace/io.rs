//! Trace serialization: canonical JSON Lines and a flat CSV alternative.
//!
//! Writing is canonical — field order is fixed and every float is rendered
//! with 17 significant digits — so identical traces produce identical bytes.
//! Lines starting with `#` are treated as comments on input; command-line
//! tools use them to echo the run configuration.

use std::io::{BufRead, Write};

use serde::Deserialize;

use super::{StepRecord, TokenTrace, TopkEntry, TraceError, TraceMeta};

/// On-disk trace encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceFormat {
    Jsonl,
    Csv,
}

impl TraceFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceFormat::Jsonl => "jsonl",
            TraceFormat::Csv => "csv",
        }
    }
}

/// A malformed record, reported with its line number.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RecordError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Result of a (possibly partial) ingestion.
#[derive(Debug, Default)]
pub struct ParseReport {
    pub traces: Vec<TokenTrace>,
    pub errors: Vec<RecordError>,
}

/// Renders a float with 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// JSONL
// ---------------------------------------------------------------------------

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization cannot fail")
}

fn write_jsonl_trace<W: Write>(w: &mut W, t: &TokenTrace) -> std::io::Result<()> {
    write!(
        w,
        "{{\"prompt_id\": {}, \"run_id\": {}, \"meta\": {{\"model\": {}, \"gpu\": {}, \"batch_size\": {}, \"precision\": {}, \"temperature\": {}, \"seed\": {}}}, \"steps\": [",
        json_string(&t.prompt_id),
        json_string(&t.run_id),
        json_string(&t.meta.model),
        json_string(&t.meta.gpu),
        t.meta.batch_size,
        json_string(&t.meta.precision),
        fmt_f64(t.meta.temperature),
        t.meta.seed,
    )?;
    for (si, step) in t.steps.iter().enumerate() {
        if si > 0 {
            write!(w, ", ")?;
        }
        write!(
            w,
            "{{\"i\": {}, \"sel\": {}, \"topk\": [",
            step.step_index, step.selected_token_id
        )?;
        for (ei, e) in step.topk.iter().enumerate() {
            if ei > 0 {
                write!(w, ", ")?;
            }
            match e.logit {
                // Non-finite logits (saturated overflow) have no JSON number
                // form and are dropped to null.
                Some(z) if z.is_finite() => write!(
                    w,
                    "{{\"t\": {}, \"p\": {}, \"z\": {}}}",
                    e.token_id,
                    fmt_f64(e.prob),
                    fmt_f64(z)
                )?,
                _ => write!(
                    w,
                    "{{\"t\": {}, \"p\": {}, \"z\": null}}",
                    e.token_id,
                    fmt_f64(e.prob)
                )?,
            }
        }
        write!(w, "]}}")?;
    }
    writeln!(w, "]}}")
}

#[derive(Deserialize)]
struct JsonTrace {
    prompt_id: String,
    run_id: String,
    meta: TraceMeta,
    steps: Vec<JsonStep>,
}

#[derive(Deserialize)]
struct JsonStep {
    i: usize,
    sel: u32,
    topk: Vec<JsonEntry>,
}

#[derive(Deserialize)]
struct JsonEntry {
    t: u32,
    p: f64,
    z: Option<f64>,
}

fn parse_jsonl_line(line: &str) -> Result<TokenTrace, String> {
    let parsed: JsonTrace = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let steps = parsed
        .steps
        .into_iter()
        .map(|s| StepRecord {
            step_index: s.i,
            selected_token_id: s.sel,
            topk: s
                .topk
                .into_iter()
                .map(|e| TopkEntry {
                    token_id: e.t,
                    prob: e.p,
                    logit: e.z,
                })
                .collect(),
        })
        .collect();
    TokenTrace::new(parsed.run_id, parsed.prompt_id, steps, parsed.meta)
        .map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

const CSV_HEADER: [&str; 8] = [
    "prompt_id", "run_id", "step", "rank", "token_id", "prob", "logit", "selected",
];

fn write_csv<W: Write>(w: &mut W, traces: &[TokenTrace]) -> Result<(), TraceError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(CSV_HEADER)
        .map_err(|e| TraceError::Invalid(e.to_string()))?;
    for t in traces {
        for step in &t.steps {
            for (rank, e) in step.topk.iter().enumerate() {
                let logit = match e.logit {
                    Some(z) if z.is_finite() => fmt_f64(z),
                    _ => String::new(),
                };
                wtr.write_record([
                    t.prompt_id.as_str(),
                    t.run_id.as_str(),
                    &step.step_index.to_string(),
                    &rank.to_string(),
                    &e.token_id.to_string(),
                    &fmt_f64(e.prob),
                    &logit,
                    if rank == 0 { "1" } else { "0" },
                ])
                .map_err(|e| TraceError::Invalid(e.to_string()))?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct CsvRow {
    prompt_id: String,
    run_id: String,
    step: usize,
    rank: usize,
    token_id: u32,
    prob: f64,
    logit: Option<f64>,
    selected: u8,
}

fn parse_csv<R: BufRead>(reader: R, strict: bool) -> Result<ParseReport, TraceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| TraceError::Invalid(e.to_string()))?
        .clone();
    // Rows of one step: (rank, entry, selected flag).
    type StepRows = Vec<(usize, TopkEntry, bool)>;
    // (prompt_id, run_id) -> step -> entries; insertion order preserved so
    // output order matches the file.
    let mut groups: Vec<((String, String), Vec<StepRows>, usize)> = Vec::new();
    let mut errors = Vec::new();
    for result in rdr.records() {
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                if strict {
                    return Err(TraceError::Malformed {
                        line,
                        message: e.to_string(),
                    });
                }
                errors.push(RecordError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let row: CsvRow = match record.deserialize(Some(&headers)) {
            Ok(row) => row,
            Err(e) => {
                if strict {
                    return Err(TraceError::Malformed {
                        line,
                        message: e.to_string(),
                    });
                }
                errors.push(RecordError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let key = (row.prompt_id.clone(), row.run_id.clone());
        let idx = match groups.iter().position(|(k, _, _)| *k == key) {
            Some(i) => i,
            None => {
                groups.push((key, Vec::new(), line));
                groups.len() - 1
            }
        };
        let (_, steps, _) = &mut groups[idx];
        if steps.len() <= row.step {
            steps.resize_with(row.step + 1, Vec::new);
        }
        steps[row.step].push((
            row.rank,
            TopkEntry {
                token_id: row.token_id,
                prob: row.prob,
                logit: row.logit,
            },
            row.selected != 0,
        ));
    }

    let mut traces = Vec::new();
    for ((prompt_id, run_id), mut steps, first_line) in groups {
        let built: Result<Vec<StepRecord>, String> = steps
            .iter_mut()
            .enumerate()
            .map(|(i, entries)| {
                if entries.is_empty() {
                    return Err(format!("missing rows for step {i} (steps must be contiguous)"));
                }
                entries.sort_by_key(|(rank, _, _)| *rank);
                for (expected, (rank, _, _)) in entries.iter().enumerate() {
                    if *rank != expected {
                        return Err(format!("step {i}: ranks are not contiguous from 0"));
                    }
                }
                let selected = entries
                    .iter()
                    .filter(|(_, _, sel)| *sel)
                    .map(|(rank, e, _)| (*rank, e.token_id))
                    .collect::<Vec<_>>();
                match selected.as_slice() {
                    [(0, tok)] => Ok(StepRecord {
                        step_index: i,
                        selected_token_id: *tok,
                        topk: entries.iter().map(|(_, e, _)| *e).collect(),
                    }),
                    _ => Err(format!(
                        "step {i}: exactly the rank-0 row must be marked selected"
                    )),
                }
            })
            .collect();
        let outcome = built.and_then(|steps| {
            TokenTrace::new(run_id.clone(), prompt_id.clone(), steps, TraceMeta::default())
                .map_err(|e| e.to_string())
        });
        match outcome {
            Ok(t) => traces.push(t),
            Err(message) => {
                if strict {
                    return Err(TraceError::Malformed {
                        line: first_line,
                        message,
                    });
                }
                errors.push(RecordError {
                    line: first_line,
                    message,
                });
            }
        }
    }
    Ok(ParseReport { traces, errors })
}

// ---------------------------------------------------------------------------
// Public entry points
// ---------------------------------------------------------------------------

/// Canonical serialization of `traces` in the chosen format.
pub fn write_traces<W: Write>(
    w: &mut W,
    traces: &[TokenTrace],
    format: TraceFormat,
) -> Result<(), TraceError> {
    match format {
        TraceFormat::Jsonl => {
            for t in traces {
                write_jsonl_trace(w, t)?;
            }
            Ok(())
        }
        TraceFormat::Csv => write_csv(w, traces),
    }
}

/// Parses and validates traces from `reader`.
///
/// In strict mode the first malformed record aborts ingestion; otherwise bad
/// records are skipped and reported with their line numbers.
pub fn parse_traces<R: BufRead>(
    reader: R,
    format: TraceFormat,
    strict: bool,
) -> Result<ParseReport, TraceError> {
    match format {
        TraceFormat::Csv => parse_csv(reader, strict),
        TraceFormat::Jsonl => {
            let mut report = ParseReport::default();
            for (idx, line) in reader.lines().enumerate() {
                let line_no = idx + 1;
                let line = line?;
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                match parse_jsonl_line(trimmed) {
                    Ok(t) => report.traces.push(t),
                    Err(message) => {
                        if strict {
                            return Err(TraceError::Malformed {
                                line: line_no,
                                message,
                            });
                        }
                        report.errors.push(RecordError {
                            line: line_no,
                            message,
                        });
                    }
                }
            }
            Ok(report)
        }
    }
}

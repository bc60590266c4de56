//! `tokvar analyze`: align traces, compute variation statistics, and emit
//! plot-ready CSV tables.

use std::path::PathBuf;

use tokvar_core::metrics::{
    bin_by_probability, distribution_histogram, ensemble_stats, linear_edges, BinnedProfile,
    Histogram, ProfileSource, VariationStats,
};
use tokvar_core::trace::align_to_divergence;

use crate::args::AnalyzeArgs;
use crate::config_file::{resolve, ConfigFile};
use crate::report::{fmt_f64, opt_f64, CsvTable};
use crate::{CliError, CmdResult};

use super::{group_by_prompt, read_traces, trace_format};

const KEYS: &[&str] = &[
    "input",
    "format",
    "out-dir",
    "bin-width",
    "logit-bin-width",
    "include-imputed",
    "strict",
];

pub fn run(args: &AnalyzeArgs) -> CmdResult {
    let cfg = ConfigFile::load(args.config.as_deref(), KEYS)?;
    let input = args
        .input
        .clone()
        .or(cfg.get_str("input").map(PathBuf::from))
        .ok_or_else(|| CliError::usage("analyze requires --input"))?;
    let out_dir = args
        .out_dir
        .clone()
        .or(cfg.get_str("out-dir").map(PathBuf::from))
        .ok_or_else(|| CliError::usage("analyze requires --out-dir"))?;
    let bin_width = resolve(&args.bin_width, cfg.get("bin-width")?, 0.05);
    let logit_bin_width = resolve(&args.logit_bin_width, cfg.get("logit-bin-width")?, 0.1);
    let include_imputed = args.include_imputed || cfg.get("include-imputed")?.unwrap_or(false);
    let strict = args.strict || cfg.get("strict")?.unwrap_or(false);
    let format = resolve(
        &args.format,
        super::simulate::parse_format(cfg.get_str("format"))?,
        crate::args::FormatArg::Jsonl,
    );
    let format = if args.format.is_none() && cfg.get_str("format").is_none() {
        trace_format(&input, None)
    } else {
        trace_format(&input, Some(format))
    };

    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", out_dir.display())))?;

    let echo = format!(
        "input={} bin-width={bin_width} logit-bin-width={logit_bin_width} \
         include-imputed={include_imputed} strict={strict}",
        input.display()
    );

    let traces = read_traces(&input, format, strict)?;
    let groups = group_by_prompt(traces);
    if groups.is_empty() {
        eprintln!("warning: no traces found in {}", input.display());
    }

    let mut all_stats: Vec<(String, VariationStats)> = Vec::new();
    for (prompt_id, runs) in &groups {
        if runs.len() < 2 {
            eprintln!(
                "warning: prompt {prompt_id:?} has a single run; alignment needs at least 2, skipped"
            );
            continue;
        }
        let aligned = align_to_divergence(runs).map_err(|e| CliError::data(e.to_string()))?;
        println!("{prompt_id}: common_prefix_len={}", aligned.common_prefix_len);
        if aligned.common_prefix_len == 0 {
            eprintln!("warning: prompt {prompt_id:?} diverges at step 0; nothing to aggregate");
        }
        for e in &aligned.ensembles {
            let stats = ensemble_stats(e).map_err(|e| CliError::data(e.to_string()))?;
            all_stats.push((prompt_id.clone(), stats));
        }
    }

    write_stats_table(&out_dir, &echo, &all_stats)?;
    write_histograms(&out_dir, &echo, &all_stats, include_imputed)?;

    let stats_only: Vec<VariationStats> = all_stats.iter().map(|(_, s)| s.clone()).collect();
    let prob_profile = bin_by_probability(&stats_only, bin_width, ProfileSource::Probs, include_imputed)
        .map_err(|e| CliError::usage(e.to_string()))?;
    write_profile(&out_dir.join("profile_probs.csv"), &echo, &prob_profile)?;

    let have_logits = stats_only.iter().any(|s| s.logit_range.is_some());
    if have_logits {
        let logit_profile =
            bin_by_probability(&stats_only, logit_bin_width, ProfileSource::Logits, include_imputed)
                .map_err(|e| CliError::usage(e.to_string()))?;
        write_profile(&out_dir.join("profile_logits.csv"), &echo, &logit_profile)?;
    }

    println!(
        "analyzed {} aligned steps over {} prompt(s); tables in {}",
        all_stats.len(),
        groups.len(),
        out_dir.display()
    );
    Ok(())
}

fn write_stats_table(
    out_dir: &std::path::Path,
    echo: &str,
    all_stats: &[(String, VariationStats)],
) -> CmdResult {
    let mut table = CsvTable::new(
        "analyze",
        echo,
        &[
            "prompt_id",
            "step",
            "token_id",
            "imputed",
            "n_runs",
            "mean_prob",
            "sigma",
            "range",
            "logit_sigma",
            "logit_range",
        ],
    );
    for (prompt_id, s) in all_stats {
        for c in 0..s.token_ids.len() {
            let logit_sigma = s.logit_sigma.as_ref().map(|v| v[c]).filter(|v| !v.is_nan());
            let logit_range = s.logit_range.as_ref().map(|v| v[c]).filter(|v| !v.is_nan());
            table.row([
                prompt_id.clone(),
                s.step_index.to_string(),
                s.token_ids[c].to_string(),
                (s.imputed[c] as u8).to_string(),
                s.n_runs.to_string(),
                fmt_f64(s.mean_prob[c]),
                fmt_f64(s.sigma[c]),
                fmt_f64(s.range[c]),
                opt_f64(logit_sigma),
                opt_f64(logit_range),
            ]);
        }
    }
    crate::report::write_output(&out_dir.join("stats.csv"), &table.into_bytes())
}

/// Distribution tables: range and sigma over log-spaced bins (their mass
/// sits many decades below 1), mean probability over linear bins.
fn write_histograms(
    out_dir: &std::path::Path,
    echo: &str,
    all_stats: &[(String, VariationStats)],
    include_imputed: bool,
) -> CmdResult {
    let mut ranges = Vec::new();
    let mut sigmas = Vec::new();
    let mut means = Vec::new();
    for (_, s) in all_stats {
        for c in 0..s.token_ids.len() {
            if s.imputed[c] && !include_imputed {
                continue;
            }
            ranges.push(s.range[c]);
            sigmas.push(s.sigma[c]);
            means.push(s.mean_prob[c]);
        }
    }
    let log_edges = log_edges_with_underflow(-8, 32);
    let linear = linear_edges(0.0, 1.0, 20);
    let tables = [
        ("range", distribution_histogram(&ranges, &log_edges)),
        ("sigma", distribution_histogram(&sigmas, &log_edges)),
        ("mean_prob", distribution_histogram(&means, &linear)),
    ];
    let mut table = CsvTable::new(
        "analyze",
        echo,
        &["metric", "bin_left", "bin_right", "count", "fraction"],
    );
    for (name, hist) in tables {
        let hist: Histogram = hist.map_err(|e| CliError::data(e.to_string()))?;
        for b in 0..hist.counts.len() {
            let fraction = hist.fractions.as_ref().map(|f| f[b]);
            table.row([
                name.to_string(),
                fmt_f64(hist.edges[b]),
                fmt_f64(hist.edges[b + 1]),
                hist.counts[b].to_string(),
                opt_f64(fraction),
            ]);
        }
    }
    crate::report::write_output(&out_dir.join("histograms.csv"), &table.into_bytes())
}

/// `[0, 10^lo)` underflow bin followed by `bins` log-spaced bins up to 1.
fn log_edges_with_underflow(lo: i32, bins: usize) -> Vec<f64> {
    let mut edges = vec![0.0];
    for i in 0..=bins {
        let exp = lo as f64 * (1.0 - i as f64 / bins as f64);
        edges.push(10f64.powf(exp));
    }
    if let Some(last) = edges.last_mut() {
        *last = 1.0;
    }
    edges
}

fn write_profile(path: &std::path::Path, echo: &str, profile: &BinnedProfile) -> CmdResult {
    let mut table = CsvTable::new(
        "analyze",
        echo,
        &["bin_left", "bin_right", "count", "mean_range", "mean_sigma"],
    );
    for b in 0..profile.n_bins() {
        table.row([
            fmt_f64(profile.bin_edges[b]),
            fmt_f64(profile.bin_edges[b + 1]),
            profile.count[b].to_string(),
            opt_f64(profile.mean_range[b]),
            opt_f64(profile.mean_sigma[b]),
        ]);
    }
    crate::report::write_output(path, &table.into_bytes())
}

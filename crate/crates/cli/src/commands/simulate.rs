//! `tokvar simulate`: generate multi-run traces from the synthetic model.

use tokvar_core::fpemu::{FloatFormat, ReductionPolicy};
use tokvar_core::simulator::{
    gen_model, simulate_ensemble, Arithmetic, MechanisticConfig, OrderEntropy, SimMode,
    SimulationConfig, DEFAULT_WEIGHT_SCALE,
};
use tokvar_core::trace::{write_traces, TraceFormat};

use crate::args::{FmtArg, FormatArg, ModeArg, PolicyArg, SimulateArgs};
use crate::config_file::{resolve, ConfigFile};
use crate::report::{header_line, write_output};
use crate::{CliError, CmdResult};

const KEYS: &[&str] = &[
    "vocab",
    "hidden-dim",
    "runs",
    "steps",
    "prompts",
    "fmt",
    "batch",
    "temperature",
    "seed",
    "scale",
    "top-k",
    "mode",
    "noise-s",
    "policy",
    "fused",
    "format",
    "out",
];

pub fn run(args: &SimulateArgs) -> CmdResult {
    let cfg = ConfigFile::load(args.config.as_deref(), KEYS)?;

    let vocab = resolve(&args.vocab, cfg.get("vocab")?, 1000);
    let hidden_dim = resolve(&args.hidden_dim, cfg.get("hidden-dim")?, 4096);
    let runs = resolve(&args.runs, cfg.get("runs")?, 50);
    let steps = resolve(&args.steps, cfg.get("steps")?, 100);
    let prompts = resolve(&args.prompts, cfg.get("prompts")?, 1);
    let batch = resolve(&args.batch, cfg.get("batch")?, 4);
    let temperature = resolve(&args.temperature, cfg.get("temperature")?, 1.0);
    let seed = resolve(&args.seed, cfg.get("seed")?, 0);
    let scale = resolve(&args.scale, cfg.get("scale")?, DEFAULT_WEIGHT_SCALE);
    let top_k = resolve(&args.top_k, cfg.get("top-k")?, 10);
    let fused = args.fused || cfg.get("fused")?.unwrap_or(false);
    let fmt = resolve(&args.fmt, parse_fmt(cfg.get_str("fmt"))?, FmtArg::Bf16);
    let mode = resolve(&args.mode, parse_mode(cfg.get_str("mode"))?, ModeArg::Mechanistic);
    let policy = resolve(&args.policy, parse_policy(cfg.get_str("policy"))?, PolicyArg::Tree);
    let noise_s = args.noise_s.or(cfg.get("noise-s")?);
    let format = resolve(&args.format, parse_format(cfg.get_str("format"))?, FormatArg::Jsonl);
    let out = args
        .out
        .clone()
        .or(cfg.get_str("out").map(std::path::PathBuf::from))
        .ok_or_else(|| CliError::usage("simulate requires --out (or `out = ...` in the config)"))?;

    if prompts == 0 {
        return Err(CliError::usage("prompts must be at least 1"));
    }
    let sim_mode = match mode {
        ModeArg::Mechanistic => {
            if noise_s.is_some() {
                return Err(CliError::usage(
                    "--noise-s only applies to --mode gaussian; mechanistic noise comes from \
                     accumulation order",
                ));
            }
            let arithmetic = match fmt {
                FmtArg::Bf16 => Arithmetic::Reduced(FloatFormat::bf16()),
                FmtArg::Fp16 => Arithmetic::Reduced(FloatFormat::fp16()),
                FmtArg::Fp32 => Arithmetic::Reduced(FloatFormat::fp32()),
                FmtArg::Exact => Arithmetic::Exact,
            };
            let entropy = OrderEntropy::from_batch_size(batch)
                .map_err(|e| CliError::usage(e.to_string()))?;
            let mut mech = MechanisticConfig::new(arithmetic, entropy);
            mech.policy = match policy {
                PolicyArg::Tree => ReductionPolicy::PairwiseTree,
                PolicyArg::Sequential => ReductionPolicy::RandomPermutation,
            };
            mech.fused = fused;
            SimMode::Mechanistic(mech)
        }
        ModeArg::Gaussian => {
            let s = noise_s.ok_or_else(|| {
                CliError::usage("--mode gaussian requires --noise-s (the logit noise scale)")
            })?;
            if s < 0.0 || !s.is_finite() {
                return Err(CliError::usage(format!("noise-s must be >= 0, got {s}")));
            }
            SimMode::Gaussian { noise_std: s }
        }
    };

    let echo = format!(
        "vocab={vocab} hidden-dim={hidden_dim} runs={runs} steps={steps} prompts={prompts} \
         mode={} fmt={} batch={batch} policy={} fused={fused} noise-s={} temperature={temperature} \
         seed={seed} scale={scale} top-k={top_k} format={}",
        label_mode(mode),
        label_fmt(fmt),
        label_policy(policy),
        noise_s.map(|s| s.to_string()).unwrap_or_else(|| "-".into()),
        label_format(format),
    );

    let model =
        gen_model(vocab, hidden_dim, seed, scale).map_err(|e| CliError::usage(e.to_string()))?;
    let sim_cfg = SimulationConfig {
        steps,
        n_runs: runs,
        temperature,
        top_k,
        mode: sim_mode,
    };

    // Assemble the whole file in memory first: a failed simulation must not
    // leave a partial file behind.
    let mut bytes = header_line("simulate", &echo).into_bytes();
    let mut any_overflow = false;
    let mut n_traces = 0usize;
    let trace_format = match format {
        FormatArg::Jsonl => TraceFormat::Jsonl,
        FormatArg::Csv => TraceFormat::Csv,
    };
    let mut all_traces = Vec::new();
    for prompt in 0..prompts {
        let out = simulate_ensemble(&model, prompt, &sim_cfg)
            .map_err(|e| CliError::usage(e.to_string()))?;
        any_overflow |= out.any_overflow;
        n_traces += out.traces.len();
        all_traces.extend(out.traces);
    }
    write_traces(&mut bytes, &all_traces, trace_format)
        .map_err(|e| CliError::data(e.to_string()))?;
    write_output(&out, &bytes)?;

    if any_overflow {
        eprintln!("warning: some dot products overflowed and were saturated");
    }
    println!(
        "wrote {n_traces} traces ({prompts} prompt(s) x {runs} runs, {steps} steps) to {}",
        out.display()
    );
    Ok(())
}

fn parse_fmt(raw: Option<&str>) -> Result<Option<FmtArg>, CliError> {
    parse_enum(raw, &[
        ("bf16", FmtArg::Bf16),
        ("fp16", FmtArg::Fp16),
        ("fp32", FmtArg::Fp32),
        ("exact", FmtArg::Exact),
    ])
}

fn parse_mode(raw: Option<&str>) -> Result<Option<ModeArg>, CliError> {
    parse_enum(raw, &[
        ("mechanistic", ModeArg::Mechanistic),
        ("gaussian", ModeArg::Gaussian),
    ])
}

fn parse_policy(raw: Option<&str>) -> Result<Option<PolicyArg>, CliError> {
    parse_enum(raw, &[
        ("tree", PolicyArg::Tree),
        ("sequential", PolicyArg::Sequential),
    ])
}

pub(crate) fn parse_format(raw: Option<&str>) -> Result<Option<FormatArg>, CliError> {
    parse_enum(raw, &[("jsonl", FormatArg::Jsonl), ("csv", FormatArg::Csv)])
}

fn parse_enum<T: Copy>(raw: Option<&str>, table: &[(&str, T)]) -> Result<Option<T>, CliError> {
    let Some(raw) = raw else { return Ok(None) };
    table
        .iter()
        .find(|(name, _)| *name == raw)
        .map(|&(_, v)| Some(v))
        .ok_or_else(|| {
            let names: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
            CliError::usage(format!("invalid value {raw:?} (expected one of {})", names.join(", ")))
        })
}

fn label_fmt(f: FmtArg) -> &'static str {
    match f {
        FmtArg::Bf16 => "bf16",
        FmtArg::Fp16 => "fp16",
        FmtArg::Fp32 => "fp32",
        FmtArg::Exact => "exact",
    }
}

fn label_mode(m: ModeArg) -> &'static str {
    match m {
        ModeArg::Mechanistic => "mechanistic",
        ModeArg::Gaussian => "gaussian",
    }
}

fn label_policy(p: PolicyArg) -> &'static str {
    match p {
        PolicyArg::Tree => "tree",
        PolicyArg::Sequential => "sequential",
    }
}

pub(crate) fn label_format(f: FormatArg) -> &'static str {
    match f {
        FormatArg::Jsonl => "jsonl",
        FormatArg::Csv => "csv",
    }
}

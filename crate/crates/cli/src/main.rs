//! Command-line front end: convert float models, run the engine over feature
//! files, sweep delta thresholds, decode logits, and generate synthetic
//! models/features for reproducible experiments.
//!
//! Exit codes: 0 ok, 2 model error, 3 dimension/config error, 4 data error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use edgedrnn_core::engine::{self, NluTables};
use edgedrnn_core::fixedpoint::{dequantize, QFormat};
use edgedrnn_core::io;
use edgedrnn_core::model::{convert, NetworkConfig, PackedModel};
use edgedrnn_core::perfmodel::{HwConfig, PerfReport, RunSummary, TraceCollector};
use edgedrnn_core::synth::{self, FeatureProfile};
use edgedrnn_core::{decoder, Error};

const EXIT_MODEL: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_DATA: u8 = 4;

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn model(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_MODEL,
            message: e.to_string(),
        }
    }

    fn config(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }
    }

    fn data(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_DATA,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn parse_theta(s: &str) -> Result<i16, String> {
    let v = if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        i32::from_str_radix(hex, 16)
    } else {
        s.parse::<i32>()
    }
    .map_err(|e| format!("bad threshold {s:?}: {e}"))?;
    if !(0..=i16::MAX as i32).contains(&v) {
        return Err(format!("threshold {s} out of range 0..=0x7FFF"));
    }
    Ok(v as i16)
}

fn parse_qformat(s: &str) -> Result<QFormat, String> {
    s.parse::<QFormat>().map_err(|e| e.to_string())
}

#[derive(Parser)]
#[command(name = "edgedrnn", version, about = "Delta-threshold GRU engine and datapath performance model", long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a float model directory into a packed model file
    Convert(ConvertArgs),
    /// Run the engine over a feature file and report sparsity/performance
    Run(RunArgs),
    /// Sweep delta thresholds and emit one CSV row per threshold
    Bench(BenchArgs),
    /// Greedy-decode logits and score word error rate against transcripts
    Decode(DecodeArgs),
    /// Generate a seeded random float model directory
    GenModel(GenModelArgs),
    /// Generate a seeded synthetic feature file
    GenFeatures(GenFeaturesArgs),
}

#[derive(Args)]
struct HwArgs {
    /// Number of processing elements
    #[arg(long = "pes", default_value_t = 8)]
    pes: usize,
    /// Clock frequency in Hz
    #[arg(long = "freq", default_value_t = 125e6)]
    freq: f64,
    /// Extra cycles charged per fetched weight column
    #[arg(long = "col-overhead", default_value_t = 0)]
    col_overhead: u64,
    /// Charge the one-element-per-cycle delta scan instead of overlapping it
    #[arg(long = "no-du-overlap")]
    no_du_overlap: bool,
}

impl HwArgs {
    fn to_config(&self) -> CliResult<HwConfig> {
        if self.pes == 0 || !(self.freq.is_finite() && self.freq > 0.0) {
            return Err(CliError::config("PE count and frequency must be positive"));
        }
        Ok(HwConfig {
            pe_count: self.pes,
            clock_hz: self.freq,
            col_overhead_cycles: self.col_overhead,
            du_overlapped: !self.no_du_overlap,
            ..HwConfig::default()
        })
    }
}

#[derive(Args)]
struct ConvertArgs {
    /// Float model directory holding manifest.json plus tensor blobs
    #[arg(long = "model-dir")]
    model_dir: PathBuf,
    /// Output packed model path
    #[arg(long = "out")]
    out: PathBuf,
    /// Delta threshold stored in the model (raw Q8.8, hex like 0x40 accepted)
    #[arg(long = "theta", value_parser = parse_theta, default_value = "0x40")]
    theta: i16,
    /// Activation format
    #[arg(long = "act-format", value_parser = parse_qformat, default_value = "Q8.8")]
    act_format: QFormat,
    /// Weight format (8- or 16-bit)
    #[arg(long = "wgt-format", value_parser = parse_qformat, default_value = "Q1.7")]
    wgt_format: QFormat,
}

#[derive(Args)]
struct RunArgs {
    /// Packed model file
    #[arg(long = "model")]
    model: PathBuf,
    /// Feature file (FEAT binary, or CSV floats by .csv extension)
    #[arg(long = "features")]
    features: PathBuf,
    /// Cap on the number of timesteps consumed
    #[arg(long = "steps")]
    steps: Option<usize>,
    /// Override the model's delta threshold (hex accepted)
    #[arg(long = "theta", value_parser = parse_theta)]
    theta: Option<i16>,
    /// Write per-timestep outputs here (FEAT, or CSV by extension)
    #[arg(long = "logits")]
    logits: Option<PathBuf>,
    /// Write the per-timestep trace CSV here
    #[arg(long = "trace")]
    trace: Option<PathBuf>,
    /// Write the JSON summary here (always printed to stdout)
    #[arg(long = "summary")]
    summary: Option<PathBuf>,
    #[command(flatten)]
    hw: HwArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long = "model")]
    model: PathBuf,
    #[arg(long = "features")]
    features: PathBuf,
    /// Comma-separated threshold list, e.g. 0x00,0x08,0x40,0x80
    #[arg(long = "sweep", value_parser = parse_theta, value_delimiter = ',', required = true)]
    sweep: Vec<i16>,
    #[arg(long = "steps")]
    steps: Option<usize>,
    /// Output CSV path (stdout when omitted)
    #[arg(long = "out")]
    out: Option<PathBuf>,
    #[command(flatten)]
    hw: HwArgs,
}

#[derive(Args)]
struct DecodeArgs {
    /// Logit utterances: concatenated FEAT records, or CSV with blank-line
    /// separated blocks
    #[arg(long = "logits")]
    logits: PathBuf,
    /// Transcripts, one whitespace-separated token-index line per utterance
    #[arg(long = "refs")]
    refs: PathBuf,
    /// Blank label index
    #[arg(long = "blank", default_value_t = 0)]
    blank: usize,
}

#[derive(Args)]
struct GenModelArgs {
    #[arg(long = "layers")]
    layers: usize,
    #[arg(long = "input")]
    input: usize,
    #[arg(long = "hidden")]
    hidden: usize,
    #[arg(long = "seed")]
    seed: u64,
    /// Output directory for manifest.json plus tensor blobs
    #[arg(long = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct GenFeaturesArgs {
    #[arg(long = "steps")]
    steps: usize,
    #[arg(long = "dim")]
    dim: usize,
    #[arg(long = "seed")]
    seed: u64,
    /// Temporal profile: iid or bandlimited
    #[arg(long = "profile", default_value = "bandlimited")]
    profile: String,
    /// Output path (FEAT binary, or CSV floats by .csv extension)
    #[arg(long = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Convert(args) => cmd_convert(args),
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Decode(args) => cmd_decode(args),
        Command::GenModel(args) => cmd_gen_model(args),
        Command::GenFeatures(args) => cmd_gen_features(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn cmd_convert(args: ConvertArgs) -> CliResult<()> {
    let (params, layers, input, hidden) =
        io::load_float_dir(&args.model_dir).map_err(CliError::model)?;
    let cfg = NetworkConfig {
        layers,
        input_size: input,
        hidden_size: hidden,
        theta_raw: args.theta,
        act_fmt: args.act_format,
        wgt_fmt: args.wgt_format,
    };
    let model = convert(&params, &cfg).map_err(CliError::model)?;
    io::save_packed(&model, &args.out).map_err(CliError::model)?;
    println!(
        "packed {}: L={} N={} M={} act={} wgt={} theta=0x{:02X}",
        args.out.display(),
        cfg.layers,
        cfg.input_size,
        cfg.hidden_size,
        cfg.act_fmt,
        cfg.wgt_fmt,
        cfg.theta_raw
    );
    println!(
        "weights: {}, file bytes: {}",
        model.weight_count(),
        model.file_len()
    );
    Ok(())
}

fn load_features_any(path: &Path, act: QFormat) -> CliResult<(usize, Vec<Vec<i16>>)> {
    let loaded = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        io::load_features_csv(path, act)
    } else {
        io::load_features(path)
    };
    loaded.map_err(CliError::data)
}

fn write_outputs(path: &Path, dim: usize, rows: &[Vec<i16>], act: QFormat) -> CliResult<()> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let mut text = String::new();
        for row in rows {
            let cells: Vec<String> = row
                .iter()
                .map(|&v| format!("{}", dequantize(v as i32, act)))
                .collect();
            let _ = writeln!(text, "{}", cells.join(","));
        }
        std::fs::write(path, text)
            .map_err(|e| CliError::data(Error::Io { path: path.into(), source: e }))
    } else {
        io::save_features(path, dim, rows).map_err(CliError::data)
    }
}

/// Shared run core: applies overrides, streams the engine over the features,
/// and returns the outputs together with the performance report.
fn execute(
    model: &PackedModel,
    feats: &[Vec<i16>],
    steps: Option<usize>,
    hw: &HwConfig,
    keep_outputs: bool,
) -> CliResult<(Vec<Vec<i16>>, PerfReport)> {
    let cfg = &model.config;
    let steps = steps.unwrap_or(usize::MAX).min(feats.len());
    let tables = NluTables::new(cfg.act_fmt).map_err(CliError::config)?;
    let mut state = engine::reset(model);
    let mut collector = TraceCollector::new(cfg, hw);
    let mut outputs = Vec::new();
    for x in &feats[..steps] {
        let trace = engine::step_with_tables(model, &mut state, x, &tables)
            .map_err(CliError::config)?;
        collector.add(&trace).map_err(CliError::config)?;
        if keep_outputs {
            outputs.push(trace.h_out);
        }
    }
    let (_, report) = collector.finish().map_err(CliError::data)?;
    Ok((outputs, report))
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let mut model = io::load_packed(&args.model).map_err(CliError::model)?;
    if let Some(theta) = args.theta {
        model.config.theta_raw = theta;
    }
    let hw = args.hw.to_config()?;
    let (dim, feats) = load_features_any(&args.features, model.config.act_fmt)?;
    if !feats.is_empty() && dim != model.config.input_size {
        return Err(CliError::config(format!(
            "feature dimension {dim} does not match model input size {}",
            model.config.input_size
        )));
    }
    let (outputs, report) = execute(&model, &feats, args.steps, &hw, true)?;

    if let Some(path) = &args.logits {
        write_outputs(path, model.config.hidden_size, &outputs, model.config.act_fmt)?;
    }
    if let Some(path) = &args.trace {
        std::fs::write(path, report.timestep_csv())
            .map_err(|e| CliError::data(Error::Io { path: path.into(), source: e }))?;
    }

    let summary = RunSummary::new(&report, model.config.theta_raw, &hw);
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::data(format!("summary: {e}")))?;
    if let Some(path) = &args.summary {
        std::fs::write(path, &json)
            .map_err(|e| CliError::data(Error::Io { path: path.into(), source: e }))?;
    }
    println!(
        "model: L={} N={} M={} theta=0x{:02X} act={} wgt={}",
        model.config.layers,
        model.config.input_size,
        model.config.hidden_size,
        model.config.theta_raw,
        model.config.act_fmt,
        model.config.wgt_fmt
    );
    println!(
        "steps: {}  gamma_dx {:.4}  gamma_dh {:.4}",
        report.timesteps, report.sparsity.gamma_dx, report.sparsity.gamma_dh
    );
    println!(
        "latency us: mean {:.3} (min {:.3}, max {:.3})  throughput GOp/s: mean {:.3} (min {:.3}, max {:.3})",
        summary.mean_latency_us,
        summary.min_latency_us,
        summary.max_latency_us,
        summary.mean_throughput_gops,
        summary.min_throughput_gops,
        summary.max_throughput_gops
    );
    println!(
        "estimate: {:.3} us / {:.3} GOp/s  (sim-vs-est rel err {:.4})",
        summary.est_latency_us, summary.est_throughput_gops, summary.sim_vs_est_rel_err
    );
    println!("{json}");
    Ok(())
}

const BENCH_CSV_HEADER: &str = "theta_raw,mean_latency_us,min_latency_us,max_latency_us,\
mean_throughput_gops,min_throughput_gops,max_throughput_gops,gamma_dx,gamma_dh,\
est_latency_us,est_throughput_gops,rel_err";

fn cmd_bench(args: BenchArgs) -> CliResult<()> {
    let model = io::load_packed(&args.model).map_err(CliError::model)?;
    let hw = args.hw.to_config()?;
    let (dim, feats) = load_features_any(&args.features, model.config.act_fmt)?;
    if !feats.is_empty() && dim != model.config.input_size {
        return Err(CliError::config(format!(
            "feature dimension {dim} does not match model input size {}",
            model.config.input_size
        )));
    }
    let mut sweep = args.sweep.clone();
    sweep.sort_unstable();
    sweep.dedup();

    // sweep points are independent: one engine state and model copy each
    let rows: Vec<(i16, String)> = sweep
        .par_iter()
        .map(|&theta| -> CliResult<(i16, String)> {
            let mut m = model.clone();
            m.config.theta_raw = theta;
            let (_, report) = execute(&m, &feats, args.steps, &hw, false)?;
            let s = RunSummary::new(&report, theta, &hw);
            Ok((
                theta,
                format!(
                    "0x{theta:02X},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    s.mean_latency_us,
                    s.min_latency_us,
                    s.max_latency_us,
                    s.mean_throughput_gops,
                    s.min_throughput_gops,
                    s.max_throughput_gops,
                    s.gamma_dx,
                    s.gamma_dh,
                    s.est_latency_us,
                    s.est_throughput_gops,
                    s.sim_vs_est_rel_err
                ),
            ))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut csv = String::from(BENCH_CSV_HEADER);
    csv.push('\n');
    for (_, row) in &rows {
        csv.push_str(row);
        csv.push('\n');
    }
    match &args.out {
        Some(path) => std::fs::write(path, &csv)
            .map_err(|e| CliError::data(Error::Io { path: path.into(), source: e }))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_decode(args: DecodeArgs) -> CliResult<()> {
    let utterances = io::load_logits(&args.logits).map_err(CliError::data)?;
    let refs = io::load_transcripts(&args.refs).map_err(CliError::data)?;
    if utterances.len() != refs.len() {
        return Err(CliError::data(format!(
            "{} logit utterances but {} reference lines",
            utterances.len(),
            refs.len()
        )));
    }
    let mut total_edits = 0usize;
    let mut total_tokens = 0usize;
    for (i, (logits, reference)) in utterances.iter().zip(&refs).enumerate() {
        if reference.is_empty() {
            return Err(CliError::data(Error::EmptyReference));
        }
        if reference.contains(&args.blank) {
            return Err(CliError::data(format!(
                "reference {i} contains the blank index {}",
                args.blank
            )));
        }
        let hyp = decoder::greedy_decode(logits, args.blank).map_err(CliError::data)?;
        let edits = decoder::levenshtein(&hyp.tokens, reference);
        let wer = edits as f64 / reference.len() as f64;
        total_edits += edits;
        total_tokens += reference.len();
        println!(
            "utt {i}: wer {wer:.3} ({edits} edits / {} ref tokens)",
            reference.len()
        );
    }
    println!(
        "aggregate: wer {:.3} ({total_edits} edits / {total_tokens} ref tokens)",
        total_edits as f64 / total_tokens as f64
    );
    Ok(())
}

fn cmd_gen_model(args: GenModelArgs) -> CliResult<()> {
    if args.layers == 0 || args.input == 0 || args.hidden == 0 {
        return Err(CliError::config("layers, input and hidden must be >= 1"));
    }
    let params = synth::gen_model(args.layers, args.input, args.hidden, args.seed);
    io::save_float_dir(&params, &args.out).map_err(CliError::model)?;
    println!(
        "wrote float model L={} N={} M={} seed={} -> {}",
        args.layers,
        args.input,
        args.hidden,
        args.seed,
        args.out.display()
    );
    Ok(())
}

fn cmd_gen_features(args: GenFeaturesArgs) -> CliResult<()> {
    if args.dim == 0 {
        return Err(CliError::config("dim must be >= 1"));
    }
    let profile: FeatureProfile = args.profile.parse().map_err(CliError::config)?;
    let act = QFormat::q8_8();
    if args.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        let rows = synth::gen_features(args.steps, args.dim, args.seed, profile);
        let mut text = String::new();
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(text, "{}", cells.join(","));
        }
        std::fs::write(&args.out, text)
            .map_err(|e| CliError::data(Error::Io { path: args.out.clone(), source: e }))?;
    } else {
        let rows = synth::gen_features_q(args.steps, args.dim, args.seed, profile, act);
        io::save_features(&args.out, args.dim, &rows).map_err(CliError::data)?;
    }
    println!(
        "wrote {} steps x {} dims ({}) -> {}",
        args.steps,
        args.dim,
        args.profile,
        args.out.display()
    );
    Ok(())
}

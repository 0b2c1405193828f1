//! `abrsim`: run shared-bottleneck streaming experiments, solve the static
//! rung-assignment problem, and manage bandwidth trace datasets.

mod output;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use abrsim_core::agents::AgentSpec;
use abrsim_core::harness::{aggregate, metrics_csv, run_experiment, steps_jsonl, Experiment};
use abrsim_core::media::{load_profiles, ProfileSet};
use abrsim_core::metrics::QoeCoefficients;
use abrsim_core::sim::SharingMode;
use abrsim_core::tiopt::{self, ladders_of, uniform_grid};
use abrsim_core::traces::{
    ingest_files, read_samples_csv, split_dataset, synth, undersample, Dataset, Split, Trace,
    TraceClass, DEFAULT_SCALE, DEFAULT_TRACE_LEN_S,
};

#[derive(Parser)]
#[command(
    name = "abrsim",
    version,
    about = "Simulate adaptive-bitrate clients sharing a bottleneck link"
)]
struct Cli {
    /// TOML config file supplying defaults; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode per selected trace and print aggregated metrics.
    Run(RunArgs),
    /// Optimal static rung assignment for one bandwidth cap and alpha.
    Solve(SolveArgs),
    /// Non-dominated static assignments under one bandwidth cap.
    Pareto(ParetoArgs),
    /// Optimal assignments over an alpha x bandwidth grid.
    Sweep(SweepArgs),
    /// Bandwidth trace tooling: classify, ingest, generate, split.
    Traces {
        #[command(subcommand)]
        command: TracesCommand,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Agent specs, comma separated: one shared or one per client
    /// (min | max | random | greedy[:k=N]).
    #[arg(long)]
    agents: Option<String>,
    /// Bandwidth sharing: proportional or minerva.
    #[arg(long)]
    sharing: Option<String>,
    /// Client profiles TOML; omit for the built-in four-client set.
    #[arg(long, value_name = "FILE")]
    profiles: Option<PathBuf>,
    /// Trace dataset manifest to draw traces from.
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Synthesize traces instead: class:count list, e.g. "high:20,low:20".
    #[arg(long, value_name = "SPEC")]
    synth: Option<String>,
    /// Keep only this split of the manifest (train | validation | test).
    #[arg(long)]
    split: Option<String>,
    /// Keep only these classes, comma separated.
    #[arg(long)]
    classes: Option<String>,
    /// Master seed; per-episode seeds derive from it and the trace id.
    #[arg(long)]
    seed: Option<u64>,
    /// Reward blend between own QoE and fairness.
    #[arg(long)]
    alpha: Option<f64>,
    /// QoE moving-average smoothing factor.
    #[arg(long)]
    kappa: Option<f64>,
    /// Quality smoothing bonus coefficient.
    #[arg(long)]
    delta: Option<f64>,
    /// Startup stall penalty rate per second.
    #[arg(long)]
    lambda_init: Option<f64>,
    /// Rebuffering stall penalty rate per second.
    #[arg(long)]
    lambda_reb: Option<f64>,
    /// Segments each client downloads.
    #[arg(long)]
    num_segments: Option<u32>,
    /// Playback seconds per segment.
    #[arg(long)]
    segment_duration: Option<f64>,
    /// Client buffer capacity in seconds.
    #[arg(long)]
    buffer_capacity: Option<f64>,
    /// Segments required before playback starts.
    #[arg(long)]
    startup_segments: Option<u32>,
    /// Write results into this directory instead of stdout.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Output format: csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Also write every step of every episode as JSON lines.
    #[arg(long)]
    save_logs: bool,
}

#[derive(Args)]
struct SolveArgs {
    /// Total bandwidth cap in Mbps.
    #[arg(long)]
    bw: f64,
    /// Objective blend between mean quality and fairness.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_name = "FILE")]
    profiles: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct ParetoArgs {
    /// Total bandwidth cap in Mbps.
    #[arg(long)]
    bw: f64,
    #[arg(long, value_name = "FILE")]
    profiles: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// Number of uniform alpha values over [0, 1].
    #[arg(long, default_value_t = 100)]
    alpha_steps: usize,
    /// Bandwidth axis as lo:hi:steps, in Mbps.
    #[arg(long, default_value = "0:90:100")]
    bw: String,
    #[arg(long, value_name = "FILE")]
    profiles: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// Write cell table and the quality/fairness matrices here.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum TracesCommand {
    /// Classify trace CSV files and print their statistics.
    Classify {
        /// Trace files (timestamp_s,bandwidth_mbps rows).
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Trace duration in seconds (the last sample holds until here).
        #[arg(long, default_value_t = DEFAULT_TRACE_LEN_S)]
        duration: f64,
    },
    /// Cut raw bandwidth logs into scaled fixed-length traces.
    Ingest {
        /// Raw source files (timestamp_s,bandwidth_mbps rows).
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Dataset directory to write the manifest and traces into.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Window length in seconds.
        #[arg(long, default_value_t = DEFAULT_TRACE_LEN_S)]
        trace_len: f64,
        /// Bandwidth scale factor applied to every sample.
        #[arg(long, default_value_t = DEFAULT_SCALE)]
        scale: f64,
        /// Cap each class at this many traces, drawn evenly over mean
        /// bandwidth.
        #[arg(long)]
        undersample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate synthetic traces of the requested classes.
    Gen {
        /// Classes to generate, comma separated, or "all".
        #[arg(long, default_value = "all")]
        classes: String,
        /// Traces per class.
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dataset directory to write the manifest and traces into.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Assign train/validation/test splits within each class.
    Split {
        /// Dataset manifest to split.
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the split dataset; defaults to the manifest's.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

/// Optional defaults loaded from `--config`; any flag given on the command
/// line takes precedence over these.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    agents: Option<String>,
    sharing: Option<String>,
    profiles: Option<PathBuf>,
    manifest: Option<PathBuf>,
    synth: Option<String>,
    split: Option<String>,
    classes: Option<String>,
    seed: Option<u64>,
    alpha: Option<f64>,
    kappa: Option<f64>,
    delta: Option<f64>,
    lambda_init: Option<f64>,
    lambda_reb: Option<f64>,
    num_segments: Option<u32>,
    segment_duration: Option<f64>,
    buffer_capacity: Option<f64>,
    startup_segments: Option<u32>,
    out: Option<PathBuf>,
    format: Option<String>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => bail!("unknown format '{other}' (expected csv or json)"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let config = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Run(args) => cmd_run(args, &config),
        Command::Solve(args) => cmd_solve(args, &config),
        Command::Pareto(args) => cmd_pareto(args, &config),
        Command::Sweep(args) => cmd_sweep(args, &config),
        Command::Traces { command } => cmd_traces(command),
    }
}

fn resolve_profiles(flag: Option<PathBuf>, config: &FileConfig) -> Result<ProfileSet> {
    match flag.or_else(|| config.profiles.clone()) {
        Some(path) => {
            load_profiles(&path).with_context(|| format!("loading profiles {}", path.display()))
        }
        None => Ok(ProfileSet::builtin_default()),
    }
}

fn resolve_format(flag: Option<String>, config: &FileConfig) -> Result<Format> {
    flag.or_else(|| config.format.clone())
        .as_deref()
        .map_or(Ok(Format::Csv), Format::from_str)
}

fn parse_agents(text: &str) -> Result<Vec<AgentSpec>> {
    text.split(',')
        .map(|s| AgentSpec::from_str(s).map_err(Into::into))
        .collect()
}

fn parse_classes(text: &str) -> Result<Vec<TraceClass>> {
    if text.eq_ignore_ascii_case("all") {
        return Ok(TraceClass::ALL.to_vec());
    }
    text.split(',')
        .map(|s| TraceClass::from_str(s.trim()).map_err(Into::into))
        .collect()
}

/// Parses a synth spec like "high:20,low:20" into per-class counts.
fn parse_synth_spec(text: &str) -> Result<Vec<(TraceClass, usize)>> {
    text.split(',')
        .map(|part| {
            let (class, count) = part
                .split_once(':')
                .with_context(|| format!("synth spec '{part}' is not class:count"))?;
            let class = TraceClass::from_str(class.trim())?;
            let count: usize = count
                .trim()
                .parse()
                .with_context(|| format!("bad trace count in '{part}'"))?;
            Ok((class, count))
        })
        .collect()
}

fn write_or_print(text: &str, out: Option<&Path>, filename: &str) -> Result<()> {
    match out {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(dir) => {
            fs::create_dir_all(dir)
                .with_context(|| format!("creating output directory {}", dir.display()))?;
            let path = dir.join(filename);
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn cmd_run(args: RunArgs, config: &FileConfig) -> Result<()> {
    let profiles = resolve_profiles(args.profiles, config)?;
    let format = resolve_format(args.format, config)?;
    let agents_text = args
        .agents
        .or_else(|| config.agents.clone())
        .unwrap_or_else(|| "min".to_string());
    let agents = parse_agents(&agents_text)?;

    let mut exp = Experiment::new(profiles, agents);
    if let Some(s) = args.sharing.or_else(|| config.sharing.clone()) {
        exp.sharing = SharingMode::from_str(&s)?;
    }
    exp.master_seed = args.seed.or(config.seed).unwrap_or(0);
    if let Some(v) = args.alpha.or(config.alpha) {
        exp.alpha = v;
    }
    if let Some(v) = args.kappa.or(config.kappa) {
        exp.kappa = v;
    }
    let mut coeffs = QoeCoefficients::default();
    if let Some(v) = args.delta.or(config.delta) {
        coeffs.delta = v;
    }
    if let Some(v) = args.lambda_init.or(config.lambda_init) {
        coeffs.lambda_init = v;
    }
    if let Some(v) = args.lambda_reb.or(config.lambda_reb) {
        coeffs.lambda_reb = v;
    }
    exp.coeffs = coeffs;
    if let Some(v) = args.num_segments.or(config.num_segments) {
        exp.num_segments = v;
    }
    if let Some(v) = args.segment_duration.or(config.segment_duration) {
        exp.segment_duration_s = v;
    }
    if let Some(v) = args.buffer_capacity.or(config.buffer_capacity) {
        exp.buffer_capacity_s = v;
    }
    if let Some(v) = args.startup_segments.or(config.startup_segments) {
        exp.startup_segments = v;
    }

    let classes = args
        .classes
        .or_else(|| config.classes.clone())
        .map(|text| parse_classes(&text))
        .transpose()?;
    let split = args
        .split
        .or_else(|| config.split.clone())
        .map(|s| Split::from_str(&s).map_err(anyhow::Error::from))
        .transpose()?;

    let manifest = args.manifest.or_else(|| config.manifest.clone());
    let synth_spec = args.synth.or_else(|| config.synth.clone());
    let dataset = match (manifest, synth_spec) {
        (Some(_), Some(_)) => bail!("give either --manifest or --synth, not both"),
        (Some(path), None) => {
            let dataset = Dataset::load(&path)
                .with_context(|| format!("loading manifest {}", path.display()))?;
            dataset.filtered(classes.as_deref(), split)
        }
        (None, Some(spec)) => {
            let mut traces = Vec::new();
            for (class, count) in parse_synth_spec(&spec)? {
                traces.extend(synth(class, count, exp.master_seed));
            }
            Dataset::from_traces(traces)?.filtered(classes.as_deref(), split)
        }
        (None, None) => bail!("no trace source: give --manifest or --synth"),
    };

    let runs = run_experiment(&exp, &dataset)?;
    let rows = aggregate(&exp, &runs);
    let out = args.out.or_else(|| config.out.clone());
    match format {
        Format::Csv => write_or_print(&metrics_csv(&rows), out.as_deref(), "metrics.csv")?,
        Format::Json => {
            let text = serde_json::to_string_pretty(&rows)? + "\n";
            write_or_print(&text, out.as_deref(), "metrics.json")?;
        }
    }
    if args.save_logs {
        let dir = out
            .as_deref()
            .context("--save-logs needs --out to know where to write")?;
        write_or_print(&steps_jsonl(&runs), Some(dir), "steps.jsonl")?;
    }
    Ok(())
}

fn cmd_solve(args: SolveArgs, config: &FileConfig) -> Result<()> {
    let profiles = resolve_profiles(args.profiles, config)?;
    let format = resolve_format(args.format, config)?;
    let alpha = args.alpha.or(config.alpha).unwrap_or(0.25);
    let ladders = ladders_of(&profiles);
    let solution = tiopt::solve(&ladders, args.bw, alpha)?;
    match format {
        Format::Csv => print!("{}", output::solve_csv(&ladders, args.bw, alpha, &solution)),
        Format::Json => {
            let cell = tiopt::SweepCell {
                alpha,
                bw_cap_mbps: args.bw,
                solution,
            };
            println!("{}", serde_json::to_string_pretty(&cell)?);
        }
    }
    Ok(())
}

fn cmd_pareto(args: ParetoArgs, config: &FileConfig) -> Result<()> {
    let profiles = resolve_profiles(args.profiles, config)?;
    let format = resolve_format(args.format, config)?;
    let ladders = ladders_of(&profiles);
    let front = tiopt::pareto_front(&ladders, args.bw)?;
    match format {
        Format::Csv => print!("{}", output::pareto_csv(&ladders, args.bw, &front)),
        Format::Json => println!("{}", serde_json::to_string_pretty(&front)?),
    }
    Ok(())
}

/// Parses a bandwidth axis written as lo:hi:steps.
fn parse_bw_axis(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, steps] = parts.as_slice() else {
        bail!("bandwidth axis '{text}' is not lo:hi:steps");
    };
    let lo: f64 = lo.parse().context("bad axis low end")?;
    let hi: f64 = hi.parse().context("bad axis high end")?;
    let steps: usize = steps.parse().context("bad axis step count")?;
    if steps == 0 || hi < lo {
        bail!("bandwidth axis '{text}' is empty");
    }
    Ok(uniform_grid(steps, lo, hi))
}

fn cmd_sweep(args: SweepArgs, config: &FileConfig) -> Result<()> {
    let profiles = resolve_profiles(args.profiles, config)?;
    let format = resolve_format(args.format, config)?;
    if args.alpha_steps == 0 {
        bail!("--alpha-steps must be at least 1");
    }
    let alphas = uniform_grid(args.alpha_steps, 0.0, 1.0);
    let bws = parse_bw_axis(&args.bw)?;
    let ladders = ladders_of(&profiles);
    let grid = tiopt::sweep(&ladders, &alphas, &bws)?;

    match format {
        Format::Csv => {
            write_or_print(&output::sweep_cells_csv(&grid), args.out.as_deref(), "cells.csv")?;
            if let Some(dir) = args.out.as_deref() {
                let quality = output::sweep_matrix_csv(&grid, |s| s.mean_quality);
                let fairness = output::sweep_matrix_csv(&grid, |s| s.fairness);
                write_or_print(&quality, Some(dir), "mean_quality_matrix.csv")?;
                write_or_print(&fairness, Some(dir), "fairness_matrix.csv")?;
            }
        }
        Format::Json => {
            let text = serde_json::to_string(&grid)? + "\n";
            write_or_print(&text, args.out.as_deref(), "sweep.json")?;
        }
    }
    Ok(())
}

fn cmd_traces(command: TracesCommand) -> Result<()> {
    match command {
        TracesCommand::Classify { files, duration } => {
            println!("path,class,mean_mbps,std_mbps,cv");
            for path in files {
                let samples = read_samples_csv(&path)?;
                let trace = Trace::new(path.display().to_string(), samples, duration)
                    .with_context(|| {
                        format!(
                            "{} does not fit a {duration} s trace (try --duration)",
                            path.display()
                        )
                    })?;
                let stats = trace.stats();
                let class = stats
                    .classify()
                    .map(|c| c.to_string())
                    .unwrap_or_else(|_| "unclassifiable".to_string());
                println!(
                    "{},{},{},{},{}",
                    path.display(),
                    class,
                    output::sig(stats.mean_mbps),
                    output::sig(stats.std_mbps),
                    output::sig(stats.cv)
                );
            }
            Ok(())
        }
        TracesCommand::Ingest { files, out, trace_len, scale, undersample: cap, seed } => {
            let mut dataset = ingest_files(&files, trace_len, scale)?;
            let before = dataset.len();
            if let Some(cap) = cap {
                dataset = undersample(dataset, cap, seed);
            }
            let manifest = dataset.write(&out)?;
            println!(
                "ingested {} windows from {} files ({} kept) -> {}",
                before,
                files.len(),
                dataset.len(),
                manifest.display()
            );
            Ok(())
        }
        TracesCommand::Gen { classes, count, seed, out } => {
            let mut traces = Vec::new();
            for class in parse_classes(&classes)? {
                traces.extend(synth(class, count, seed));
            }
            let dataset = Dataset::from_traces(traces)?;
            let manifest = dataset.write(&out)?;
            println!("generated {} traces -> {}", dataset.len(), manifest.display());
            Ok(())
        }
        TracesCommand::Split { manifest, seed, out } => {
            let dataset = Dataset::load(&manifest)
                .with_context(|| format!("loading manifest {}", manifest.display()))?;
            let dataset = split_dataset(dataset, seed);
            let dir = match out {
                Some(dir) => dir,
                None => manifest
                    .parent()
                    .map(Path::to_path_buf)
                    .context("manifest path has no parent directory")?,
            };
            let path = dataset.write(&dir)?;
            let mut counts = String::new();
            for split in [Split::Train, Split::Validation, Split::Test] {
                let n = dataset
                    .entries
                    .iter()
                    .filter(|e| e.split == Some(split))
                    .count();
                let _ = write!(counts, "{split}={n} ");
            }
            println!("split {} traces: {}-> {}", dataset.len(), counts, path.display());
            Ok(())
        }
    }
}

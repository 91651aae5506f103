//! Command implementations behind the `drex` binary.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use drex_core::codec::{self, BenchClock, BenchOptions};
use drex_core::model::{DataItem, StorageNode};
use drex_core::perfmodel::{self, TimeModel};
use drex_core::schedulers::{self, DEFAULT_SCHEDULERS};
use drex_core::simulator::{self, csv_field, FailureMode, SimConfig, SimError, SimReport, SummaryRow, SUMMARY_HEADER};
use drex_core::trace_io::{self, ArrivalModel, RtPolicy, SizeModel, TraceSpec, WorkloadTrace, BYTES_PER_MB};

pub const COMPARE_HEADER: &str = "scheduler_a,scheduler_b,matched_items,throughput_a_mbs,throughput_b_mbs,delta_mbs";
pub const DEFAULT_RTS: [&str; 5] = ["0.9", "0.99", "0.999", "0.9999", "0.99999"];
pub const CALIBRATION_SIZES_MB: [usize; 4] = [1, 16, 64, 128];
pub const CALIBRATION_CONFIGS: [(usize, usize); 8] = [(3, 2), (4, 2), (5, 3), (6, 4), (6, 3), (8, 6), (9, 6), (10, 8)];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, missing or malformed input files.
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn internal(e: impl std::fmt::Display) -> CliError {
    CliError::Internal(e.to_string())
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Model(_) => internal(e),
        SimError::EmptyCatalog | SimError::Scheduler(_) | SimError::EmptyIntersection => input(e),
    }
}

#[derive(Debug, Parser)]
#[command(name = "drex", version, about = "Reliability-aware erasure-coded placement simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replay one trace under one scheduler.
    Simulate(SimulateArgs),
    /// Schedulers × reliability targets × seeds, one summary row per run.
    Sweep(SweepArgs),
    /// Throughput difference of two schedulers over the items both stored.
    Compare(CompareArgs),
    /// Benchmark the codec and fit the encode/decode time model.
    Calibrate(CalibrateArgs),
    /// Generate a synthetic workload trace.
    GenTrace(GenTraceArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    /// `off`, `daily`, or `forced:N` for exactly N failures.
    #[arg(long, default_value = "off")]
    pub failures: String,
    /// Days per year when converting annual failure rates to daily ones.
    #[arg(long, default_value_t = 365.0)]
    pub year_days: f64,
    /// Retention for trace rows that leave it blank.
    #[arg(long, default_value_t = trace_io::DEFAULT_RETENTION_DAYS)]
    pub retention_days: f64,
    /// Calibration CSV for the time model; the bundled table when omitted.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub count_recovery_io: bool,
    /// Skip the read and decode terms of the throughput denominator.
    #[arg(long)]
    pub no_read: bool,
    /// Time every scheduling call (makes the summary nondeterministic).
    #[arg(long)]
    pub measure_overhead: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value = "drex-sc")]
    pub scheduler: String,
    /// A fixed target in (0,1), or `sampler`.
    #[arg(long, default_value = "sampler")]
    pub rt: String,
    #[arg(long, env = "DREX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// JSON report path (one line).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Summary CSV path; stdout when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated; commas inside `ec(K,P)` are kept.
    #[arg(long)]
    pub schedulers: Option<String>,
    /// Comma-separated targets; `sampler` allowed.
    #[arg(long)]
    pub rts: Option<String>,
    /// Comma-separated seeds; defaults to the single `--seed`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long, env = "DREX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; all logical CPUs when omitted.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Summary CSV path; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON-lines file with every report.
    #[arg(long)]
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    #[arg(long, default_value = "sampler")]
    pub rt: String,
    #[arg(long, env = "DREX_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub output: PathBuf,
    /// Comma-separated payload sizes in MB.
    #[arg(long)]
    pub sizes_mb: Option<String>,
    /// Comma-separated `N:K` pairs.
    #[arg(long)]
    pub configs: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub median_of: usize,
    /// Replace wall-clock timing with a deterministic per-megabyte tick.
    #[arg(long)]
    pub fake_clock: bool,
    #[arg(long, default_value_t = 0.001)]
    pub fake_tick_s: f64,
    #[arg(long, env = "DREX_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    #[arg(long)]
    pub output: PathBuf,
    /// `meva` presets the shape below; explicit flags override it.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub mean_mb: Option<f64>,
    #[arg(long)]
    pub std_mb: Option<f64>,
    #[arg(long)]
    pub min_mb: Option<f64>,
    #[arg(long)]
    pub max_mb: Option<f64>,
    /// Resample sizes from an existing trace instead of a lognormal.
    #[arg(long)]
    pub sizes_from: Option<PathBuf>,
    #[arg(long)]
    pub span_days: Option<f64>,
    #[arg(long)]
    pub pin_extremes: Option<bool>,
    #[arg(long)]
    pub retention_days: Option<f64>,
    /// Fixed target written into every row; blank when omitted.
    #[arg(long)]
    pub rt: Option<f64>,
    #[arg(long, env = "DREX_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub repeat_to: Option<u64>,
    #[arg(long)]
    pub trim_to: Option<u64>,
}

/// Folds `--config FILE` entries into the argument list. Every `key=value`
/// line becomes `--key value` unless the command line already sets `--key`;
/// `key=true` becomes a bare `--key`, `key=false` is dropped.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(pos) = args.iter().position(|a| a == "--config" || a.starts_with("--config=")) else {
        return Ok(args);
    };
    let mut args = args;
    let path = if let Some(v) = args[pos].strip_prefix("--config=") {
        let v = v.to_string();
        args.remove(pos);
        v
    } else {
        let v = args.get(pos + 1).cloned().ok_or_else(|| input("--config needs a file"))?;
        args.drain(pos..pos + 2);
        v
    };
    let text = std::fs::read_to_string(&path).map_err(|e| input(format!("{path}: {e}")))?;
    let present: BTreeSet<String> = args
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| input(format!("{path}:{}: expected key=value", n + 1)))?;
        let (key, value) = (key.trim().trim_start_matches("--"), value.trim());
        if present.contains(key) {
            continue;
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            v => {
                args.push(format!("--{key}"));
                args.push(v.to_string());
            }
        }
    }
    Ok(args)
}

/// Splits on commas that are not inside parentheses.
pub fn split_list(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '(' => depth += 1,
            ')' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out.retain(|s| !s.is_empty());
    out
}

pub fn parse_failures(s: &str) -> Result<FailureMode, CliError> {
    match s.trim() {
        "off" => Ok(FailureMode::Off),
        "daily" => Ok(FailureMode::Daily),
        other => other
            .strip_prefix("forced:")
            .and_then(|n| n.parse().ok())
            .map(|count| FailureMode::Forced { count })
            .ok_or_else(|| input(format!("--failures {other:?}: expected off, daily or forced:N"))),
    }
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Everything a run needs besides the scheduler, RT policy and seed.
struct Workload {
    catalog: Vec<StorageNode>,
    trace: WorkloadTrace,
    time_model: TimeModel,
    catalog_label: String,
    trace_label: String,
    retention_days: f64,
    failure_mode: FailureMode,
    base: SimConfig,
}

impl Workload {
    fn load(args: &RunArgs) -> Result<Self, CliError> {
        let catalog = trace_io::load_catalog(&args.catalog).map_err(input)?;
        let trace = trace_io::load_trace(&args.trace).map_err(input)?;
        let time_model = match &args.calibration {
            Some(path) => {
                let samples = perfmodel::load_calibration(path).map_err(input)?;
                TimeModel::fit(&samples).map_err(input)?
            }
            None => TimeModel::default_calibrated(),
        };
        if args.year_days.is_nan() || args.year_days <= 0.0 {
            return Err(input("--year-days must be positive"));
        }
        if args.retention_days.is_nan() || args.retention_days <= 0.0 {
            return Err(input("--retention-days must be positive"));
        }
        let failure_mode = parse_failures(&args.failures)?;
        Ok(Workload {
            catalog,
            trace,
            time_model,
            catalog_label: stem(&args.catalog),
            trace_label: stem(&args.trace),
            retention_days: args.retention_days,
            failure_mode,
            base: SimConfig {
                seed: 0,
                failure_mode,
                year_days: args.year_days,
                read_once: !args.no_read,
                count_recovery_io: args.count_recovery_io,
                measure_overhead: args.measure_overhead,
            },
        })
    }

    fn items(&self, policy: RtPolicy, seed: u64) -> Result<Vec<DataItem>, CliError> {
        let items = self.trace.items(policy, seed, self.retention_days);
        for item in &items {
            item.validate().map_err(input)?;
        }
        Ok(items)
    }

    fn run(&self, scheduler: &str, policy: RtPolicy, seed: u64) -> Result<SimReport, CliError> {
        let items = self.items(policy, seed)?;
        let config = SimConfig {
            seed,
            failure_mode: self.failure_mode,
            ..self.base.clone()
        };
        simulator::run_named(&items, &self.catalog, scheduler, &self.time_model, &config).map_err(sim_error)
    }
}

fn parse_rt(s: &str) -> Result<RtPolicy, CliError> {
    s.parse::<RtPolicy>().map_err(input)
}

fn check_scheduler(name: &str) -> Result<(), CliError> {
    schedulers::from_name(name).map(|_| ()).map_err(input)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| input(format!("{}: {e}", path.display())))
}

/// Writes to `path`, or stdout when `None`.
fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes()).map_err(internal)?;
            w.flush().map_err(internal)
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(internal)?;
            out.flush().map_err(internal)
        }
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    check_scheduler(&args.scheduler)?;
    let policy = parse_rt(&args.rt)?;
    let workload = Workload::load(&args.run)?;
    let report = workload.run(&args.scheduler, policy, args.seed)?;
    if let Some(path) = &args.report {
        emit(Some(path), &format!("{}\n", report.to_json()))?;
    }
    let row = SummaryRow::from_report(&report, &workload.catalog_label, &workload.trace_label, &policy.to_string());
    emit(args.summary.as_deref(), &format!("{SUMMARY_HEADER}\n{}\n", row.to_csv()))
}

/// Sort key for sweep rows: fixed targets ascending, then the sampler.
fn rt_key(p: &RtPolicy) -> (u8, f64) {
    match p {
        RtPolicy::Fixed(v) => (0, *v),
        RtPolicy::Sampler => (1, 0.0),
    }
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let scheds: Vec<String> = match &args.schedulers {
        Some(s) => split_list(s),
        None => DEFAULT_SCHEDULERS.iter().map(|s| s.to_string()).collect(),
    };
    for s in &scheds {
        check_scheduler(s)?;
    }
    let rts: Vec<RtPolicy> = match &args.rts {
        Some(s) => split_list(s).iter().map(|r| parse_rt(r)).collect::<Result<_, _>>()?,
        None => DEFAULT_RTS.iter().map(|r| parse_rt(r)).collect::<Result<_, _>>()?,
    };
    let seeds: Vec<u64> = match &args.seeds {
        Some(s) => split_list(s)
            .iter()
            .map(|x| x.parse().map_err(|_| input(format!("seed {x:?} is not an integer"))))
            .collect::<Result<_, _>>()?,
        None => vec![args.seed],
    };
    if scheds.is_empty() || rts.is_empty() || seeds.is_empty() {
        return Err(input("sweep needs at least one scheduler, target and seed"));
    }
    let workload = Workload::load(&args.run)?;

    let mut jobs: Vec<(String, RtPolicy, u64)> = Vec::new();
    for s in &scheds {
        for &rt in &rts {
            for &seed in &seeds {
                jobs.push((s.clone(), rt, seed));
            }
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        if j == 0 {
            return Err(input("--jobs must be at least 1"));
        }
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(internal)?;
    let mut results: Vec<((String, RtPolicy, u64), SimReport)> = pool.install(|| {
        jobs.par_iter()
            .map(|(s, rt, seed)| workload.run(s, *rt, *seed).map(|r| ((s.clone(), *rt, *seed), r)))
            .collect::<Result<Vec<_>, CliError>>()
    })?;
    results.sort_by(|((sa, ra, da), _), ((sb, rb, db), _)| {
        sa.cmp(sb)
            .then(rt_key(ra).partial_cmp(&rt_key(rb)).expect("targets are finite"))
            .then(da.cmp(db))
    });

    let mut out = format!("{SUMMARY_HEADER},reason\n");
    for ((_, rt, _), report) in &results {
        let row = SummaryRow::from_report(report, &workload.catalog_label, &workload.trace_label, &rt.to_string());
        let reason = report.dominant_rejection().map_or_else(String::new, |r| r.to_string());
        out.push_str(&format!("{},{}\n", row.to_csv(), reason));
    }
    if let Some(path) = &args.reports {
        let jsonl: String = results.iter().map(|(_, r)| format!("{}\n", r.to_json())).collect();
        emit(Some(path), &jsonl)?;
    }
    emit(args.output.as_deref(), &out)
}

pub fn cmd_compare(args: &CompareArgs) -> Result<(), CliError> {
    check_scheduler(&args.a)?;
    check_scheduler(&args.b)?;
    let policy = parse_rt(&args.rt)?;
    let workload = Workload::load(&args.run)?;
    let a = workload.run(&args.a, policy, args.seed)?;
    let b = workload.run(&args.b, policy, args.seed)?;
    let m = simulator::matched_throughput(&a, &b).map_err(sim_error)?;
    let row = format!(
        "{},{},{},{:.6},{:.6},{:.6}",
        csv_field(&a.scheduler),
        csv_field(&b.scheduler),
        m.matched_items,
        m.throughput_a_mbs,
        m.throughput_b_mbs,
        m.delta_mbs
    );
    emit(args.output.as_deref(), &format!("{COMPARE_HEADER}\n{row}\n"))
}

fn parse_configs(s: &str) -> Result<Vec<(usize, usize)>, CliError> {
    split_list(s)
        .iter()
        .map(|pair| {
            let (n, k) = pair.split_once(':').ok_or_else(|| input(format!("config {pair:?}: expected N:K")))?;
            let n: usize = n.trim().parse().map_err(|_| input(format!("config {pair:?}: bad N")))?;
            let k: usize = k.trim().parse().map_err(|_| input(format!("config {pair:?}: bad K")))?;
            if k == 0 || n <= k {
                return Err(input(format!("config {pair:?}: need N > K ≥ 1")));
            }
            Ok((n, k))
        })
        .collect()
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<(), CliError> {
    let sizes: Vec<usize> = match &args.sizes_mb {
        Some(s) => split_list(s)
            .iter()
            .map(|x| {
                x.parse::<f64>()
                    .ok()
                    .filter(|v| *v > 0.0)
                    .map(|v| (v * BYTES_PER_MB).round() as usize)
                    .ok_or_else(|| input(format!("size {x:?} is not a positive number")))
            })
            .collect::<Result<_, _>>()?,
        None => CALIBRATION_SIZES_MB.iter().map(|mb| mb * 1_000_000).collect(),
    };
    let configs = match &args.configs {
        Some(s) => parse_configs(s)?,
        None => CALIBRATION_CONFIGS.to_vec(),
    };
    if args.median_of == 0 {
        return Err(input("--median-of must be at least 1"));
    }
    let options = BenchOptions {
        repeats: args.median_of,
        clock: if args.fake_clock {
            BenchClock::Fake { tick_s: args.fake_tick_s }
        } else {
            BenchClock::Wall
        },
        seed: args.seed,
    };
    let samples = codec::bench_with(&sizes, &configs, &options).map_err(input)?;
    let model = TimeModel::fit(&samples).map_err(input)?;
    let mut w = create(&args.output)?;
    perfmodel::write_calibration(&mut w, &samples).map_err(internal)?;
    w.flush().map_err(internal)?;
    let fmt = |c: &[f64; 4]| c.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>().join(" ");
    println!("encode {}", fmt(&model.encode_coeffs));
    println!("decode {}", fmt(&model.decode_coeffs));
    Ok(())
}

pub fn cmd_gen_trace(args: &GenTraceArgs) -> Result<(), CliError> {
    let mut spec = match args.preset.as_deref() {
        Some("meva") => TraceSpec::meva(args.seed),
        Some(other) => return Err(input(format!("unknown preset {other:?}; expected meva"))),
        None => TraceSpec {
            count: 1000,
            pin_extremes: false,
            ..TraceSpec::meva(args.seed)
        },
    };
    spec.seed = args.seed;
    if let Some(c) = args.count {
        spec.count = c;
    }
    if let SizeModel::LogNormal {
        mean_bytes,
        std_bytes,
        min_bytes,
        max_bytes,
    } = &mut spec.size
    {
        let mb = |v: f64| v * BYTES_PER_MB;
        if let Some(v) = args.mean_mb {
            *mean_bytes = mb(v);
        }
        if let Some(v) = args.std_mb {
            *std_bytes = mb(v);
        }
        if let Some(v) = args.min_mb {
            *min_bytes = mb(v).round() as u64;
        }
        if let Some(v) = args.max_mb {
            *max_bytes = mb(v).round() as u64;
        }
    }
    if let Some(path) = &args.sizes_from {
        let source = trace_io::load_trace(path).map_err(input)?;
        spec.size = SizeModel::Empirical {
            sizes: source.records.iter().map(|r| r.size_bytes).collect(),
        };
    }
    if let Some(d) = args.span_days {
        spec.arrival = ArrivalModel::Poisson { span_days: d };
    }
    if let Some(p) = args.pin_extremes {
        spec.pin_extremes = p;
    }
    spec.retention_days = args.retention_days;
    spec.reliability_target = args.rt;

    let mut trace = trace_io::gen_trace(&spec).map_err(input)?;
    if let Some(target) = args.repeat_to {
        trace = trace_io::repeat_to(&trace, target).map_err(input)?;
    }
    if let Some(target) = args.trim_to {
        trace = trace_io::trim_to(&trace, target);
    }
    let mut w = create(&args.output)?;
    trace_io::write_trace(&mut w, &trace).map_err(internal)?;
    w.flush().map_err(internal)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::GenTrace(a) => cmd_gen_trace(a),
    }
}

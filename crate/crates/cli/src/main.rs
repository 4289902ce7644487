//! `beamtrack` command-line driver: tracking runs, parameter sweeps and a solver benchmark.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on a configuration error,
//! 3 when `--strict` is set and any beam design was infeasible.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use beamtrack::runner::{
    compare_schemes, export_bench, export_cdfs, export_log, export_sweep, run_bench, run_sweep,
    run_tracking, ExportFormat, SchemeId, SweepAxis,
};
use beamtrack::scenario::MeasurementMode;
use beamtrack::{Error, ScenarioConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

#[derive(Parser)]
#[command(
    name = "beamtrack",
    version,
    about = "Cooperative ISAC predictive beam tracking simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track the target over the horizon with one scheme, or all schemes plus CDFs.
    Run(RunArgs),
    /// Sweep one scenario parameter.
    Sweep(SweepArgs),
    /// Compare SDR and penalty solvers on random single-TTS instances.
    Bench(BenchArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config file; keys override the preset (or the file's own "base").
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[arg(long, value_enum)]
    measurement_mode: Option<Mode>,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
    /// Exit with code 3 if any design was infeasible.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Scheme to run; all four (with CDF tables) when omitted.
    #[arg(long, value_enum)]
    scheme: Option<Scheme>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    sweep: Axis,
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Scheme to sweep; all four when omitted.
    #[arg(long, value_enum)]
    scheme: Option<Scheme>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Number of random instances.
    #[arg(long, default_value_t = 20)]
    count: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Paper,
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Full,
    Statistical,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Sdr,
    Penalty,
    NonoptEkf,
    FeedbackEkf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Power,
    Eta,
    NumBs,
    Antennas,
    Velocity,
}

impl From<Scheme> for SchemeId {
    fn from(s: Scheme) -> Self {
        match s {
            Scheme::Sdr => SchemeId::Sdr,
            Scheme::Penalty => SchemeId::Penalty,
            Scheme::NonoptEkf => SchemeId::NonoptEkf,
            Scheme::FeedbackEkf => SchemeId::FeedbackEkf,
        }
    }
}

impl From<Axis> for SweepAxis {
    fn from(a: Axis) -> Self {
        match a {
            Axis::Power => SweepAxis::Power,
            Axis::Eta => SweepAxis::Eta,
            Axis::NumBs => SweepAxis::NumBs,
            Axis::Antennas => SweepAxis::Antennas,
            Axis::Velocity => SweepAxis::Velocity,
        }
    }
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(String),
    Runtime(String),
    Infeasible(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::ConfigParse(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl Common {
    fn load_config(&self) -> Result<ScenarioConfig, Failure> {
        let preset = match self.preset {
            Preset::Paper => "paper",
            Preset::Desk => "desk",
        };
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
                let mut value: Value = serde_json::from_str(&text)
                    .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
                if let Value::Object(obj) = &mut value {
                    obj.entry("base")
                        .or_insert_with(|| Value::String(preset.into()));
                }
                ScenarioConfig::from_json_value(value)?
            }
            None => ScenarioConfig::preset(preset).expect("known preset"),
        };
        if let Some(mode) = self.measurement_mode {
            cfg.measurement_mode = match mode {
                Mode::Full => MeasurementMode::FullSignal,
                Mode::Statistical => MeasurementMode::Statistical,
            };
        }
        Ok(cfg.validate().map_err(Error::from)?)
    }

    fn seed_list(&self) -> Result<Vec<u64>, Failure> {
        if self.seeds == 0 {
            return Err(Failure::Config("--seeds must be at least 1".into()));
        }
        Ok((0..self.seeds).map(|i| self.seed.wrapping_add(i)).collect())
    }

    fn export_format(&self) -> ExportFormat {
        match self.format {
            Format::Csv => ExportFormat::Csv,
            Format::Json => ExportFormat::Json,
        }
    }
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn schemes(choice: Option<Scheme>) -> Vec<SchemeId> {
    choice.map_or_else(|| SchemeId::ALL.to_vec(), |s| vec![s.into()])
}

fn run(args: &RunArgs) -> Result<usize, Failure> {
    let c = &args.common;
    let cfg = c.load_config()?;
    let seeds = c.seed_list()?;
    let schemes = schemes(args.scheme);
    let out: &Path = &c.out;
    let mut infeasible = 0;
    println!(
        "scheme        seed  avg_rate  peak_rate  rmse_m   max_err_m  flagged  sensing_s  design_s"
    );
    for &scheme in &schemes {
        for &seed in &seeds {
            let log = run_tracking(&cfg, scheme, seed)?;
            let sensing: f64 = log
                .records
                .iter()
                .map(|r| r.timings.sensing.as_secs_f64())
                .sum();
            let design: f64 = log
                .records
                .iter()
                .map(|r| r.timings.design.as_secs_f64())
                .sum();
            println!(
                "{:<12} {:>5}  {:>8.3}  {:>9.3}  {:>7.4}  {:>9.4}  {:>7}  {:>9.3}  {:>8.3}",
                scheme.name(),
                seed,
                log.average_rate(),
                log.peak_rate(),
                log.position_rmse(),
                log.max_position_error(),
                log.flagged(),
                sensing,
                design
            );
            infeasible += log
                .records
                .iter()
                .filter(|r| r.flags.infeasible_fallback)
                .count();
            report(&export_log(&log, out, c.export_format(), c.plot)?);
        }
    }
    if args.scheme.is_none() {
        let cmp = compare_schemes(&cfg, &schemes, &seeds)?;
        report(&export_cdfs(&cmp, out, c.export_format(), c.plot)?);
    }
    Ok(infeasible)
}

fn sweep(args: &SweepArgs) -> Result<usize, Failure> {
    let c = &args.common;
    let cfg = c.load_config()?;
    let seeds = c.seed_list()?;
    let table = run_sweep(
        &cfg,
        args.sweep.into(),
        &args.values,
        &schemes(args.scheme),
        &seeds,
    );
    println!("value       scheme        avg_rate  peak_rate  avg_crlb     min_crlb");
    let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4e}"));
    for v in table.values() {
        for s in table.schemes() {
            println!(
                "{:<10}  {:<12}  {:>8}  {:>9}  {:>11}  {:>11}",
                v,
                s.name(),
                fmt(table.mean(v, s, |r| r.average_rate)),
                fmt(table.mean(v, s, |r| r.peak_rate)),
                fmt(table.mean(v, s, |r| r.average_crlb)),
                fmt(table.mean(v, s, |r| r.min_crlb)),
            );
        }
    }
    let failed: Vec<&String> = table.rows.iter().filter_map(|r| r.error.as_ref()).collect();
    for e in &failed {
        eprintln!("cell failed: {e}");
    }
    report(&export_sweep(&table, &c.out, c.export_format(), c.plot)?);
    if !failed.is_empty() && failed.len() == table.rows.len() {
        return Err(Failure::Config(format!(
            "every sweep cell failed: {}",
            failed[0]
        )));
    }
    Ok(table.rows.iter().map(|r| r.infeasible).sum())
}

fn bench(args: &BenchArgs) -> Result<usize, Failure> {
    let c = &args.common;
    let cfg = c.load_config()?;
    let rows = run_bench(&cfg, args.count, c.seed);
    println!(
        "index  sdr_rate   penalty_rate  gap         rank_ratio  kappa      sdr_s   penalty_s"
    );
    let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.4e}"));
    for r in &rows {
        println!(
            "{:>5}  {:>9}  {:>12}  {:>10}  {:>10}  {:>9}  {:>6.2}  {:>9.2}",
            r.index,
            fmt(r.sdr_rate),
            fmt(r.penalty_rate),
            fmt(r.gap),
            fmt(r.rank_ratio),
            fmt(r.kappa),
            r.sdr_seconds,
            r.penalty_seconds
        );
        if let Some(e) = &r.error {
            eprintln!("instance {}: {e}", r.index);
        }
    }
    report(&[export_bench(&rows, &c.out, c.export_format())?]);
    Ok(rows.iter().filter(|r| r.infeasible).count())
}

/// Suppress the panic message of solver-internal panics, which the conic
/// backend catches and reports as numerical failures.
fn quiet_solver_panics() {
    let default = std::panic::take_hook();
    std::panic::set_hook(Box::new(move |info| {
        let internal = info
            .location()
            .is_some_and(|l| l.file().contains("clarabel"));
        if !internal {
            default(info);
        }
    }));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    quiet_solver_panics();
    let (result, strict) = match &cli.command {
        Command::Run(a) => (run(a), a.common.strict),
        Command::Sweep(a) => (sweep(a), a.common.strict),
        Command::Bench(a) => (bench(a), a.common.strict),
    };
    let result = result.and_then(|n| {
        if strict && n > 0 {
            Err(Failure::Infeasible(n))
        } else {
            Ok(())
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Infeasible(n)) => {
            eprintln!("error: {n} infeasible design(s) with --strict");
            ExitCode::from(3)
        }
    }
}

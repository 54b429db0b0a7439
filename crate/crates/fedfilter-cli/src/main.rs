//! Command-line front end: run a simulation, sweep the dead-band or the
//! fleet size into figure-ready tables, or execute the built-in
//! invariant suite.
//!
//! Exit codes: 0 success, 1 configuration/usage error, 2 runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use fedfilter::dataset::load_dataset;
use fedfilter::error::Error;
use fedfilter::perturbation::DataMatrix;
use fedfilter::sim::{
    run, sweep_delta, sweep_devices, Budget, DataSource, DeltaSweepRow, DeviceSweepRow, RunMetrics,
    SimConfig, SyntheticSpec,
};
use fedfilter::validate::validation_suite;

#[derive(Parser)]
#[command(
    name = "fedfilter",
    about = "Federated dead-band filtering simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and report its metrics.
    Run(RunArgs),
    /// Replay the run across a ladder of dead-band values.
    SweepDelta(SweepDeltaArgs),
    /// Replay the run across fleet sizes at fixed per-device volume.
    SweepDevices(SweepDevicesArgs),
    /// Execute the built-in invariant suite and print pass/fail lines.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Sensor log file (whitespace-separated numeric columns). Omit for
    /// the synthetic generator.
    #[arg(long)]
    dataset: Option<PathBuf>,

    /// Force the synthetic generator even if a dataset is configured.
    #[arg(long)]
    synthetic: bool,

    /// 1-based dataset columns, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 3])]
    columns: Vec<usize>,

    /// Number of devices the data is split across.
    #[arg(long, default_value_t = 10)]
    devices: usize,

    /// Dead-band half-width (mutually exclusive with --tol).
    #[arg(long, conflicts_with = "tol")]
    delta: Option<f64>,

    /// Normalized perturbation tolerance; the dead-band is solved from it
    /// and adapted online.
    #[arg(long)]
    tol: Option<f64>,

    /// Predictor tap count.
    #[arg(long, default_value_t = 4)]
    tap_len: usize,

    /// Fraction of devices drawn into each averaging round.
    #[arg(long, default_value_t = 0.8)]
    fraction_k: f64,

    /// Warmup samples per device used for initial training.
    #[arg(long, default_value_t = 200)]
    warmup: usize,

    /// Synthetic samples per device (warmup included).
    #[arg(long, default_value_t = 2000)]
    samples_per_device: usize,

    /// RNG seed; falls back to FEDFILTER_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,

    /// Report file; stdout carries only the human summary.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Dump the synchronized reconstruction matrix as CSV.
    #[arg(long)]
    dump_recon: Option<PathBuf>,

    /// Dump the averaged-model prediction matrix as CSV.
    #[arg(long)]
    dump_averaged: Option<PathBuf>,
}

#[derive(Args)]
struct SweepDeltaArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Comma-separated dead-band values to sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    delta_list: Vec<f64>,
}

#[derive(Args)]
struct SweepDevicesArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Comma-separated device counts to sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    devices_list: Vec<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    /// RNG seed; falls back to FEDFILTER_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::SweepDelta(args) => cmd_sweep_delta(args),
        Command::SweepDevices(args) => cmd_sweep_devices(args),
        Command::Validate(args) => cmd_validate(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_)
                | Error::NegativeInput { .. }
                | Error::Dataset { .. }
                | Error::InsufficientData(_)
                | Error::WarmupTooShort { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn seed_of(explicit: Option<u64>) -> u64 {
    explicit
        .or_else(|| {
            std::env::var("FEDFILTER_SEED")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or(0)
}

fn build_config(common: &CommonArgs) -> Result<SimConfig, Error> {
    let budget = match (common.delta, common.tol) {
        (Some(d), None) => {
            if !d.is_finite() || d < 0.0 {
                return Err(Error::Config("--delta must be a finite value >= 0".into()));
            }
            Budget::Delta(d)
        }
        (None, Some(t)) => {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::Config("--tol must be a finite value >= 0".into()));
            }
            Budget::NormalizedTol(t)
        }
        (None, None) => Budget::Delta(1.0),
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "--delta and --tol are mutually exclusive".into(),
            ))
        }
    };
    let source = match (&common.dataset, common.synthetic) {
        (Some(path), false) => {
            let series = load_dataset(path, &common.columns)?;
            DataSource::Series(series)
        }
        _ => DataSource::Synthetic(SyntheticSpec {
            samples_per_device: common.samples_per_device,
            ..SyntheticSpec::default()
        }),
    };
    Ok(SimConfig {
        n_devices: common.devices,
        tap_len: common.tap_len,
        budget,
        fraction_k: common.fraction_k,
        warmup_len: common.warmup,
        seed: seed_of(common.seed),
        source,
        ..SimConfig::default()
    })
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, Error> {
    let config = build_config(&args.common)?;
    let out = run(&config)?;
    let m = &out.metrics;
    println!(
        "devices={} ticks={} suppression={:.4} transmissions={} bytes={} max_recon_err={:.6} rebalances={}",
        m.n_devices,
        m.ticks,
        m.suppression_ratio,
        m.transmissions_total,
        m.bytes_sent,
        m.max_abs_recon_error,
        m.rebalance_count
    );
    if let Some(path) = &args.common.out {
        emit_report(&Report::Metrics(m.clone()), path, args.common.format)?;
        println!("report written to {}", path.display());
    }
    if let Some(path) = &args.dump_recon {
        write_matrix_csv(&out.recon_matrix, path)?;
    }
    if let Some(path) = &args.dump_averaged {
        write_matrix_csv(&out.averaged_matrix, path)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep_delta(args: SweepDeltaArgs) -> Result<ExitCode, Error> {
    if args.common.tol.is_some() {
        return Err(Error::Config(
            "sweep-delta drives delta directly; --tol is not applicable".into(),
        ));
    }
    let config = build_config(&args.common)?;
    let rows = sweep_delta(&config, &args.delta_list)?;
    for row in &rows {
        println!(
            "delta={:<8} normalized_tol={:.6} suppression={:.4} transmissions={}",
            row.delta, row.normalized_tol, row.suppression_ratio, row.transmissions
        );
    }
    if let Some(path) = &args.common.out {
        emit_report(&Report::DeltaSweep(rows), path, args.common.format)?;
        println!("report written to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep_devices(args: SweepDevicesArgs) -> Result<ExitCode, Error> {
    let config = build_config(&args.common)?;
    let rows = sweep_devices(&config, &args.devices_list)?;
    for row in &rows {
        println!(
            "devices={:<4} energy_efficiency={:.6}",
            row.n_devices, row.energy_efficiency
        );
    }
    if let Some(path) = &args.common.out {
        emit_report(&Report::DeviceSweep(rows), path, args.common.format)?;
        println!("report written to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(args: ValidateArgs) -> Result<ExitCode, Error> {
    let results = validation_suite(seed_of(args.seed));
    let mut all_passed = true;
    for r in &results {
        println!(
            "{}: {} ({})",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
        all_passed &= r.passed;
    }
    if all_passed {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

enum Report {
    Metrics(RunMetrics),
    DeltaSweep(Vec<DeltaSweepRow>),
    DeviceSweep(Vec<DeviceSweepRow>),
}

/// Render a report and write it atomically (temp file + rename), with
/// stable field ordering: JSON keys sorted, CSV schema fixed per table.
fn emit_report(report: &Report, path: &Path, format: Format) -> Result<(), Error> {
    let body = match format {
        Format::Json => {
            let value = match report {
                Report::Metrics(m) => serde_json::to_value(m),
                Report::DeltaSweep(rows) => serde_json::to_value(rows),
                Report::DeviceSweep(rows) => serde_json::to_value(rows),
            }
            .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
            // serde_json maps are BTree-backed, so keys come out sorted.
            let mut s = serde_json::to_string_pretty(&value)
                .map_err(|e| Error::Config(format!("serialization failed: {e}")))?;
            s.push('\n');
            s
        }
        Format::Csv => match report {
            Report::Metrics(m) => {
                let mut s = String::from(
                    "n_devices,ticks,samples_total,transmissions_total,suppressed_total,suppression_ratio,bytes_sent,energy_efficiency,max_abs_recon_error,delta_initial,delta_final,tol_f,rebalance_count\n",
                );
                s.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    m.n_devices,
                    m.ticks,
                    m.samples_total,
                    m.transmissions_total,
                    m.suppressed_total,
                    m.suppression_ratio,
                    m.bytes_sent,
                    m.energy_efficiency,
                    m.max_abs_recon_error,
                    m.delta_initial,
                    m.delta_final,
                    m.tol_f,
                    m.rebalance_count
                ));
                s
            }
            Report::DeltaSweep(rows) => {
                let mut s = String::from("delta,normalized_tol,suppression_ratio,transmissions\n");
                for r in rows {
                    s.push_str(&format!(
                        "{},{},{},{}\n",
                        r.delta, r.normalized_tol, r.suppression_ratio, r.transmissions
                    ));
                }
                s
            }
            Report::DeviceSweep(rows) => {
                let mut s = String::from("n_devices,energy_efficiency\n");
                for r in rows {
                    s.push_str(&format!("{},{}\n", r.n_devices, r.energy_efficiency));
                }
                s
            }
        },
    };
    write_atomic(path, body.as_bytes())
}

fn write_matrix_csv(matrix: &DataMatrix, path: &Path) -> Result<(), Error> {
    let mut s = String::new();
    for r in 0..matrix.rows() {
        let row: Vec<String> = (0..matrix.cols())
            .map(|c| matrix.get(r, c).to_string())
            .collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = parent {
        if !dir.exists() {
            return Err(Error::Config(format!(
                "output directory {} does not exist",
                dir.display()
            )));
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|source| Error::Io {
        path: tmp.display().to_string(),
        source,
    })?;
    fs::rename(&tmp, path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

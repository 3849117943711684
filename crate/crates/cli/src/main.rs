//! `crosskit`: simulate, fit and sweep cross-resonance experiments.

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crosskit_core::config::{Grid, RunConfig};
use crosskit_core::dynamics::{simulate_cr_rabi, simulate_cr_rabi_with, Frame, RabiTrace, SimOptions};
use crosskit_core::io::{
    jeff_rows, pair_traces, read_traces, write_rows, write_sweep, write_traces, JeffRow, MethodRow,
};
use crosskit_core::perturbation::{compare_methods, PoleGuard};
use crosskit_core::pipeline::{curve_from_traces, detuning_sweep, simulate_point};
use crosskit_core::{Error, ErrorCategory, Result};

/// Samples checked against the lab frame when `lab_validation` is on.
const LAB_CHECK_SAMPLES: usize = 21;
const LAB_CHECK_US: f64 = 0.2;

#[derive(Parser)]
#[command(name = "crosskit", version, about = "Cross-resonance simulation and analysis")]
struct Cli {
    /// Run configuration (key = value lines).
    #[arg(long, global = true, env = "CROSSKIT_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the configured root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate CR Rabi traces for both control states.
    Simulate(SimulateArgs),
    /// Fit J_eff from a traces CSV (simulated or measured).
    Fit(FitArgs),
    /// Tabulate mu(delta) by every available method.
    Mu(MuArgs),
    /// Full detuning sweep: traces, fits, mu and saturation curves.
    Sweep(SweepArgs),
    /// Render SVG plots from a sweep directory.
    Report(ReportArgs),
}

#[derive(Args)]
#[command(allow_negative_numbers = true)]
struct SimulateArgs {
    /// Detuning in MHz (default: `delta_mhz` from the config).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_parser = Grid::parse, allow_hyphen_values = true)]
    amplitudes: Option<Grid>,
    #[arg(long)]
    tmax_ns: Option<f64>,
    #[arg(long)]
    dt_ns: Option<f64>,
    #[arg(long, default_value = "traces.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    input: PathBuf,
    #[arg(long, default_value = "jeff.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    All,
    Closed,
    H1,
    H2,
    Numeric,
}

#[derive(Args)]
struct MuArgs {
    /// Detuning grid (default: `deltas` from the config).
    #[arg(long, value_parser = Grid::parse, allow_hyphen_values = true)]
    delta_range: Option<Grid>,
    #[arg(long, value_enum, default_value = "all")]
    method: Method,
    #[arg(long, default_value = "mu.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_parser = Grid::parse, allow_hyphen_values = true)]
    deltas: Option<Grid>,
    /// Output directory (default: `output_dir` from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Do not read or write per-detuning checkpoints.
    #[arg(long)]
    no_checkpoint: bool,
}

#[derive(Args)]
struct ReportArgs {
    dir: PathBuf,
    /// Where to put the SVGs (default: the sweep directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Config => 3,
        ErrorCategory::Numerical => 4,
        ErrorCategory::Io => 5,
        ErrorCategory::Schema => 6,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            eprintln!("error[{}]: {e}", category.as_str());
            ExitCode::from(exit_code(category))
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let path = path.ok_or_else(|| Error::InvalidParameter("no config given (use --config or CROSSKIT_CONFIG)".into()))?;
    let mut config = RunConfig::from_file(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    let config = || load_config(cli.config.as_deref(), cli.seed);
    match cli.command {
        Command::Simulate(args) => simulate(config()?, args),
        Command::Fit(args) => fit(&args.input, &args.out, cli.seed.unwrap_or(0)),
        Command::Mu(args) => mu(config()?, args),
        Command::Sweep(args) => sweep(config()?, args),
        Command::Report(args) => report::render(&args.dir, args.out.as_deref().unwrap_or(&args.dir)),
    }
}

fn simulate(mut config: RunConfig, args: SimulateArgs) -> Result<()> {
    if let Some(d) = args.delta {
        config.delta_mhz = d;
    }
    if let Some(a) = args.amplitudes {
        config.amplitudes = a;
    }
    if let Some(t) = args.tmax_ns {
        config.tmax_ns = t;
    }
    if let Some(dt) = args.dt_ns {
        config.dt_ns = dt;
    }
    config.validate()?;
    let device = config.device()?;
    let settings = config.sweep_settings();
    let mut traces: Vec<RabiTrace> = Vec::new();
    for &a in &settings.amplitudes {
        for control in [0u8, 1] {
            traces.push(simulate_point(&device, a, control, &settings)?);
        }
    }
    if config.lab_validation {
        lab_check(&config, &settings.amplitudes)?;
    }
    let rows: Vec<(f64, &RabiTrace)> = traces.iter().map(|t| (config.delta_mhz, t)).collect();
    write_traces(&args.out, config.seed, &rows)?;
    println!("wrote {} traces to {}", traces.len(), args.out.display());
    Ok(())
}

/// Compares the rotating-frame and lab-frame evolutions over a short window
/// at the largest amplitude.
fn lab_check(config: &RunConfig, amplitudes: &[f64]) -> Result<()> {
    let device = config.device()?;
    let amplitude = amplitudes.iter().copied().fold(0.0, f64::max);
    let t: Vec<f64> = (0..LAB_CHECK_SAMPLES).map(|k| k as f64 * LAB_CHECK_US / (LAB_CHECK_SAMPLES - 1) as f64).collect();
    let rot = simulate_cr_rabi(&device, amplitude, &t, true)?;
    let opts = SimOptions { frame: Frame::Lab, ..Default::default() };
    let lab = simulate_cr_rabi_with(&device, amplitude, &t, true, &opts)?;
    let rms = (rot.p_excited.iter().zip(&lab.p_excited).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / t.len() as f64)
        .sqrt();
    println!("lab-frame check at amplitude {amplitude}: rms deviation {rms:.3e} over {LAB_CHECK_US} us");
    Ok(())
}

fn fit(input: &Path, out: &Path, seed: u64) -> Result<()> {
    let grouped = pair_traces(input, read_traces(input)?)?;
    let mut rows: Vec<JeffRow> = Vec::new();
    for (delta, pairs) in grouped {
        match curve_from_traces(delta, &pairs) {
            Ok(curve) => rows.extend(jeff_rows(&[curve])),
            Err(e) => rows.push(failed_summary(delta, &e)),
        }
    }
    write_rows(out, seed, &rows)?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn failed_summary(delta: f64, e: &Error) -> JeffRow {
    JeffRow {
        kind: "summary".into(),
        delta_mhz: delta,
        amplitude: None,
        f0_mhz: None,
        f0_ci95: None,
        fpi_mhz: None,
        fpi_ci95: None,
        jeff_mhz: None,
        jeff_ci95: None,
        slope: None,
        slope_ci95: None,
        saturation: None,
        saturation_ci95: None,
        prefix_len: None,
        status: format!("error:{}: {e}", e.category().as_str()),
    }
}

fn mu(config: RunConfig, args: MuArgs) -> Result<()> {
    config.validate()?;
    let base = config.device()?;
    let deltas = args.delta_range.unwrap_or(config.deltas.clone()).values();
    let guard = PoleGuard(config.pole_guard_mhz);
    let rows: Vec<MethodRow> = deltas
        .iter()
        .map(|&d| {
            let mut row = MethodRow::from(&compare_methods(&base.with_detuning(d), guard));
            let all = matches!(args.method, Method::All);
            if !(all || matches!(args.method, Method::Closed)) {
                row.mu_closed = None;
            }
            if !(all || matches!(args.method, Method::H1)) {
                row.mu_matrix_h1 = None;
            }
            if !(all || matches!(args.method, Method::H2)) {
                row.mu_matrix_h2 = None;
            }
            if !(all || matches!(args.method, Method::Numeric)) {
                row.mu_numeric = None;
            }
            row
        })
        .collect();
    write_rows(&args.out, config.seed, &rows)?;
    println!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn sweep(mut config: RunConfig, args: SweepArgs) -> Result<()> {
    if let Some(d) = args.deltas {
        config.deltas = d;
    }
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    config.validate()?;
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let echo = dir.join("config.cfg");
    std::fs::write(&echo, config.echo()).map_err(|e| Error::io(&echo, e))?;

    let checkpoint = (!args.no_checkpoint).then(|| dir.join("checkpoint"));
    let result =
        detuning_sweep(&config.device()?, &config.deltas.values(), &config.sweep_settings(), checkpoint.as_deref())?;
    write_sweep(&dir, config.seed, &result)?;
    println!(
        "swept {} detunings ({} excluded, {} failed) into {}",
        result.sweeps.len(),
        result.excluded.len(),
        result.failures.len(),
        dir.display()
    );
    Ok(())
}

//! Experiment CLI.
//!
//! `sweep` runs the full (lambda, k) evaluation and writes one CSV per
//! lambda (plus optional SVG charts); `inspect` prints the model
//! dimensions, the SNR-calibrated noise variance, and the diagonal of
//! the nominal precision matrix. Exit codes: 0 success, 1 config error,
//! 2 input-data error, 3 output error.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use stealth_grid_lab::error::Error;
use stealth_grid_lab::experiment::{emit_csv, emit_plots, load_models, run_sweep, ExperimentConfig};

const EXIT_CONFIG: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_OUTPUT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "stealth-grid-lab",
    version,
    about = "Sparse stealth data-injection attacks on DC state estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep sparsity and lambda, writing CSV (and optional SVG) outputs
    Sweep(SweepArgs),
    /// Print m, n, the calibrated noise variance, and the W diagonal as CSV
    Inspect(InspectArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// MATPOWER case file
    #[arg(long)]
    case: Option<PathBuf>,
    /// TOML config file; command-line flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Target signal-to-noise ratio in dB [default: 30]
    #[arg(long = "snr-db")]
    snr_db: Option<f64>,
    /// State correlation decay in [0, 1) [default: 0.1]
    #[arg(long)]
    rho: Option<f64>,
    /// Likelihood-ratio decision threshold [default: 2]
    #[arg(long)]
    tau: Option<f64>,
    /// Weighting parameter > 1; repeat the flag for several values
    /// [default: 2 30]
    #[arg(long = "lambda")]
    lambdas: Vec<f64>,
    /// Largest sparsity to sweep [default: every sensor]
    #[arg(long = "k-max")]
    k_max: Option<usize>,
    /// Monte Carlo trials per sweep point [default: 20000]
    #[arg(long)]
    trials: Option<usize>,
    /// RNG seed [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write SVG charts
    #[arg(long)]
    plots: bool,
}

#[derive(Args)]
struct InspectArgs {
    /// MATPOWER case file
    #[arg(long)]
    case: PathBuf,
    /// Target signal-to-noise ratio in dB
    #[arg(long = "snr-db", default_value_t = 30.0)]
    snr_db: f64,
    /// State correlation decay in [0, 1)
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
}

/// Declarative form of the sweep configuration.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    case: Option<PathBuf>,
    snr_db: Option<f64>,
    rho: Option<f64>,
    tau: Option<f64>,
    lambdas: Option<Vec<f64>>,
    k_max: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    plots: Option<bool>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_CONFIG,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Sweep(args) => sweep(args),
        Command::Inspect(args) => inspect(args),
    }
}

fn sweep(args: SweepArgs) -> ExitCode {
    let config = match resolve_config(args) {
        Ok(config) => config,
        Err(message) => return fail(EXIT_CONFIG, &message),
    };

    let report = match run_sweep(&config) {
        Ok(report) => report,
        Err(err) => return fail(sweep_error_code(&err), &err.to_string()),
    };

    for sweep in &report.sweeps {
        if let Some(reason) = &sweep.truncated {
            eprintln!("warning: lambda = {}: {reason}", sweep.lambda);
        }
    }

    let csv_paths = match emit_csv(&report, &config.output_dir) {
        Ok(paths) => paths,
        Err(err) => return fail(EXIT_OUTPUT, &err.to_string()),
    };
    let mut written = csv_paths;
    if config.plots {
        match emit_plots(&report, &config.output_dir) {
            Ok(paths) => written.extend(paths),
            Err(err) => return fail(EXIT_OUTPUT, &err.to_string()),
        }
    }

    let mut summary = format!(
        "swept k = 1..={} for {} lambda value(s), {} trials per point (seed {})\n",
        report.k_max,
        report.sweeps.len(),
        report.trials,
        report.seed
    );
    for path in written {
        summary.push_str(&format!("wrote {}\n", path.display()));
    }
    print_to_stdout(&summary)
}

fn inspect(args: InspectArgs) -> ExitCode {
    let config = ExperimentConfig {
        case_path: args.case,
        snr_db: args.snr_db,
        rho: args.rho,
        ..ExperimentConfig::default()
    };
    if let Err(err) = config.validate() {
        return fail(EXIT_CONFIG, &err.to_string());
    }
    let (meas, state) = match load_models(&config) {
        Ok(models) => models,
        Err(err) => return fail(EXIT_INPUT, &err.to_string()),
    };
    let mut out = String::new();
    out.push_str(&format!("m,{}\n", meas.num_measurements()));
    out.push_str(&format!("n,{}\n", meas.num_states()));
    out.push_str(&format!("sigma2,{:.8e}\n", state.noise_variance));
    out.push_str("sensor,label,w_diag\n");
    for (i, label) in meas.labels.iter().enumerate() {
        out.push_str(&format!("{},{label},{:.8e}\n", i + 1, state.w[(i, i)]));
    }
    print_to_stdout(&out)
}

/// A closed pipe on stdout (e.g. `inspect | head`) is not an error.
fn print_to_stdout(text: &str) -> ExitCode {
    match std::io::stdout().write_all(text.as_bytes()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) if err.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(err) => fail(EXIT_OUTPUT, &format!("cannot write to stdout: {err}")),
    }
}

/// Defaults, then config-file values, then command-line flags.
fn resolve_config(args: SweepArgs) -> Result<ExperimentConfig, String> {
    let mut config = ExperimentConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let file: FileConfig = toml::from_str(&text)
            .map_err(|e| format!("invalid config {}: {e}", path.display()))?;
        if let Some(case) = file.case {
            config.case_path = case;
        }
        if let Some(v) = file.snr_db {
            config.snr_db = v;
        }
        if let Some(v) = file.rho {
            config.rho = v;
        }
        if let Some(v) = file.tau {
            config.tau = v;
        }
        if let Some(v) = file.lambdas {
            config.lambdas = v;
        }
        if let Some(v) = file.k_max {
            config.k_max = Some(v);
        }
        if let Some(v) = file.trials {
            config.trials = v;
        }
        if let Some(v) = file.seed {
            config.seed = v;
        }
        if let Some(v) = file.out {
            config.output_dir = v;
        }
        if let Some(v) = file.plots {
            config.plots = v;
        }
    }
    if let Some(case) = args.case {
        config.case_path = case;
    }
    if let Some(v) = args.snr_db {
        config.snr_db = v;
    }
    if let Some(v) = args.rho {
        config.rho = v;
    }
    if let Some(v) = args.tau {
        config.tau = v;
    }
    if !args.lambdas.is_empty() {
        config.lambdas = args.lambdas;
    }
    if let Some(v) = args.k_max {
        config.k_max = Some(v);
    }
    if let Some(v) = args.trials {
        config.trials = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.out {
        config.output_dir = v;
    }
    config.plots = config.plots || args.plots;

    if config.case_path.as_os_str().is_empty() {
        return Err("no case file: pass --case or set `case` in the config file".into());
    }
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn sweep_error_code(err: &Error) -> u8 {
    match err {
        // bad parameters are config mistakes; unreadable or malformed
        // case data is an input problem
        Error::Domain(_) => EXIT_CONFIG,
        _ => EXIT_INPUT,
    }
}

fn fail(code: u8, message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

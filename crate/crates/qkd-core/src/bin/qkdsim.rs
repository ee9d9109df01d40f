//! Command-line front end: evaluate a configuration, sweep parameter grids,
//! validate the analytic chain against the Monte-Carlo oracle, and export
//! the bundled presets.

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qkd_core::coincidence::total_coincidence_rates;
use qkd_core::config::{preset_names, preset_text, resolve_config_arg};
use qkd_core::counting::{dead_time_corrections, singles_rates};
use qkd_core::montecarlo::{compare, simulate, write_comparison_csv, RNG_ALGORITHM};
use qkd_core::polarization::AnalyzerSetting;
use qkd_core::sweep::{load_sweep, run_sweep, SweepMode, DEFAULT_TARGET_QBER};
use qkd_core::{correction, protocols, security, Detector, DetectorPair, QkdError};

#[derive(Parser)]
#[command(
    name = "qkdsim",
    version,
    about = "Coincidence statistics, key rates and security margins for \
             polarization-entangled QKD links"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate rates, protocol quantities and security margins for one
    /// configuration.
    Eval {
        /// Configuration file path or bundled preset name.
        #[arg(long)]
        config: String,
        /// Also write the report as two-column CSV (quantity,value).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep output quantities over a one- or two-axis parameter grid.
    Sweep {
        /// Configuration file path or bundled preset name.
        #[arg(long)]
        config: String,
        /// Sweep spec file (axes and outputs).
        #[arg(long)]
        sweep: PathBuf,
        /// CSV output path; an existing partial file is resumed.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evaluation mode: analytic or montecarlo.
        #[arg(long, default_value = "analytic")]
        mode: String,
        /// Base seed for montecarlo mode.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the event-level simulator and compare every tallied quantity
    /// against the analytic chain.
    Validate {
        /// Configuration file path or bundled preset name.
        #[arg(long)]
        config: String,
        /// Simulated duration in seconds (defaults to timing.duration).
        #[arg(long)]
        duration: Option<f64>,
        /// Simulation seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the comparison table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bundled presets, or print/export one.
    Presets {
        /// Preset name to print.
        name: Option<String>,
        /// Write the preset to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                QkdError::Io(_) => ExitCode::from(3),
                QkdError::Uncorrectable { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run() -> Result<ExitCode, QkdError> {
    match Cli::parse().command {
        Command::Eval { config, out } => eval(&config, out.as_deref()),
        Command::Sweep {
            config,
            sweep,
            out,
            mode,
            seed,
        } => {
            let source = resolve_config_arg(&config)?;
            let spec = load_sweep(&sweep)?;
            let mode: SweepMode = mode.parse()?;
            let table = run_sweep(&source, &spec, mode, seed, out.as_deref())?;
            if out.is_none() {
                let header: Vec<String> = table
                    .axis_names
                    .iter()
                    .chain(table.quantity_names.iter())
                    .cloned()
                    .collect();
                println!("{}", header.join(","));
                for row in &table.rows {
                    let fields: Vec<String> = row
                        .axis_values
                        .iter()
                        .chain(row.values.iter())
                        .map(|v| format!("{v}"))
                        .collect();
                    println!("{}", fields.join(","));
                }
            } else {
                eprintln!("wrote {} rows", table.rows.len());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate {
            config,
            duration,
            seed,
            out,
        } => validate(&config, duration, seed, out.as_deref()),
        Command::Presets { name, out } => presets(name.as_deref(), out.as_deref()),
    }
}

fn eval(config_arg: &str, out: Option<&std::path::Path>) -> Result<ExitCode, QkdError> {
    let cfg = resolve_config_arg(config_arg)?.resolve()?;
    let theta = cfg.theta_a;
    let setting = AnalyzerSetting::parallel(theta);

    let mut report: Vec<(String, f64)> = Vec::new();
    report.push(("alpha_a".into(), cfg.alpha_a()));
    let (pi_a, pi_b) = dead_time_corrections(&cfg, &setting);
    report.push(("pi_a".into(), pi_a));
    report.push(("pi_b".into(), pi_b));

    let rates = singles_rates(&cfg, &setting);
    for det in Detector::ALL {
        report.push((format!("lambda_tot_{det}"), rates.lambda_tot[det]));
    }
    let coinc = total_coincidence_rates(&cfg, &setting);
    for pair in DetectorPair::ALL {
        report.push((format!("lambda_c_{pair}"), coinc.total_rate[pair]));
        report.push((format!("lambda_acc_{pair}"), coinc.accidental_rate[pair]));
    }

    let bb84 = protocols::bb84(&cfg, theta);
    let chsh = protocols::ekert_chsh(&cfg, theta);
    let wigner = protocols::ekert_wigner(&cfg, theta);
    for r in [&bb84, &chsh, &wigner] {
        let tag = match r.protocol {
            protocols::Protocol::Bb84 => "bb84",
            protocols::Protocol::EkertChsh => "chsh",
            protocols::Protocol::EkertWigner => "wi",
        };
        report.push((format!("k_{tag}"), r.sifted_key));
        report.push((format!("qber_{tag}"), r.qber));
        report.push((format!("qabr_{tag}"), r.qabr.unwrap_or(f64::NAN)));
    }

    match security::evaluate(&cfg, theta) {
        Ok(sec) => {
            report.push(("s".into(), sec.s));
            report.push(("s_prime".into(), sec.s_prime));
            report.push(("w_param".into(), sec.w_param));
            report.push(("s_norm".into(), sec.s_norm));
            report.push(("w_norm".into(), sec.w_norm));
        }
        Err(e) => log::warn!("security parameters unavailable: {e}"),
    }

    let corrected = correction::correct(
        bb84.sifted_key,
        bb84.qber,
        bb84.qabr.unwrap_or(0.0),
        DEFAULT_TARGET_QBER,
    )?;
    report.push(("passes_bb84".into(), corrected.passes as f64));
    report.push(("corrected_key_bb84".into(), corrected.corrected_key));
    report.push(("qber_bb84_corrected".into(), corrected.residual_qber));
    report.push(("qabr_bb84_corrected".into(), corrected.residual_qabr));

    for (key, value) in &report {
        println!("{key} = {value}");
    }
    if let Some(path) = out {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "# qkdsim eval v{}", env!("CARGO_PKG_VERSION"))?;
        writeln!(f, "# config_hash = {}", cfg.config_hash())?;
        writeln!(f, "quantity,value")?;
        for (key, value) in &report {
            writeln!(f, "{key},{value}")?;
        }
    }

    if !corrected.converged {
        eprintln!(
            "error correction did not converge within {} passes",
            correction::MAX_PASSES
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(
    config_arg: &str,
    duration: Option<f64>,
    seed: u64,
    out: Option<&std::path::Path>,
) -> Result<ExitCode, QkdError> {
    let cfg = resolve_config_arg(config_arg)?.resolve()?;
    let duration = duration.unwrap_or(cfg.timing.duration);
    if duration <= 0.0 || !duration.is_finite() {
        return Err(QkdError::InvalidParameter {
            field: "--duration".to_string(),
            message: format!("must be finite and > 0, got {duration}"),
        });
    }
    let setting = AnalyzerSetting::parallel(cfg.theta_a);

    let tally = simulate(&cfg, &setting, duration, seed);
    let rows = compare(
        &tally,
        &singles_rates(&cfg, &setting),
        &total_coincidence_rates(&cfg, &setting),
    );

    println!(
        "{:<12} {:>14} {:>14} {:>8}  flag",
        "quantity", "observed", "expected", "z"
    );
    let mut flagged = 0usize;
    for row in &rows {
        println!(
            "{:<12} {:>14.3} {:>14.3} {:>8.2}  {}",
            row.quantity,
            row.observed,
            row.expected,
            row.z,
            if row.flagged() { "|z|>3" } else { "" }
        );
        flagged += row.flagged() as usize;
    }
    println!(
        "live fraction: alice {:.6}, bob {:.6}",
        tally.live_fraction(qkd_core::Channel::Alice),
        tally.live_fraction(qkd_core::Channel::Bob)
    );
    println!("{flagged} of {} quantities flagged", rows.len());

    if let Some(path) = out {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "# qkdsim validate v{}", env!("CARGO_PKG_VERSION"))?;
        writeln!(f, "# config_hash = {}", cfg.config_hash())?;
        writeln!(f, "# seed = {seed}")?;
        writeln!(f, "# duration = {duration}")?;
        writeln!(f, "# rng = {RNG_ALGORITHM}")?;
        write_comparison_csv(&rows, &mut f)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn presets(name: Option<&str>, out: Option<&std::path::Path>) -> Result<ExitCode, QkdError> {
    match name {
        None => {
            for name in preset_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Some(name) => {
            let text = preset_text(name.strip_suffix(".cfg").unwrap_or(name)).ok_or_else(|| {
                QkdError::Parse {
                    line: 0,
                    message: format!(
                        "unknown preset `{name}` (available: {})",
                        preset_names().join(", ")
                    ),
                }
            })?;
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

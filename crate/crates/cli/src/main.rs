//! `sshchain`: command-line drivers for the SSH resonator chain library.
//!
//! Exit status is 0 on success, 1 on invalid input or configuration and 2
//! when a computation breaks down numerically.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use commands::{Command, Disorder, Fit, GateSweep, Ipr, PowerSweep, Spectrum, Sweep, Winding, S21};
use output::Output;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<sshchain::Error> for CliError {
    fn from(e: sshchain::Error) -> Self {
        use sshchain::Error as E;
        match e {
            // bad inputs: the request itself has no answer
            E::Validation(_)
            | E::ClassificationUnsupported(_)
            | E::Extrapolation { .. }
            | E::GapClosing(_)
            | E::SingularElement(_) => CliError::Validation(e.to_string()),
            E::DegenerateMidgap { .. } | E::FitUnsupported(_) | E::Numerical(_) => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sshchain", version, about = "Spectra, topology, transmission and fits for SSH resonator chains")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// JSON config merged over the command defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one config entry by dotted path, e.g. circuit.lv_nH.2=15.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = config::parse_override)]
    set: Vec<(String, String)>,

    /// Output directory, created if missing.
    #[arg(long, global = true, env = "SSHCHAIN_OUT", default_value = ".")]
    out: PathBuf,

    /// Output file label; a UTC timestamp if unset.
    #[arg(long, global = true)]
    label: Option<String>,

    /// RNG seed for commands that draw random numbers (disorder, fit).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Validate and print the resolved config without computing.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Cmd {
    /// Eigenmodes, labels and participation ratios of one chain.
    Spectrum,
    /// Spectrum and phase tag across a coupling-inductance grid.
    Sweep,
    /// Winding number in k-space or real space.
    Winding,
    /// Inverse participation ratios and decay lengths of every mode.
    Ipr,
    /// Winding-number statistics over a seeded disorder ensemble.
    Disorder,
    /// Two-port transmission with peak extraction.
    S21,
    /// Transmission across gate settings.
    Gatesweep,
    /// Spectrum against signal current at fixed gates.
    Powersweep,
    /// Circuit parameters from a list of eigenfrequencies.
    Fit,
}

fn read_config(path: &PathBuf) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
}

fn drive<C: Command>(cli: &Cli) -> Result<(), CliError> {
    let document = cli.config.as_ref().map(read_config).transpose()?;
    let mut overrides = Vec::new();
    if let Some(seed) = cli.seed {
        let path = C::SEED_PATH
            .ok_or_else(|| CliError::Validation(format!("--seed has no effect on `{}`", C::NAME)))?;
        overrides.push((path.to_string(), seed.to_string()));
    }
    overrides.extend(cli.set.iter().cloned());
    let (mut cmd, _) = config::resolve(&C::default(), document, &overrides)?;
    cmd.validate()?;
    let resolved = serde_json::to_value(&cmd).expect("config serializes");
    if cli.dry_run {
        println!("{}", serde_json::to_string_pretty(&json!({ "command": C::NAME, "config": resolved })).unwrap());
        return Ok(());
    }

    let created = chrono::Utc::now();
    let label = cli.label.clone().unwrap_or_else(|| created.format("%Y%m%dT%H%M%SZ").to_string());
    let mut out = Output::new(&cli.out, C::NAME, &label)?;
    let report = cmd.run(&mut out)?;
    let seed = C::SEED_PATH.and_then(|p| resolved.pointer(&format!("/{}", p.replace('.', "/"))).cloned());
    out.sidecar(json!({
        "command": C::NAME,
        "label": label,
        "created_utc": created.to_rfc3339(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "threads": rayon::current_num_threads(),
        "config": resolved,
        "summary": report.summary,
        "details": report.details,
    }))?;
    println!("{}", report.summary);
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("--threads: {e}")))?;
    }
    match cli.command {
        Cmd::Spectrum => drive::<Spectrum>(cli),
        Cmd::Sweep => drive::<Sweep>(cli),
        Cmd::Winding => drive::<Winding>(cli),
        Cmd::Ipr => drive::<Ipr>(cli),
        Cmd::Disorder => drive::<Disorder>(cli),
        Cmd::S21 => drive::<S21>(cli),
        Cmd::Gatesweep => drive::<GateSweep>(cli),
        Cmd::Powersweep => drive::<PowerSweep>(cli),
        Cmd::Fit => drive::<Fit>(cli),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use autoctl::diagnostics::envelope_fit;
use autoctl::experiments::{run, verify, verify_manifest, RunConfig, Suite, Tolerances};
use autoctl::lattice::{FieldRecord, ModeField};
use autoctl::steppers::{estimate_constants_report, EstimationSpec};
use autoctl::Error;

/// Overrides the directory that run outputs are written under.
const OUTPUT_ROOT_ENV: &str = "AUTOCTL_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "autoctl", version, about = "Spectral laboratory for time-dilatation schemes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a TOML run config.
    Run {
        config: PathBuf,
        /// Output root (default: $AUTOCTL_OUTPUT_ROOT, else ./runs).
        #[arg(long)]
        output_root: Option<PathBuf>,
    },
    /// Run an acceptance suite (acceptance, kernel, envelope, testbeds, all),
    /// or re-hash the outputs listed in a manifest.json.
    Verify { suite: String },
    /// Print estimated contraction constants for dimension n and truncation M.
    Constants {
        n: usize,
        #[arg(value_name = "M")]
        m: i64,
        /// Norm bound C of the data.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a decay envelope to a field file.
    Fit { field: PathBuf },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_BLOWUP: u8 = 3;

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Validation(_) | Error::Config(_) => ExitCode::from(EXIT_VALIDATION),
        Error::NonFinite { .. } => ExitCode::from(EXIT_BLOWUP),
        _ => ExitCode::FAILURE,
    }
}

fn output_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn cmd_run(config: &Path, root: PathBuf) -> Result<ExitCode, Error> {
    let cfg = RunConfig::load(config)?;
    let manifest = run(&cfg, &root)?;
    let dir = root.join(cfg.output_subdir());
    println!("run {} ({:?}) -> {}", cfg.id, manifest.status, dir.display());
    for ev in &manifest.events {
        let at = ev.time.map_or(String::new(), |t| format!(" at t={t:.6}"));
        println!("  event {}{}: {}", ev.kind, at, ev.detail);
    }
    for f in &manifest.outputs {
        println!("  {} {} bytes sha256={}", f.name, f.bytes, f.sha256);
    }
    Ok(ExitCode::from(manifest.exit_code() as u8))
}

fn cmd_verify(arg: &str) -> Result<ExitCode, Error> {
    let path = Path::new(arg);
    if path.is_file() {
        let bad = verify_manifest(path)?;
        if bad.is_empty() {
            println!("manifest ok: every listed output matches its digest");
            return Ok(ExitCode::SUCCESS);
        }
        println!("manifest mismatch: {}", bad.join(", "));
        return Ok(ExitCode::FAILURE);
    }
    let suite: Suite = arg.parse()?;
    let report = verify(suite, &Tolerances::default())?;
    print!("{}", report.table());
    let failing = report.failing();
    if failing.is_empty() {
        println!("{} of {} criteria passed", report.outcomes.len(), report.outcomes.len());
        Ok(ExitCode::SUCCESS)
    } else {
        for o in failing {
            eprintln!("failed: #{} {}", o.id, o.name);
        }
        Ok(ExitCode::FAILURE)
    }
}

fn cmd_constants(n: usize, m: i64, c: f64, seed: u64) -> Result<ExitCode, Error> {
    let spec = EstimationSpec { c, seed, ..Default::default() };
    let report = estimate_constants_report(n, m, &spec)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_fit(field: &Path) -> Result<ExitCode, Error> {
    let rec: FieldRecord = serde_json::from_slice(&std::fs::read(field)?)?;
    let v = ModeField::from_json(&rec)?;
    let fit = envelope_fit(&v)?;
    println!("{}", serde_json::to_string_pretty(&fit)?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, output_root: root } => cmd_run(&config, output_root(root)),
        Command::Verify { suite } => cmd_verify(&suite),
        Command::Constants { n, m, c, seed } => cmd_constants(n, m, c, seed),
        Command::Fit { field } => cmd_fit(&field),
    };
    result.unwrap_or_else(|e| fail(&e))
}

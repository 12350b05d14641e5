//! Command-line front end: validate descriptors, run scenarios, force
//! diagnoses.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fbdiag::fde::FdeMode;
use fbdiag::model::{parse_document, validate};
use fbdiag::scenario::{self, RunOptions, Scenario, ScenarioError, Sinks};

#[derive(Parser)]
#[command(name = "fbdiag", version, about = "Function-block runtime and fault diagnostic engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a system descriptor (or a scenario file) for errors.
    Validate { file: PathBuf },
    /// Run a scenario and write trace.csv, telemetry.ndjson and report.json.
    Run {
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        fde: Option<Mode>,
    },
    /// Force a diagnosis of one fault pathway at t=0 and print the report.
    Diagnose {
        scenario: PathBuf,
        #[arg(long)]
        pathway: String,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Off,
    Monitor,
    Auto,
}

impl From<Mode> for FdeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Off => FdeMode::Off,
            Mode::Monitor => FdeMode::Monitor,
            Mode::Auto => FdeMode::Auto,
        }
    }
}

/// Failure with its exit status: 1 for domain errors, 2 for IO and usage.
struct Failure(u8, String);

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let code = match e {
            ScenarioError::Io { .. } | ScenarioError::Output(_) => 2,
            _ => 1,
        };
        Failure(code, e.to_string())
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure(2, format!("{}: {e}", path.display()))
}

fn cmd_validate(file: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(file).map_err(|e| io_failure(file, e))?;
    if file.extension().is_some_and(|x| x == "json") {
        Scenario::from_json(&text, file.parent().unwrap_or(Path::new(".")))?;
        return Ok(());
    }
    let diags = match parse_document(&text) {
        Ok(sys) => validate(&sys),
        Err(d) => d.0,
    };
    if diags.is_empty() {
        return Ok(());
    }
    let lines: Vec<String> = diags.iter().map(|d| format!("{}: {d}", file.display())).collect();
    Err(Failure(1, lines.join("\n")))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = dir.join(name);
    File::create(&path).map(BufWriter::new).map_err(|e| io_failure(&path, e))
}

fn cmd_run(path: &Path, dir: &Path, seed: Option<u64>, fde: Option<Mode>) -> Result<(), Failure> {
    let s = Scenario::load(path)?;
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let opts = RunOptions { seed, fde: fde.map(Into::into), keep_trace: false };
    let mode = opts.fde.unwrap_or_else(|| s.fde_mode());
    let mut trace = create(dir, "trace.csv")?;
    let mut telemetry = match mode {
        FdeMode::Off => None,
        _ => Some(create(dir, "telemetry.ndjson")?),
    };
    let sinks = Sinks {
        trace: Some(&mut trace),
        telemetry: telemetry.as_mut().map(|w| w as &mut dyn Write),
    };
    let out = scenario::run(&s, opts, sinks)?;
    trace.flush().map_err(|e| io_failure(dir, e))?;
    if let Some(w) = telemetry.as_mut() {
        w.flush().map_err(|e| io_failure(dir, e))?;
    }
    let report = out.report;
    let report_path = dir.join("report.json");
    fs::write(&report_path, report.to_json()).map_err(|e| io_failure(&report_path, e))?;

    eprintln!(
        "{}: {} ms simulated, {} events, {} gates, wall clock {:.0} ms ({:.1} us per poll)",
        if report.scenario.is_empty() { "scenario" } else { &report.scenario },
        report.duration_ms,
        report.counters.events_processed,
        report.counters.gates,
        report.counters.wall_clock_ms,
        report.counters.per_tick_us,
    );
    for c in &report.compliance {
        eprintln!("  {} < {} ms: {}/{}", c.requirement, c.budget_ms, c.met, c.total);
    }
    for d in &report.diagnoses {
        eprintln!("  diagnosis on {} at {} ms: {:?}", d.pathway, d.started_ms, d.hypothesis);
    }
    Ok(())
}

fn cmd_diagnose(path: &Path, pathway: &str, seed: Option<u64>) -> Result<(), Failure> {
    let s = Scenario::load(path)?;
    let report = scenario::diagnose(&s, pathway, seed)?;
    let mut out = io::stdout().lock();
    match writeln!(out, "{}", report.to_json()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(Failure(2, format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { file } => cmd_validate(file),
        Command::Run { scenario, output, seed, fde } => cmd_run(scenario, output, *seed, *fde),
        Command::Diagnose { scenario, pathway, seed } => cmd_diagnose(scenario, pathway, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}

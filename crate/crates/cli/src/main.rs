//! Command-line front end: run, batch, analyze, scan-debug and validate.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use svcnav::analysis::{find_equilibria, CertificateBuilder, EquilibriumSummary};
use svcnav::geometry::Point;
use svcnav::scenario::{initial_conditions, load_preset, load_scenario, preset_json, InitialConditions, ScenarioError};
use svcnav::simulator::{batch_for_each, simulate, RunOutcome};
use svcnav::{AnyScenario, Scanner, Scenario, TerminalStatus};

#[derive(Parser, Debug)]
#[command(name = "svcnav", version, about = "Reactive navigation with smoothed safety velocity cones")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one trajectory and write it as CSV.
    Run {
        /// Preset name or scenario file.
        scenario: String,
        /// Start point; defaults to the scenario's first initial condition.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// Output root; the CSV goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate N sampled starts and certify the batch.
    Batch {
        scenario: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Locate undesired equilibria and check the curvature condition.
    Analyze {
        scenario: String,
        /// Also write `equilibria.json` under this root.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the full range scan at a point.
    ScanDebug {
        scenario: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        at: Vec<f64>,
        /// Output root; the CSV goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load and validate a scenario.
    Validate { scenario: String },
}

/// Failure classes with distinct exit codes.
#[derive(Debug)]
enum Failure {
    /// Unreadable or invalid input: exit 2.
    Invalid(anyhow::Error),
    /// Safety breach or certification failure: exit 1.
    Check(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Invalid(e)
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Invalid(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// Accepts a path to a scenario file or the name of a shipped preset.
fn load(source: &str) -> Result<AnyScenario, Failure> {
    let path = Path::new(source);
    if path.exists() {
        return Ok(load_scenario(path)?);
    }
    if preset_json(source).is_some() {
        return Ok(load_preset(source)?);
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or(source);
    if preset_json(name).is_some() {
        return Ok(load_preset(name)?);
    }
    Err(Failure::Invalid(anyhow::anyhow!("no scenario file or preset named {source}")))
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { scenario, x0, out } => match load(&scenario)? {
            AnyScenario::Planar(s) => run(&s, x0.as_deref(), out.as_deref()),
            AnyScenario::Spatial(s) => run(&s, x0.as_deref(), out.as_deref()),
        },
        Command::Batch { scenario, n, seed, out } => match load(&scenario)? {
            AnyScenario::Planar(s) => batch(s, n, seed, &out),
            AnyScenario::Spatial(s) => batch(s, n, seed, &out),
        },
        Command::Analyze { scenario, out } => match load(&scenario)? {
            AnyScenario::Planar(s) => analyze(&s, out.as_deref()),
            AnyScenario::Spatial(s) => analyze(&s, out.as_deref()),
        },
        Command::ScanDebug { scenario, at, out } => match load(&scenario)? {
            AnyScenario::Planar(s) => scan_debug(&s, &at, out.as_deref()),
            AnyScenario::Spatial(s) => scan_debug(&s, &at, out.as_deref()),
        },
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            println!("ok: {} ({}D, sha256 {})", s.label(), s.dimension(), s.hash());
            Ok(())
        }
    }
}

fn point<const N: usize>(values: &[f64], flag: &str) -> Result<Point<N>> {
    if values.len() != N {
        bail!("--{flag} needs {N} comma-separated values, got {}", values.len());
    }
    Ok(Point::<N>::from_iterator(values.iter().cloned()))
}

fn label_dir(root: &Path, label: &str) -> Result<PathBuf> {
    let dir = root.join(label);
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn run<const N: usize>(s: &Scenario<N>, x0: Option<&[f64]>, out: Option<&Path>) -> Result<(), Failure> {
    let start = match x0 {
        Some(v) => point::<N>(v, "x0")?,
        None => *initial_conditions(s)?
            .first()
            .ok_or_else(|| anyhow::anyhow!("scenario has no initial conditions; pass --x0"))?,
    };
    let scanner = Scanner::new(s.scan.clone()).map_err(anyhow::Error::from)?;
    let t = simulate(&s.world, &start, &s.params, &scanner, &s.sim).map_err(anyhow::Error::from)?;
    match out {
        Some(root) => {
            let path = label_dir(root, &s.label)?.join("trajectory_0.csv");
            write_file(&path, &t.to_csv())?;
        }
        None => {
            let stdout = io::stdout();
            t.write_csv(BufWriter::new(stdout.lock())).context("cannot write CSV")?;
        }
    }
    eprintln!(
        "{}: {} after {} samples, min b {:.6}",
        s.label,
        t.terminal_status.as_str(),
        t.samples.len(),
        t.min_b_observed
    );
    if t.terminal_status == TerminalStatus::SafetyBreach {
        return Err(Failure::Check(format!("safety breach, min b {:.6} < eps {}", t.min_b_observed, s.params.eps)));
    }
    Ok(())
}

fn batch<const N: usize>(mut s: Scenario<N>, n: usize, seed: u64, out: &Path) -> Result<(), Failure> {
    match &mut s.initial_conditions {
        InitialConditions::Sample(spec) => {
            spec.count = n;
            spec.seed = seed;
        }
        InitialConditions::Explicit(_) => {
            return Err(Failure::Invalid(anyhow::anyhow!(
                "batch needs a scenario with a sampled initial condition block"
            )))
        }
    }
    let dir = label_dir(out, &s.label)?;
    let mut builder = CertificateBuilder::new(&s.params, s.sim.safety_log_tolerance);
    let mut write_error = None;
    batch_for_each(&s, |run| match &run.outcome {
        RunOutcome::Completed(t) => {
            builder.add(t);
            let path = dir.join(format!("trajectory_{}.csv", run.index));
            if let Err(e) = write_file(&path, &t.to_csv()) {
                write_error.get_or_insert(e);
            }
        }
        RunOutcome::Rejected(e) => {
            eprintln!("start {} rejected: {e}", run.index);
            builder.add_rejected();
        }
    })?;
    if let Some(e) = write_error {
        return Err(Failure::Invalid(e));
    }
    let certificate = builder.finish(&s.label, &s.hash(), &find_equilibria(&s.world, &s.params));
    write_file(&dir.join("certificate.json"), &(certificate.to_json() + "\n"))?;
    eprintln!(
        "{}: {} runs, {} rejected, converged {}, min b {}, certificate {}",
        s.label,
        certificate.runs,
        certificate.rejected,
        certificate.convergence.converged,
        certificate.safety.min_b.map_or("n/a".into(), |b| format!("{b:.6}")),
        if certificate.pass { "pass" } else { "fail" }
    );
    if !certificate.pass {
        return Err(Failure::Check(format!("certificate for {} failed", s.label)));
    }
    Ok(())
}

fn analyze<const N: usize>(s: &Scenario<N>, out: Option<&Path>) -> Result<(), Failure> {
    let hash = s.hash();
    let search = find_equilibria(&s.world, &s.params);
    let equilibria: Vec<EquilibriumSummary> =
        search.reports.iter().map(|r| EquilibriumSummary::from_report(r, &hash)).collect();
    let issues: Vec<String> = search.issues.iter().map(|e| e.to_string()).collect();
    let report = json!({
        "label": s.label,
        "scenario_hash": hash,
        "equilibria": equilibria,
        "issues": issues,
    });
    let text = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)? + "\n";
    match out {
        Some(root) => write_file(&label_dir(root, &s.label)?.join("equilibria.json"), &text)?,
        None => io::stdout().write_all(text.as_bytes()).context("cannot write report")?,
    }
    Ok(())
}

fn scan_debug<const N: usize>(s: &Scenario<N>, at: &[f64], out: Option<&Path>) -> Result<(), Failure> {
    let x = point::<N>(at, "at")?;
    let scanner = Scanner::new(s.scan.clone()).map_err(anyhow::Error::from)?;
    let scan = scanner.scan(&s.world, &x).map_err(anyhow::Error::from)?;
    let reading = svcnav::sensor::min_range(&scan);
    match out {
        Some(root) => write_file(&label_dir(root, &s.label)?.join("scan_0.csv"), &scan.to_csv())?,
        None => io::stdout().write_all(scan.to_csv().as_bytes()).context("cannot write CSV")?,
    }
    eprintln!(
        "{} rays, rho* {:.6} at ray {}{}",
        scan.rays.len(),
        reading.rho_star,
        reading.ray_index,
        if reading.in_range { "" } else { " (saturated)" }
    );
    Ok(())
}

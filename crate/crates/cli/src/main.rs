use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use transim6_core::expect::Expectations;
use transim6_core::metrics::{format_report_row, read_report_csv, MetricsReport, PlrDenominator, REPORT_HEADER};
use transim6_core::run::{run_to_dir, Outputs, REPORT_FILE};
use transim6_core::scenario::{ScenarioConfig, Traffic};
use transim6_core::sweep::{run_sweep, write_plot_data, SweepSpec, FAILURES_FILE, SPEC_FILE};
use transim6_core::GatewayKind;

/// IPv4/IPv6 transition-mechanism simulator.
#[derive(Parser)]
#[command(name = "transim6", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace and report.
    Run {
        /// Scenario file; built-in defaults when omitted.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        mechanism: Option<GatewayKind>,
        #[arg(long)]
        traffic: Option<Traffic>,
        #[arg(long)]
        packet_size: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        /// `received` (default) or `sent`.
        #[arg(long)]
        plr_denominator: Option<PlrDenominator>,
        /// Skip writing trace.tr.
        #[arg(long)]
        no_trace: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every cell of a sweep file.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a report against an expectations file.
    Report {
        #[arg(long)]
        check: PathBuf,
        /// Sweep or run directory, or a report CSV.
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Write the table and figure CSVs for a sweep directory.
    Plotdata {
        #[arg(long = "in")]
        input: PathBuf,
        /// Defaults to the input directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command.execute() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn read_rows(path: &Path) -> Result<Vec<MetricsReport>> {
    let file = if path.is_dir() { path.join(REPORT_FILE) } else { path.to_path_buf() };
    let f = File::open(&file).with_context(|| format!("cannot open {}", file.display()))?;
    read_report_csv(BufReader::new(f)).with_context(|| format!("{}", file.display()))
}

impl Command {
    /// `Ok(false)` means the command ran but found failures.
    fn execute(self) -> Result<bool> {
        match self {
            Command::Run {
                scenario,
                mechanism,
                traffic,
                packet_size,
                seed,
                plr_denominator,
                no_trace,
                out,
            } => {
                let mut cfg = match &scenario {
                    Some(p) => ScenarioConfig::load(p)?,
                    None => ScenarioConfig::default(),
                };
                if let Some(m) = mechanism {
                    cfg.mechanism = m;
                }
                if let Some(t) = traffic {
                    cfg.traffic = t;
                }
                if let Some(n) = packet_size {
                    if n == 0 || n > 65_495 {
                        bail!("--packet-size must be between 1 and 65495");
                    }
                    cfg.packet_size = n;
                }
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                if let Some(d) = plr_denominator {
                    cfg.plr_denominator = d;
                }
                let outputs = Outputs {
                    trace: !no_trace,
                    jitter: true,
                };
                let res = run_to_dir(&cfg, &out, outputs)?;
                println!("{REPORT_HEADER}");
                println!("{}", format_report_row(&res.report));
                Ok(true)
            }
            Command::Sweep { spec, out } => {
                let spec = SweepSpec::load(&spec)?;
                let n = spec.cells().len();
                let outcome = run_sweep(&spec, &out)?;
                println!("{} of {n} cells written to {}", outcome.rows.len(), out.display());
                for f in &outcome.failures {
                    eprintln!("cell {} failed: {}", f.cell, f.message);
                }
                if !outcome.failures.is_empty() {
                    eprintln!("see {}", out.join(FAILURES_FILE).display());
                }
                Ok(outcome.failures.is_empty())
            }
            Command::Report { check, input } => {
                let expectations = Expectations::load(&check)?;
                let rows = read_rows(&input)?;
                let results = expectations.check(&rows);
                let failed = results.iter().filter(|r| !r.passed()).count();
                for r in &results {
                    let status = if r.passed() { "PASS" } else { "FAIL" };
                    println!("{status} line {}: {} ({} checked)", r.line, r.text, r.checked);
                    for v in &r.violations {
                        println!("    {v}");
                    }
                }
                println!("{} passed, {failed} failed", results.len() - failed);
                Ok(failed == 0)
            }
            Command::Plotdata { input, out } => {
                let rows = read_rows(&input)?;
                let spec_path = input.join(SPEC_FILE);
                let spec = if spec_path.is_file() {
                    SweepSpec::load(&spec_path)?
                } else {
                    SweepSpec::default()
                };
                let out = out.unwrap_or(input);
                std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
                for p in write_plot_data(&rows, &spec, &out)? {
                    println!("{}", p.display());
                }
                Ok(true)
            }
        }
    }
}

//! One scenario run: simulate, audit, measure, and write the output
//! directory.
//!
//! An output directory holds `effective.scenario` (every key, including the
//! seed), `report.csv`, `jitter.csv`, and optionally `trace.tr`. Each file
//! is written to a temporary name and renamed into place.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::metrics::{write_jitter_csv, write_report_csv, FlowStats, FlowStatsCollector, MetricsReport};
use crate::scenario::ScenarioConfig;
use crate::sim::{AuditError, AuditSummary, SimError, SimOutcome, Simulation, Tee, TraceAuditor};
use crate::trace::{TraceSink, TraceWriter};

pub const TRACE_FILE: &str = "trace.tr";
pub const REPORT_FILE: &str = "report.csv";
pub const JITTER_FILE: &str = "jitter.csv";
pub const EFFECTIVE_FILE: &str = "effective.scenario";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub fn io_error(path: &Path, source: io::Error) -> RunError {
    RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub report: MetricsReport,
    pub flows: BTreeMap<u32, FlowStats>,
    pub audit: AuditSummary,
    pub outcome: SimOutcome,
}

/// Runs `cfg` in memory. Every record also goes to `extra` when given.
pub fn simulate(cfg: &ScenarioConfig, extra: Option<&mut dyn TraceSink>) -> Result<RunResult, RunError> {
    let sim = Simulation::new(cfg)?;
    let min_delay = cfg.topology.access_delay + cfg.topology.bottleneck_delay;
    let mut auditor = TraceAuditor::new(cfg.queue_capacity).with_min_delay(min_delay);
    let mut collector = FlowStatsCollector::new();
    let outcome = {
        let mut sinks: Vec<&mut dyn TraceSink> = vec![&mut auditor, &mut collector];
        if let Some(e) = extra {
            sinks.push(e);
        }
        sim.run(&mut Tee(sinks))?
    };
    let audit = auditor.finish(&outcome.in_flight)?;
    let flows = collector.finish(outcome.end_time);
    let report = MetricsReport::from_flows(
        cfg.mechanism,
        cfg.traffic,
        cfg.packet_size,
        &flows,
        outcome.end_time.as_secs_f64(),
        cfg.plr_denominator,
    );
    Ok(RunResult {
        report,
        flows,
        audit,
        outcome,
    })
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<(), RunError>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let file = File::create(&tmp).map_err(io_err(&tmp))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(&tmp))?;
    drop(w);
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Which optional files [`run_to_dir`] writes. `effective.scenario` and
/// `report.csv` are always written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outputs {
    pub trace: bool,
    pub jitter: bool,
}

impl Outputs {
    pub const ALL: Outputs = Outputs {
        trace: true,
        jitter: true,
    };
    pub const REPORT_ONLY: Outputs = Outputs {
        trace: false,
        jitter: false,
    };
}

/// Runs `cfg` and writes the output directory.
pub fn run_to_dir(cfg: &ScenarioConfig, out: &Path, outputs: Outputs) -> Result<RunResult, RunError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let result = if outputs.trace {
        let path = out.join(TRACE_FILE);
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let file = File::create(&tmp).map_err(io_err(&tmp))?;
        let mut writer = TraceWriter::new(BufWriter::with_capacity(1 << 20, file));
        let result = simulate(cfg, Some(&mut writer))?;
        writer.finish().map_err(io_err(&tmp))?;
        fs::rename(&tmp, &path).map_err(io_err(&path))?;
        result
    } else {
        simulate(cfg, None)?
    };
    write_atomic(&out.join(EFFECTIVE_FILE), |w| w.write_all(cfg.to_scenario_text().as_bytes()))?;
    write_atomic(&out.join(REPORT_FILE), |w| {
        write_report_csv(w, std::slice::from_ref(&result.report))
    })?;
    if outputs.jitter {
        write_atomic(&out.join(JITTER_FILE), |w| write_jitter_csv(w, &result.report))?;
    }
    Ok(result)
}

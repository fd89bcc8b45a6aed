//! Experiment sweeps over mechanism × traffic × packet size.
//!
//! A sweep file uses the scenario syntax with its own keys:
//!
//! ```text
//! scenario         = paper-default.scenario   # base config, relative to this file
//! sizes.throughput = 32,64,128,256,512,768,1024
//! sizes.eed        = 256,512,1000,1256
//! mechanisms       = DWC,BDSIIT,DSTM
//! traffics         = FTP,CBR
//! repeats          = 5
//! seed             = 42                       # overrides the scenario seed
//! traces           = false
//! ```
//!
//! `sizes` sets both size lists at once. Every combination of mechanism,
//! traffic and size (the union of both lists) is one cell. A cell runs
//! `repeats` times with seeds `seed`, `seed + 1`, ... and the repeats are
//! pooled into one report row, as if they were one long run. The same seeds
//! are used in every cell.
//!
//! Output layout:
//!
//! ```text
//! OUT/sweep.spec                      effective sweep file
//! OUT/report.csv                      one row per successful cell
//! OUT/failures.csv                    cells that failed, if any
//! OUT/table1.csv ... table4.csv       result tables
//! OUT/fig4.csv ... fig9.csv           plot data, x = packet size
//! OUT/cells/<MECH>-<TRAFFIC>-<SIZE>/report.csv
//! OUT/cells/<MECH>-<TRAFFIC>-<SIZE>/rep<N>/{effective.scenario,report.csv}
//! ```
//!
//! With `traces = true` each repeat directory also gets `trace.tr` and
//! `jitter.csv`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::gateway::GatewayKind;
use crate::metrics::{format_metric, write_report_csv, FlowStats, MetricsReport};
use crate::run::{io_error, run_to_dir, write_atomic, Outputs, RunError, REPORT_FILE};
use crate::scenario::{format_issues, KeyIssue, ScenarioConfig, ScenarioError, Traffic};

pub const SPEC_FILE: &str = "sweep.spec";
pub const FAILURES_FILE: &str = "failures.csv";
pub const CELLS_DIR: &str = "cells";

pub const DEFAULT_THROUGHPUT_SIZES: [u32; 7] = [32, 64, 128, 256, 512, 768, 1024];
pub const DEFAULT_EED_SIZES: [u32; 4] = [256, 512, 1000, 1256];

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep file:\n{}", format_issues(.0))]
    Invalid(Vec<KeyIssue>),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("base scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepSpec {
    pub scenario: Option<PathBuf>,
    pub throughput_sizes: Vec<u32>,
    pub eed_sizes: Vec<u32>,
    pub mechanisms: Vec<GatewayKind>,
    pub traffics: Vec<Traffic>,
    pub repeats: u32,
    pub seed: Option<u64>,
    pub traces: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            scenario: None,
            throughput_sizes: DEFAULT_THROUGHPUT_SIZES.to_vec(),
            eed_sizes: DEFAULT_EED_SIZES.to_vec(),
            mechanisms: GatewayKind::ALL.to_vec(),
            traffics: vec![Traffic::Ftp, Traffic::Cbr],
            repeats: 1,
            seed: None,
            traces: false,
        }
    }
}

/// One point of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub mechanism: GatewayKind,
    pub packet_size: u32,
    pub traffic: Traffic,
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.mechanism, self.traffic, self.packet_size)
    }
}

fn list<T>(v: &str, parse: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err("list is empty".into());
    }
    Ok(items)
}

fn size(s: &str) -> Result<u32, String> {
    match s.parse::<u32>() {
        Ok(n) if (1..=65_495).contains(&n) => Ok(n),
        _ => Err(format!("bad packet size `{s}`")),
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self, SweepError> {
        let mut spec = SweepSpec::default();
        let mut issues = Vec::new();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                issues.push(KeyIssue {
                    line,
                    key: String::new(),
                    message: format!("expected `key = value`, found `{body}`"),
                });
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            if let Some(first) = seen.insert(k.to_string(), line) {
                issues.push(KeyIssue {
                    line,
                    key: k.into(),
                    message: format!("already set on line {first}"),
                });
                continue;
            }
            let r: Result<(), String> = (|| {
                match k {
                    "scenario" => spec.scenario = (!v.is_empty()).then(|| PathBuf::from(v)),
                    "sizes" => {
                        spec.throughput_sizes = list(v, size)?;
                        spec.eed_sizes = spec.throughput_sizes.clone();
                    }
                    "sizes.throughput" => spec.throughput_sizes = list(v, size)?,
                    "sizes.eed" => spec.eed_sizes = list(v, size)?,
                    "mechanisms" => spec.mechanisms = list(v, |s| s.parse().map_err(|e| format!("{e}")))?,
                    "traffics" => spec.traffics = list(v, |s| s.parse())?,
                    "repeats" => {
                        spec.repeats = match v.parse() {
                            Ok(n) if (1..=1000).contains(&n) => n,
                            _ => return Err(format!("expected 1 to 1000, found `{v}`")),
                        }
                    }
                    "seed" => spec.seed = Some(v.parse().map_err(|_| format!("expected an integer, found `{v}`"))?),
                    "traces" => {
                        spec.traces = v.parse().map_err(|_| format!("expected true or false, found `{v}`"))?
                    }
                    _ => return Err("unknown key".into()),
                }
                Ok(())
            })();
            if let Err(message) = r {
                issues.push(KeyIssue {
                    line,
                    key: k.into(),
                    message,
                });
            }
        }
        if issues.is_empty() {
            Ok(spec)
        } else {
            Err(SweepError::Invalid(issues))
        }
    }

    /// Loads a sweep file; a relative `scenario` is resolved against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, SweepError> {
        let text = fs::read_to_string(path).map_err(|source| SweepError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut spec = Self::parse(&text)?;
        if let (Some(s), Some(dir)) = (&spec.scenario, path.parent()) {
            if s.is_relative() {
                let joined = dir.join(s);
                spec.scenario = Some(fs::canonicalize(&joined).unwrap_or(joined));
            }
        }
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let scenario = self.scenario.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        s.push_str(&format!("scenario = {scenario}\n"));
        s.push_str(&format!("sizes.throughput = {}\n", join(&self.throughput_sizes)));
        s.push_str(&format!("sizes.eed = {}\n", join(&self.eed_sizes)));
        s.push_str(&format!("mechanisms = {}\n", join(&self.mechanisms)));
        s.push_str(&format!("traffics = {}\n", join(&self.traffics)));
        s.push_str(&format!("repeats = {}\n", self.repeats));
        if let Some(seed) = self.seed {
            s.push_str(&format!("seed = {seed}\n"));
        }
        s.push_str(&format!("traces = {}\n", self.traces));
        s
    }

    pub fn sizes(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.throughput_sizes.iter().chain(&self.eed_sizes).copied().collect();
        set.into_iter().collect()
    }

    /// All cells, sorted by mechanism, size, then traffic.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells: BTreeSet<Cell> = BTreeSet::new();
        for &mechanism in &self.mechanisms {
            for &traffic in &self.traffics {
                for packet_size in self.sizes() {
                    cells.insert(Cell {
                        mechanism,
                        packet_size,
                        traffic,
                    });
                }
            }
        }
        cells.into_iter().collect()
    }

    /// The base scenario: the referenced file, or the built-in defaults.
    pub fn base_config(&self) -> Result<ScenarioConfig, SweepError> {
        let mut cfg = match &self.scenario {
            Some(p) => ScenarioConfig::load(p)?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

/// Seed of repeat `rep`. Repeat 0 uses the base seed unchanged.
pub fn derive_seed(base: u64, rep: u32) -> u64 {
    base.wrapping_add(u64::from(rep))
}

pub fn cell_config(base: &ScenarioConfig, cell: Cell, rep: u32) -> ScenarioConfig {
    let mut cfg = base.clone();
    cfg.mechanism = cell.mechanism;
    cfg.traffic = cell.traffic;
    cfg.packet_size = cell.packet_size;
    cfg.seed = derive_seed(base.seed, rep);
    cfg
}

/// Pools repeat results into one row. Flow `f` of repeat `r` becomes flow
/// `r * 1_000_000 + f` in the jitter map.
pub fn pool_repeats(base: &ScenarioConfig, cell: Cell, reps: &[(BTreeMap<u32, FlowStats>, f64)]) -> MetricsReport {
    let mut flows = BTreeMap::new();
    let mut total = 0.0;
    for (r, (fs, t)) in reps.iter().enumerate() {
        total += t;
        for (&id, f) in fs {
            flows.insert(r as u32 * 1_000_000 + id, f.clone());
        }
    }
    MetricsReport::from_flows(
        cell.mechanism,
        cell.traffic,
        cell.packet_size,
        &flows,
        total,
        base.plr_denominator,
    )
}

#[derive(Debug, Clone)]
pub struct CellFailure {
    pub cell: Cell,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// Sorted by mechanism, size, then traffic.
    pub rows: Vec<MetricsReport>,
    pub failures: Vec<CellFailure>,
}

fn run_cell(base: &ScenarioConfig, spec: &SweepSpec, cell: Cell, dir: &Path) -> Result<MetricsReport, RunError> {
    let outputs = if spec.traces { Outputs::ALL } else { Outputs::REPORT_ONLY };
    let mut reps = Vec::with_capacity(spec.repeats as usize);
    for rep in 0..spec.repeats {
        let cfg = cell_config(base, cell, rep);
        let res = run_to_dir(&cfg, &dir.join(format!("rep{rep}")), outputs)?;
        reps.push((res.flows, res.outcome.end_time.as_secs_f64()));
    }
    let report = pool_repeats(base, cell, &reps);
    write_atomic(&dir.join(REPORT_FILE), |w| write_report_csv(w, std::slice::from_ref(&report)))?;
    Ok(report)
}

/// Runs every cell and writes the output directory. A failing cell is
/// recorded in `failures.csv` and the rest of the sweep still runs.
pub fn run_sweep(spec: &SweepSpec, out: &Path) -> Result<SweepOutcome, SweepError> {
    let base = spec.base_config()?;
    fs::create_dir_all(out).map_err(|source| SweepError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    write_atomic(&out.join(SPEC_FILE), |w| w.write_all(spec.to_text().as_bytes()))?;
    let cells = spec.cells();
    let results: Vec<_> = cells
        .par_iter()
        .map(|&cell| {
            let dir = out.join(CELLS_DIR).join(cell.to_string());
            (cell, run_cell(&base, spec, cell, &dir))
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (cell, r) in results {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(CellFailure {
                cell,
                message: e.to_string(),
            }),
        }
    }
    write_atomic(&out.join(REPORT_FILE), |w| write_report_csv(w, &rows))?;
    let failures_path = out.join(FAILURES_FILE);
    if failures.is_empty() {
        match fs::remove_file(&failures_path) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(io_error(&failures_path, e).into()),
            _ => {}
        }
    } else {
        write_atomic(&failures_path, |w| {
            writeln!(w, "mechanism,traffic,packet_size_bytes,error")?;
            for f in &failures {
                let msg = f.message.replace(['\n', ','], " ");
                writeln!(w, "{},{},{},{}", f.cell.mechanism, f.cell.traffic, f.cell.packet_size, msg)?;
            }
            Ok(())
        })?;
    }
    write_plot_data(&rows, spec, out)?;
    Ok(SweepOutcome { rows, failures })
}

/// A table with `x = packet size` and one value column per series.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub name: &'static str,
    pub columns: Vec<String>,
    pub rows: Vec<(u32, Vec<Option<f64>>)>,
}

impl PlotTable {
    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "packet_size_bytes,{}", self.columns.join(","))?;
        for (size, vals) in &self.rows {
            let vals: Vec<String> = vals.iter().map(|v| format_metric(*v)).collect();
            writeln!(w, "{size},{}", vals.join(","))?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Metric {
    ThroughputPct,
    Plr,
    Eed,
}

fn build(
    name: &'static str,
    rows: &[MetricsReport],
    sizes: &[u32],
    metric: Metric,
    series: &[(GatewayKind, Traffic)],
    with_traffic: bool,
) -> PlotTable {
    let index: BTreeMap<_, _> = rows.iter().map(|r| (r.key(), r)).collect();
    let columns = series
        .iter()
        .map(|(m, t)| if with_traffic { format!("{m}_{t}") } else { m.to_string() })
        .collect();
    let rows = sizes
        .iter()
        .map(|&s| {
            let vals = series
                .iter()
                .map(|&(m, t)| {
                    index.get(&(m, s, t)).and_then(|r| match metric {
                        Metric::ThroughputPct => r.throughput_pct,
                        Metric::Plr => r.plr_pct,
                        Metric::Eed => r.mean_eed_ms,
                    })
                })
                .collect();
            (s, vals)
        })
        .collect();
    PlotTable { name, columns, rows }
}

/// The result tables and figure data for a set of rows.
///
/// * `table1`: mean delay of DSTM, FTP and CBR.
/// * `table2`: mean delay of DWC and BDSIIT, FTP and CBR.
/// * `table3`, `table4`: FTP throughput percentage and loss rate.
/// * `fig4`, `fig5`: same data as `table1`; `fig6` as `table2`.
/// * `fig7`: mean delay of every mechanism, FTP and CBR.
/// * `fig8`: same data as `table3`; `fig9` as `table4`.
///
/// Columns are limited to mechanisms the sweep ran.
pub fn plot_tables(rows: &[MetricsReport], spec: &SweepSpec) -> Vec<PlotTable> {
    let ms = &spec.mechanisms;
    let both = |only: &[GatewayKind]| -> Vec<(GatewayKind, Traffic)> {
        ms.iter()
            .filter(|m| only.contains(m))
            .flat_map(|&m| [(m, Traffic::Ftp), (m, Traffic::Cbr)])
            .collect()
    };
    let dstm = both(&[GatewayKind::Dstm]);
    let siit = both(&[GatewayKind::Dwc, GatewayKind::BdSiit]);
    let all = both(&GatewayKind::ALL);
    let ftp: Vec<_> = ms.iter().map(|&m| (m, Traffic::Ftp)).collect();
    let (ts, es) = (&spec.throughput_sizes, &spec.eed_sizes);
    vec![
        build("table1", rows, es, Metric::Eed, &dstm, true),
        build("table2", rows, es, Metric::Eed, &siit, true),
        build("table3", rows, ts, Metric::ThroughputPct, &ftp, false),
        build("table4", rows, ts, Metric::Plr, &ftp, false),
        build("fig4", rows, es, Metric::Eed, &dstm, true),
        build("fig5", rows, es, Metric::Eed, &dstm, true),
        build("fig6", rows, es, Metric::Eed, &siit, true),
        build("fig7", rows, es, Metric::Eed, &all, true),
        build("fig8", rows, ts, Metric::ThroughputPct, &ftp, false),
        build("fig9", rows, ts, Metric::Plr, &ftp, false),
    ]
}

/// Writes every [`plot_tables`] table as `<name>.csv` into `dir`.
pub fn write_plot_data(rows: &[MetricsReport], spec: &SweepSpec, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let mut written = Vec::new();
    for t in plot_tables(rows, spec) {
        let path = dir.join(format!("{}.csv", t.name));
        write_atomic(&path, |w| t.write(w))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text = "scenario = base.scenario\nsizes.throughput = 32, 64\nsizes.eed = 256\n\
                    mechanisms = DWC,DSTM\ntraffics = FTP\nrepeats = 3\nseed = 7\ntraces = true\n";
        let spec = SweepSpec::parse(text).unwrap();
        assert_eq!(spec.throughput_sizes, vec![32, 64]);
        assert_eq!(spec.mechanisms, vec![GatewayKind::Dwc, GatewayKind::Dstm]);
        assert_eq!(spec.repeats, 3);
        assert_eq!(spec.seed, Some(7));
        assert!(spec.traces);
        assert_eq!(SweepSpec::parse(&spec.to_text()).unwrap(), spec);
    }

    #[test]
    fn errors_name_key_and_line() {
        let err = SweepSpec::parse("repeats = 0\nmechanisms = DWC,NAT64\ncolour = red\n").unwrap_err();
        let SweepError::Invalid(issues) = err else { panic!() };
        let lines: Vec<_> = issues.iter().map(|i| (i.line, i.key.as_str())).collect();
        assert_eq!(lines, vec![(1, "repeats"), (2, "mechanisms"), (3, "colour")]);
    }

    #[test]
    fn table3_grid_has_21_cells() {
        let spec = SweepSpec::parse("sizes = 32,64,128,256,512,768,1024\ntraffics = FTP\n").unwrap();
        let cells = spec.cells();
        assert_eq!(cells.len(), 21);
        assert!(cells.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(cells[0].mechanism, GatewayKind::Dwc);
        assert_eq!(cells[0].packet_size, 32);
        assert_eq!(cells[20].mechanism, GatewayKind::Dstm);
    }

    #[test]
    fn default_grid_is_the_union_of_sizes() {
        let spec = SweepSpec::default();
        assert_eq!(spec.sizes(), vec![32, 64, 128, 256, 512, 768, 1000, 1024, 1256]);
        assert_eq!(spec.cells().len(), 9 * 3 * 2);
    }

    #[test]
    fn first_repeat_keeps_the_base_seed() {
        assert_eq!(derive_seed(42, 0), 42);
        assert_eq!(derive_seed(42, 3), 45);
        assert_eq!(derive_seed(u64::MAX, 1), 0);
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use transim6_core::expect::Expectations;
use transim6_core::metrics::{read_report_csv, REPORT_HEADER};
use transim6_core::run::{run_to_dir, Outputs, EFFECTIVE_FILE, JITTER_FILE, REPORT_FILE, TRACE_FILE};
use transim6_core::scenario::{ScenarioConfig, Traffic};
use transim6_core::sweep::{plot_tables, run_sweep, SweepSpec, FAILURES_FILE, SPEC_FILE};
use transim6_core::GatewayKind;

fn scenarios_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn read_rows(p: &Path) -> Vec<transim6_core::metrics::MetricsReport> {
    read_report_csv(fs::read(p).unwrap().as_slice()).unwrap()
}

fn write_base(dir: &Path, extra: &str) -> PathBuf {
    let p = dir.join("base.scenario");
    fs::write(&p, format!("sim_time_s = 10\ntopology.ftp_flows = 2\ntopology.cbr_flows = 2\n{extra}")).unwrap();
    p
}

#[test]
fn shipped_files_parse() {
    let cfg = ScenarioConfig::load(&scenarios_dir().join("paper-default.scenario").canonicalize().unwrap()).unwrap();
    assert_eq!(cfg.queue_capacity, 50);
    assert_eq!(cfg.sim_time.as_secs_f64(), 200.0);
    assert_eq!(cfg.mapping_entries().unwrap().len(), 4 + 2 * 12);
    let spec = SweepSpec::load(&scenarios_dir().join("paper-default.sweep")).unwrap();
    assert_eq!(spec.throughput_sizes, vec![32, 64, 128, 256, 512, 768, 1024]);
    assert_eq!(spec.eed_sizes, vec![256, 512, 1000, 1256]);
    assert_eq!(spec.base_config().unwrap(), cfg);
    let e = Expectations::load(&scenarios_dir().join("paper-trends.expect")).unwrap();
    assert!(e.assertions.len() >= 30);
}

#[test]
fn effective_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::load(&write_base(dir.path(), "mechanism = DSTM\nseed = 9\n")).unwrap();
    let out = dir.path().join("a");
    let first = run_to_dir(&cfg, &out, Outputs::ALL).unwrap();
    for f in [EFFECTIVE_FILE, REPORT_FILE, JITTER_FILE, TRACE_FILE] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let echoed = ScenarioConfig::load(&out.join(EFFECTIVE_FILE)).unwrap();
    assert_eq!(echoed, cfg);
    let again = run_to_dir(&echoed, &dir.path().join("b"), Outputs::ALL).unwrap();
    assert_eq!(again.report, first.report);
    assert_eq!(
        fs::read(out.join(TRACE_FILE)).unwrap(),
        fs::read(dir.path().join("b").join(TRACE_FILE)).unwrap()
    );
    let text = fs::read_to_string(out.join(REPORT_FILE)).unwrap();
    assert_eq!(text.lines().next(), Some(REPORT_HEADER));
    assert!(!out.read_dir().unwrap().any(|e| e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
}

#[test]
fn report_only_outputs_skip_trace_and_jitter() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::load(&write_base(dir.path(), "")).unwrap();
    run_to_dir(&cfg, dir.path(), Outputs::REPORT_ONLY).unwrap();
    assert!(!dir.path().join(TRACE_FILE).exists());
    assert!(!dir.path().join(JITTER_FILE).exists());
    assert!(dir.path().join(REPORT_FILE).exists());
}

#[test]
fn one_cell_sweep_equals_a_run() {
    let dir = tempfile::tempdir().unwrap();
    write_base(dir.path(), "seed = 5\n");
    let spec_path = dir.path().join("one.sweep");
    fs::write(&spec_path, "scenario = base.scenario\nsizes = 512\nmechanisms = BDSIIT\ntraffics = CBR\n").unwrap();
    let spec = SweepSpec::load(&spec_path).unwrap();
    let out = dir.path().join("sweep");
    let outcome = run_sweep(&spec, &out).unwrap();
    assert!(outcome.failures.is_empty());

    let mut cfg = spec.base_config().unwrap();
    cfg.mechanism = GatewayKind::BdSiit;
    cfg.traffic = Traffic::Cbr;
    cfg.packet_size = 512;
    let single = run_to_dir(&cfg, &dir.path().join("run"), Outputs::ALL).unwrap();
    assert_eq!(outcome.rows, vec![single.report.clone()]);
    assert_eq!(
        fs::read(out.join(REPORT_FILE)).unwrap(),
        fs::read(dir.path().join("run").join(REPORT_FILE)).unwrap()
    );
}

#[test]
fn sweep_writes_sorted_rows_tables_and_survives_failures() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("base.scenario"), "sim_time_s = 2\ntopology.ftp_flows = 2\n").unwrap();
    let spec_path = dir.path().join("grid.sweep");
    fs::write(
        &spec_path,
        "scenario = base.scenario\nsizes.throughput = 64,32\nsizes.eed = 256\ntraffics = FTP,CBR\nrepeats = 2\n",
    )
    .unwrap();
    let spec = SweepSpec::load(&spec_path).unwrap();
    let out = dir.path().join("out");
    let outcome = run_sweep(&spec, &out).unwrap();
    assert_eq!(outcome.rows.len(), 3 * 3 * 2);
    let keys: Vec<_> = outcome.rows.iter().map(|r| r.key()).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert!(!out.join(FAILURES_FILE).exists());
    assert_eq!(read_rows(&out.join(REPORT_FILE)).len(), outcome.rows.len());
    assert!(out.join(SPEC_FILE).is_file());
    for t in plot_tables(&outcome.rows, &spec) {
        let text = fs::read_to_string(out.join(format!("{}.csv", t.name))).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("packet_size_bytes,"));
        assert_eq!(lines.len(), 1 + t.rows.len(), "{}", t.name);
        for line in &lines[1..] {
            assert_eq!(line.split(',').count(), 1 + t.columns.len());
            assert!(line.split(',').skip(1).all(|v| v == "NA" || v == "inf" || v.parse::<f64>().is_ok()));
        }
    }
    let t3 = plot_tables(&outcome.rows, &spec).into_iter().find(|t| t.name == "table3").unwrap();
    assert_eq!(t3.columns, vec!["DWC", "BDSIIT", "DSTM"]);
    assert_eq!(t3.rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![64, 32]);

    // A missing mapping table fails every cell, and the sweep still finishes.
    fs::write(dir.path().join("base.scenario"), "sim_time_s = 2\nmapping_table = missing.map\n").unwrap();
    let out2 = dir.path().join("out2");
    let outcome = run_sweep(&spec, &out2);
    // The base scenario itself loads; failures surface per cell.
    let outcome = outcome.unwrap();
    assert_eq!(outcome.rows.len(), 0);
    assert_eq!(outcome.failures.len(), 18);
    let failures = fs::read_to_string(out2.join(FAILURES_FILE)).unwrap();
    assert_eq!(failures.lines().count(), 19);
}

#[test]
fn spec_examples_for_report_check() {
    let rows = vec![
        row(GatewayKind::Dwc, 32, 99.0, 0.1),
        row(GatewayKind::Dwc, 1024, 80.0, 4.0),
        row(GatewayKind::BdSiit, 32, 98.0, 0.2),
        row(GatewayKind::BdSiit, 1024, 79.0, 4.5),
    ];
    let e = Expectations::parse(
        "throughput(DWC,32) >= throughput(DWC,1024)\n\
         forall s: plr(DWC,s) <= plr(BDSIIT,s)\n\
         plr(DWC,32) > plr(BDSIIT,32)\n",
    )
    .unwrap();
    let r = e.check(&rows);
    assert!(r[0].passed() && r[1].passed());
    assert!(!r[2].passed());
    assert_eq!(r[2].line, 3);
}

fn row(m: GatewayKind, size: u32, tp: f64, plr: f64) -> transim6_core::metrics::MetricsReport {
    transim6_core::metrics::MetricsReport {
        mechanism: m,
        traffic: Traffic::Ftp,
        packet_size: size,
        throughput_pct: Some(tp),
        throughput_bps: Some(1.0),
        mean_eed_ms: Some(1.0),
        plr_pct: Some(plr),
        jitter_ms: Default::default(),
    }
}

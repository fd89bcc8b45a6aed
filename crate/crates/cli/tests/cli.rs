use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn transim6(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transim6"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SHORT: &str = "sim_time_s = 3\ntopology.ftp_flows = 2\ntopology.cbr_flows = 1\n";

#[test]
fn run_writes_outputs_and_prints_the_row() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.scenario"), SHORT).unwrap();
    let o = transim6(
        &["run", "--scenario", "s.scenario", "--mechanism", "DSTM", "--traffic", "CBR", "--packet-size", "128", "--out", "r"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "mechanism,traffic,packet_size_bytes,throughput_pct,throughput_bps,mean_eed_ms,plr_pct");
    assert!(lines[1].starts_with("DSTM,CBR,128,"), "{}", lines[1]);
    for f in ["trace.tr", "report.csv", "effective.scenario", "jitter.csv"] {
        assert!(dir.path().join("r").join(f).is_file(), "{f}");
    }
    let report = fs::read_to_string(dir.path().join("r/report.csv")).unwrap();
    assert_eq!(report, text);

    let o = transim6(&["run", "--scenario", "s.scenario", "--no-trace", "--out", "n"], dir.path());
    assert!(o.status.success());
    assert!(!dir.path().join("n/trace.tr").exists());
}

#[test]
fn bad_scenario_exits_2_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.scenario"), "sim_time_s = 3\nqueue_capacity = lots\n").unwrap();
    let o = transim6(&["run", "--scenario", "bad.scenario", "--out", "r"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 2") && err.contains("queue_capacity"), "{err}");
    assert!(!dir.path().join("r/report.csv").exists());
}

#[test]
fn sweep_report_and_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("s.scenario"), SHORT).unwrap();
    fs::write(
        dir.path().join("g.sweep"),
        "scenario = s.scenario\nsizes.throughput = 32,1024\nsizes.eed = 256\ntraffics = FTP\n",
    )
    .unwrap();
    let o = transim6(&["sweep", "--spec", "g.sweep", "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("9 of 9 cells"));
    let csv = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);

    fs::write(dir.path().join("ok.expect"), "throughput(DWC,32) >= 0\nforall s: plr(DWC,s) >= 0\n").unwrap();
    let o = transim6(&["report", "--check", "ok.expect", "--in", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("2 passed, 0 failed"));

    // Contradictory pair: at most one can hold.
    fs::write(
        dir.path().join("no.expect"),
        "throughput(DWC,32) > throughput(DSTM,32)\nthroughput(DSTM,32) >= throughput(DWC,32)\n",
    )
    .unwrap();
    let o = transim6(&["report", "--check", "no.expect", "--in", "out/report.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL line"), "{}", stdout(&o));

    fs::write(dir.path().join("bad.expect"), "throughput(DWC,32) >= 0\nthroughput(XYZ,32) >= 0\n").unwrap();
    let o = transim6(&["report", "--check", "bad.expect", "--in", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    let o = transim6(&["plotdata", "--in", "out", "--out", "plots"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let t3 = fs::read_to_string(dir.path().join("plots/table3.csv")).unwrap();
    let lines: Vec<&str> = t3.lines().collect();
    assert_eq!(lines[0], "packet_size_bytes,DWC,BDSIIT,DSTM");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("32,"));
}

#[test]
fn missing_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = transim6(&["sweep", "--spec", "nope.sweep", "--out", "x"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.sweep"));
}

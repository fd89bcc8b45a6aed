//! Throughput, end-to-end delay, packet loss rate and jitter.
//!
//! * Throughput is reported two ways: raw received bits per second of
//!   simulated time, and received bytes as a percentage of sent bytes.
//! * Mean end-to-end delay is the average of receive time minus send time.
//! * Packet loss rate is `(K_s - K_r) / K_r` by default, with the
//!   conventional `/ K_s` form available through [`PlrDenominator::Sent`].
//! * Jitter is the first difference of consecutive per-packet delays within
//!   one flow, in receive order.
//!
//! A packet still in flight when the run ends has neither arrived nor been
//! lost, so it is left out of `K_s` and of the sent bytes.
//!
//! Byte counts are application payload bytes. Trace `s` records carry plain
//! IPv6 datagrams, so the payload of a transmission is its `s` wire size
//! minus the 40-byte IPv6 header.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::gateway::{GatewayKind, IPV6_HEADER_LEN};
use crate::scenario::Traffic;
use crate::time::SimTime;
use crate::trace::{TraceEvent, TraceRecord, TraceSink};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("simulation time must be positive")]
    NonPositiveSimTime,
    #[error("no bytes were sent")]
    NothingSent,
    #[error("no packets were received")]
    NothingReceived,
    #[error("total loss: packets were sent but none received")]
    TotalLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlrDenominator {
    /// `(K_s - K_r) / K_r`
    #[default]
    Received,
    /// `(K_s - K_r) / K_s`
    Sent,
}

impl FromStr for PlrDenominator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "received" | "kr" => Ok(PlrDenominator::Received),
            "sent" | "ks" => Ok(PlrDenominator::Sent),
            other => Err(format!("unknown PLR denominator `{other}` (expected received or sent)")),
        }
    }
}

impl fmt::Display for PlrDenominator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlrDenominator::Received => "received",
            PlrDenominator::Sent => "sent",
        })
    }
}

/// Counters and the delay series of one flow, or of several pooled flows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowStats {
    pub sent_count: u64,
    pub received_count: u64,
    pub sent_bytes: u64,
    pub received_bytes: u64,
    /// Per-packet delay in seconds, in receive order.
    pub delays: Vec<f64>,
    /// Trace sequence number of each entry in `delays`.
    pub received_seqs: Vec<u64>,
    pub sim_time: f64,
    /// Sends with no receive or drop by the end; not part of `sent_*`.
    pub in_flight: u64,
}

impl FlowStats {
    /// Pools counters and concatenates delay series in iteration order.
    pub fn pooled<'a>(flows: impl IntoIterator<Item = &'a FlowStats>, sim_time: f64) -> FlowStats {
        let mut out = FlowStats {
            sim_time,
            ..FlowStats::default()
        };
        for f in flows {
            out.sent_count += f.sent_count;
            out.received_count += f.received_count;
            out.sent_bytes += f.sent_bytes;
            out.received_bytes += f.received_bytes;
            out.in_flight += f.in_flight;
            out.delays.extend_from_slice(&f.delays);
            out.received_seqs.extend_from_slice(&f.received_seqs);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    pub bps: f64,
    pub pct: f64,
}

pub fn throughput(stats: &FlowStats) -> Result<Throughput, MetricError> {
    if stats.sim_time <= 0.0 || stats.sim_time.is_nan() {
        return Err(MetricError::NonPositiveSimTime);
    }
    if stats.sent_bytes == 0 {
        return Err(MetricError::NothingSent);
    }
    Ok(Throughput {
        bps: stats.received_bytes as f64 * 8.0 / stats.sim_time,
        pct: 100.0 * stats.received_bytes as f64 / stats.sent_bytes as f64,
    })
}

/// Mean end-to-end delay in milliseconds.
pub fn mean_eed(stats: &FlowStats) -> Result<f64, MetricError> {
    if stats.delays.is_empty() {
        return Err(MetricError::NothingReceived);
    }
    let sum: f64 = stats.delays.iter().sum();
    Ok(sum / stats.delays.len() as f64 * 1000.0)
}

/// Packet loss rate in percent.
pub fn plr(stats: &FlowStats, denominator: PlrDenominator) -> Result<f64, MetricError> {
    let (ks, kr) = (stats.sent_count as f64, stats.received_count as f64);
    match denominator {
        PlrDenominator::Received => {
            if stats.received_count == 0 {
                return Err(if stats.sent_count == 0 {
                    MetricError::NothingReceived
                } else {
                    MetricError::TotalLoss
                });
            }
            Ok(100.0 * (ks - kr) / kr)
        }
        PlrDenominator::Sent => {
            if stats.sent_count == 0 {
                return Err(MetricError::NothingSent);
            }
            Ok(100.0 * (ks - kr) / ks)
        }
    }
}

/// Consecutive delay differences in milliseconds; empty below two packets.
pub fn jitter_series(stats: &FlowStats) -> Vec<f64> {
    stats
        .delays
        .windows(2)
        .map(|w| (w[1] - w[0]) * 1000.0)
        .collect()
}

/// Builds per-flow [`FlowStats`] from a stream of trace records.
#[derive(Debug, Default)]
pub struct FlowStatsCollector {
    flows: BTreeMap<u32, FlowStats>,
    pending: HashMap<(u32, u64), (SimTime, u32)>,
    orphans: u64,
}

impl FlowStatsCollector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Receives without a matching send; always zero for simulator output.
    pub fn orphans(&self) -> u64 {
        self.orphans
    }

    pub fn finish(mut self, sim_time: SimTime) -> BTreeMap<u32, FlowStats> {
        let secs = sim_time.as_secs_f64();
        for ((flow, _), (_, payload)) in self.pending.drain() {
            let f = self.flows.get_mut(&flow).expect("pending send has a flow");
            f.sent_count -= 1;
            f.sent_bytes -= u64::from(payload);
            f.in_flight += 1;
        }
        for f in self.flows.values_mut() {
            f.sim_time = secs;
        }
        self.flows
    }
}

impl TraceSink for FlowStatsCollector {
    fn record(&mut self, r: &TraceRecord) {
        match r.event {
            TraceEvent::Send => {
                let payload = r.wire_bytes.saturating_sub(IPV6_HEADER_LEN);
                let f = self.flows.entry(r.flow).or_default();
                f.sent_count += 1;
                f.sent_bytes += u64::from(payload);
                self.pending.insert((r.flow, r.seq), (r.time, payload));
            }
            TraceEvent::Receive => match self.pending.remove(&(r.flow, r.seq)) {
                Some((sent_at, payload)) => {
                    let f = self.flows.entry(r.flow).or_default();
                    f.received_count += 1;
                    f.received_bytes += u64::from(payload);
                    f.delays.push(r.time.saturating_sub(sent_at).as_secs_f64());
                    f.received_seqs.push(r.seq);
                }
                None => self.orphans += 1,
            },
            TraceEvent::Drop => {
                self.pending.remove(&(r.flow, r.seq));
            }
            TraceEvent::Enqueue | TraceEvent::Dequeue => {}
        }
    }
}

/// One row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mechanism: GatewayKind,
    pub traffic: Traffic,
    pub packet_size: u32,
    pub throughput_pct: Option<f64>,
    pub throughput_bps: Option<f64>,
    pub mean_eed_ms: Option<f64>,
    /// `inf` when packets were sent and none arrived.
    pub plr_pct: Option<f64>,
    /// Per-flow jitter series, keyed by flow id, with the receiving `seq`.
    pub jitter_ms: BTreeMap<u32, Vec<(u64, f64)>>,
}

impl MetricsReport {
    pub fn from_flows(
        mechanism: GatewayKind,
        traffic: Traffic,
        packet_size: u32,
        flows: &BTreeMap<u32, FlowStats>,
        sim_time: f64,
        denominator: PlrDenominator,
    ) -> Self {
        let pooled = FlowStats::pooled(flows.values(), sim_time);
        let tp = throughput(&pooled).ok();
        let plr_pct = match plr(&pooled, denominator) {
            Ok(v) => Some(v),
            Err(MetricError::TotalLoss) => Some(f64::INFINITY),
            Err(_) => None,
        };
        let jitter_ms = flows
            .iter()
            .map(|(&id, f)| {
                let series = jitter_series(f)
                    .into_iter()
                    .zip(f.received_seqs.iter().skip(1).copied())
                    .map(|(j, seq)| (seq, j))
                    .collect();
                (id, series)
            })
            .collect();
        Self {
            mechanism,
            traffic,
            packet_size,
            throughput_pct: tp.map(|t| t.pct),
            throughput_bps: tp.map(|t| t.bps),
            mean_eed_ms: mean_eed(&pooled).ok(),
            plr_pct,
            jitter_ms,
        }
    }

    pub fn key(&self) -> (GatewayKind, u32, Traffic) {
        (self.mechanism, self.packet_size, self.traffic)
    }
}

pub const REPORT_HEADER: &str =
    "mechanism,traffic,packet_size_bytes,throughput_pct,throughput_bps,mean_eed_ms,plr_pct";
pub const JITTER_HEADER: &str = "flow,seq,jitter_ms";

pub fn format_metric(v: Option<f64>) -> String {
    match v {
        None => "NA".to_string(),
        Some(x) if x.is_infinite() => if x > 0.0 { "inf" } else { "-inf" }.to_string(),
        Some(x) => format!("{x:.6}"),
    }
}

fn parse_metric(s: &str) -> Result<Option<f64>, String> {
    match s {
        "NA" => Ok(None),
        "inf" => Ok(Some(f64::INFINITY)),
        _ => s.parse::<f64>().map(Some).map_err(|_| format!("bad number `{s}`")),
    }
}

pub fn format_report_row(r: &MetricsReport) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        r.mechanism,
        r.traffic,
        r.packet_size,
        format_metric(r.throughput_pct),
        format_metric(r.throughput_bps),
        format_metric(r.mean_eed_ms),
        format_metric(r.plr_pct)
    )
}

pub fn write_report_csv<W: Write>(mut out: W, rows: &[MetricsReport]) -> io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", format_report_row(r))?;
    }
    out.flush()
}

#[derive(Debug, Error)]
pub enum ReportParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reads a report CSV back. Jitter series are not part of the CSV.
pub fn read_report_csv<R: BufRead>(reader: R) -> Result<Vec<MetricsReport>, ReportParseError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let err = |message: String| ReportParseError::Syntax {
            line: line_no,
            message,
        };
        if i == 0 {
            if line.trim_end() != REPORT_HEADER {
                return Err(err(format!("unexpected header `{line}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 7 {
            return Err(err(format!("expected 7 columns, found {}", f.len())));
        }
        rows.push(MetricsReport {
            mechanism: f[0].parse().map_err(|e| err(format!("{e}")))?,
            traffic: f[1].parse().map_err(err)?,
            packet_size: f[2].parse().map_err(|_| err(format!("bad packet size `{}`", f[2])))?,
            throughput_pct: parse_metric(f[3]).map_err(err)?,
            throughput_bps: parse_metric(f[4]).map_err(err)?,
            mean_eed_ms: parse_metric(f[5]).map_err(err)?,
            plr_pct: parse_metric(f[6]).map_err(err)?,
            jitter_ms: BTreeMap::new(),
        });
    }
    Ok(rows)
}

pub fn write_jitter_csv<W: Write>(mut out: W, report: &MetricsReport) -> io::Result<()> {
    writeln!(out, "{JITTER_HEADER}")?;
    for (flow, series) in &report.jitter_ms {
        for (seq, j) in series {
            writeln!(out, "{flow},{seq},{j:.6}")?;
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(ks: u64, kr: u64, size: u64, delays_ms: &[f64], sim_time: f64) -> FlowStats {
        FlowStats {
            sent_count: ks,
            received_count: kr,
            sent_bytes: ks * size,
            received_bytes: kr * size,
            delays: delays_ms.iter().map(|d| d / 1000.0).collect(),
            received_seqs: (0..delays_ms.len() as u64).collect(),
            sim_time,
            in_flight: 0,
        }
    }

    #[test]
    fn full_delivery_is_100_percent() {
        let t = throughput(&stats(10, 10, 100, &[1.0; 10], 1.0)).unwrap();
        assert_eq!(t.pct, 100.0);
    }

    #[test]
    fn eight_of_ten() {
        let t = throughput(&stats(10, 8, 100, &[1.0; 8], 1.0)).unwrap();
        assert_eq!(t.bps, 6400.0);
        assert_eq!(t.pct, 80.0);
    }

    #[test]
    fn throughput_errors() {
        assert_eq!(throughput(&stats(1, 1, 1, &[1.0], 0.0)), Err(MetricError::NonPositiveSimTime));
        assert_eq!(throughput(&stats(0, 0, 1, &[], 1.0)), Err(MetricError::NothingSent));
    }

    #[test]
    fn mean_delay() {
        let s = FlowStats {
            delays: vec![0.050],
            received_count: 1,
            sent_count: 1,
            ..Default::default()
        };
        assert!((mean_eed(&s).unwrap() - 50.0).abs() < 1e-9);
        assert!((mean_eed(&stats(2, 2, 1, &[40.0, 60.0], 1.0)).unwrap() - 50.0).abs() < 1e-9);
        assert_eq!(mean_eed(&FlowStats::default()), Err(MetricError::NothingReceived));
    }

    #[test]
    fn loss_rate_uses_received_denominator() {
        assert_eq!(plr(&stats(5, 5, 1, &[], 1.0), PlrDenominator::Received).unwrap(), 0.0);
        let s = stats(103, 100, 1, &[], 1.0);
        assert!((plr(&s, PlrDenominator::Received).unwrap() - 3.0).abs() < 1e-12);
        assert!((plr(&s, PlrDenominator::Sent).unwrap() - 300.0 / 103.0).abs() < 1e-12);
        assert_eq!(plr(&stats(5, 0, 1, &[], 1.0), PlrDenominator::Received), Err(MetricError::TotalLoss));
    }

    #[test]
    fn jitter_examples() {
        assert_eq!(jitter_series(&stats(3, 3, 1, &[7.0, 7.0, 7.0], 1.0)), vec![0.0, 0.0]);
        let j = jitter_series(&stats(3, 3, 1, &[10.0, 14.0, 13.0], 1.0));
        assert!((j[0] - 4.0).abs() < 1e-9 && (j[1] + 1.0).abs() < 1e-9, "{j:?}");
        assert!(jitter_series(&stats(1, 1, 1, &[5.0], 1.0)).is_empty());
    }

    #[test]
    fn total_loss_reported_as_inf() {
        let mut flows = BTreeMap::new();
        flows.insert(0, stats(10, 0, 100, &[], 1.0));
        let r = MetricsReport::from_flows(GatewayKind::Dstm, Traffic::Cbr, 100, &flows, 1.0, PlrDenominator::Received);
        assert_eq!(r.plr_pct, Some(f64::INFINITY));
        assert_eq!(r.mean_eed_ms, None);
        assert_eq!(r.throughput_pct, Some(0.0));
        let line = format_report_row(&r);
        assert_eq!(line, "DSTM,CBR,100,0.000000,0.000000,NA,inf");
    }

    #[test]
    fn report_csv_round_trip() {
        let mut flows = BTreeMap::new();
        flows.insert(0, stats(103, 100, 256, &[12.5; 100], 200.0));
        let r = MetricsReport::from_flows(GatewayKind::Dwc, Traffic::Ftp, 256, &flows, 200.0, PlrDenominator::Received);
        let mut buf = Vec::new();
        write_report_csv(&mut buf, std::slice::from_ref(&r)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(REPORT_HEADER));
        let back = read_report_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].key(), r.key());
        assert!((back[0].plr_pct.unwrap() - 3.0).abs() < 1e-6);
        assert!(read_report_csv("bogus\n".as_bytes()).is_err());
    }
}

//! Scenario files.
//!
//! A scenario is a list of `key = value` lines. `#` starts a comment, blank
//! lines are ignored, and every key is optional. Dotted prefixes group
//! related settings:
//!
//! ```text
//! mechanism   = DWC          # DWC | BDSIIT | DSTM
//! traffic     = MIXED        # FTP | CBR | MIXED
//! packet_size = 256          # application payload bytes
//! topology.bottleneck_bw_mbps = 2
//! dstm.pool   = 192.0.2.0/28
//! ```
//!
//! Unknown keys, values of the wrong type and values out of range are all
//! reported together, each with its key and line number.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::addr::{Ipv4Address, Ipv6Address, Ipv6Prefix};
use crate::gateway::{GatewayKind, GatewayParams};
use crate::lpm::{load_mapping_table, EntryId, MappingEntry, TableError};
use crate::metrics::PlrDenominator;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Traffic {
    Ftp,
    Cbr,
    Mixed,
}

impl Traffic {
    pub const ALL: [Traffic; 3] = [Traffic::Ftp, Traffic::Cbr, Traffic::Mixed];

    pub fn as_str(self) -> &'static str {
        match self {
            Traffic::Ftp => "FTP",
            Traffic::Cbr => "CBR",
            Traffic::Mixed => "MIXED",
        }
    }
}

impl fmt::Display for Traffic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Traffic {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "FTP" | "TCP" => Ok(Traffic::Ftp),
            "CBR" | "UDP" => Ok(Traffic::Cbr),
            "MIXED" => Ok(Traffic::Mixed),
            _ => Err(format!("unknown traffic `{s}` (expected FTP, CBR or MIXED)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub access_bw_bps: u64,
    pub access_delay: SimTime,
    pub bottleneck_bw_bps: u64,
    pub bottleneck_delay: SimTime,
    pub ftp_flows: u32,
    pub cbr_flows: u32,
    /// Each flow starts at a uniform offset in `[0, start_jitter)`.
    pub start_jitter: SimTime,
}

impl Default for Topology {
    fn default() -> Self {
        Self {
            access_bw_bps: 10_000_000,
            access_delay: SimTime::from_millis(1),
            bottleneck_bw_bps: 2_000_000,
            bottleneck_delay: SimTime::from_millis(10),
            ftp_flows: 4,
            cbr_flows: 4,
            start_jitter: SimTime::from_millis(500),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcpParams {
    /// Receiver window in segments; `None` is unlimited.
    pub max_window: Option<u32>,
    pub initial_ssthresh: f64,
    pub min_rto: SimTime,
}

impl Default for TcpParams {
    fn default() -> Self {
        Self {
            max_window: Some(20),
            initial_ssthresh: 64.0,
            min_rto: SimTime::from_millis(200),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub mechanism: GatewayKind,
    pub traffic: Traffic,
    /// Application payload bytes per packet.
    pub packet_size: u32,
    pub sim_time: SimTime,
    pub seed: u64,
    pub queue_capacity: usize,
    pub topology: Topology,
    /// Combined CBR offered load as a fraction of bottleneck bandwidth,
    /// counting payload plus a 20-byte IPv4 header.
    pub cbr_load: f64,
    /// Per-flow CBR rate; overrides `cbr_load` when set.
    pub cbr_rate_pps: Option<f64>,
    pub tcp: TcpParams,
    pub gateway: GatewayParams,
    /// Relative paths are resolved against the scenario file's directory.
    pub mapping_table: Option<PathBuf>,
    pub plr_denominator: PlrDenominator,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mechanism: GatewayKind::Dwc,
            traffic: Traffic::Mixed,
            packet_size: 256,
            sim_time: SimTime::from_secs(200),
            seed: 42,
            queue_capacity: 50,
            topology: Topology::default(),
            cbr_load: 0.5,
            cbr_rate_pps: None,
            tcp: TcpParams::default(),
            gateway: GatewayParams::default(),
            mapping_table: None,
            plr_denominator: PlrDenominator::Received,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyIssue {
    pub line: usize,
    pub key: String,
    pub message: String,
}

impl fmt::Display for KeyIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "line {}: {}", self.line, self.message)
        } else {
            write!(f, "line {}: `{}`: {}", self.line, self.key, self.message)
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario:\n{}", format_issues(.0))]
    Invalid(Vec<KeyIssue>),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("mapping table {path}: {source}")]
    MappingTable {
        path: PathBuf,
        #[source]
        source: TableError,
    },
}

pub(crate) fn format_issues(issues: &[KeyIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ScenarioError {
    pub fn issues(&self) -> &[KeyIssue] {
        match self {
            ScenarioError::Invalid(v) => v,
            _ => &[],
        }
    }
}

pub const KEYS: &[&str] = &[
    "mechanism",
    "traffic",
    "packet_size",
    "sim_time_s",
    "seed",
    "queue.capacity",
    "topology.access_bw_mbps",
    "topology.access_delay_ms",
    "topology.bottleneck_bw_mbps",
    "topology.bottleneck_delay_ms",
    "topology.ftp_flows",
    "topology.cbr_flows",
    "topology.start_jitter_ms",
    "traffic.cbr_load",
    "traffic.cbr_rate_pps",
    "tcp.max_window",
    "tcp.initial_ssthresh",
    "tcp.min_rto_ms",
    "latency.dwc_ms",
    "latency.bdsiit_ms",
    "latency.dstm_alloc_ms",
    "latency.dstm_encap_ms",
    "dstm.pool",
    "dstm.lease_s",
    "mapping_table",
    "metrics.plr_denominator",
];

fn num<T: FromStr>(v: &str, what: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("expected {what}, found `{v}`"))
}

fn ranged(v: &str, lo: f64, hi: f64) -> Result<f64, String> {
    let x: f64 = num(v, "a number")?;
    if !x.is_finite() || x < lo || x > hi {
        return Err(format!("{x} is outside [{lo}, {hi}]"));
    }
    Ok(x)
}

fn ranged_int(v: &str, lo: u64, hi: u64) -> Result<u64, String> {
    let x: u64 = num(v, "a non-negative integer")?;
    if x < lo || x > hi {
        return Err(format!("{x} is outside [{lo}, {hi}]"));
    }
    Ok(x)
}

fn mbps(v: &str) -> Result<u64, String> {
    let x = ranged(v, 1e-3, 1e5)?;
    Ok((x * 1e6).round() as u64)
}

/// `a.b.c.d/len` (usable hosts), or a comma-separated list; empty is no pool.
pub fn parse_pool(v: &str) -> Result<Vec<Ipv4Address>, String> {
    let v = v.trim();
    if v.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((a, l)) = v.split_once('/') {
        let base: Ipv4Address = a.trim().parse().map_err(|e| format!("bad pool address: {e}"))?;
        let len: u32 = num(l.trim(), "a prefix length")?;
        if !(16..=32).contains(&len) {
            return Err(format!("pool prefix length {len} is outside [16, 32]"));
        }
        let size = 1u32 << (32 - len);
        let net = base.0 & !(size - 1);
        if net != base.0 {
            return Err(format!("pool {v} has host bits set"));
        }
        let addrs: Vec<Ipv4Address> = if len >= 31 {
            (0..size).map(|i| Ipv4Address(net + i)).collect()
        } else {
            (1..size - 1).map(|i| Ipv4Address(net + i)).collect()
        };
        return Ok(addrs);
    }
    let mut out = Vec::new();
    for part in v.split(',') {
        let a: Ipv4Address = part.trim().parse().map_err(|e| format!("bad pool address `{}`: {e}", part.trim()))?;
        if out.contains(&a) {
            return Err(format!("pool lists {a} twice"));
        }
        out.push(a);
    }
    Ok(out)
}

impl ScenarioConfig {
    fn apply(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "mechanism" => self.mechanism = v.parse().map_err(|e| format!("{e}"))?,
            "traffic" => self.traffic = v.parse()?,
            "packet_size" => self.packet_size = ranged_int(v, 1, 65_000)? as u32,
            "sim_time_s" => self.sim_time = SimTime::from_secs_f64(ranged(v, 1e-3, 1e6)?),
            "seed" => self.seed = num(v, "an unsigned 64-bit integer")?,
            "queue.capacity" => self.queue_capacity = ranged_int(v, 1, 1_000_000)? as usize,
            "topology.access_bw_mbps" => self.topology.access_bw_bps = mbps(v)?,
            "topology.access_delay_ms" => self.topology.access_delay = SimTime::from_millis_f64(ranged(v, 0.0, 1e5)?),
            "topology.bottleneck_bw_mbps" => self.topology.bottleneck_bw_bps = mbps(v)?,
            "topology.bottleneck_delay_ms" => {
                self.topology.bottleneck_delay = SimTime::from_millis_f64(ranged(v, 0.0, 1e5)?)
            }
            "topology.ftp_flows" => self.topology.ftp_flows = ranged_int(v, 0, 200)? as u32,
            "topology.cbr_flows" => self.topology.cbr_flows = ranged_int(v, 0, 200)? as u32,
            "topology.start_jitter_ms" => self.topology.start_jitter = SimTime::from_millis_f64(ranged(v, 0.0, 1e6)?),
            "traffic.cbr_load" => self.cbr_load = ranged(v, 1e-6, 100.0)?,
            "traffic.cbr_rate_pps" => {
                self.cbr_rate_pps = if v.is_empty() { None } else { Some(ranged(v, 1e-3, 1e7)?) }
            }
            "tcp.max_window" => {
                let w = ranged_int(v, 0, 1_000_000)? as u32;
                self.tcp.max_window = if w == 0 { None } else { Some(w) };
            }
            "tcp.initial_ssthresh" => self.tcp.initial_ssthresh = ranged(v, 2.0, 1e6)?,
            "tcp.min_rto_ms" => self.tcp.min_rto = SimTime::from_millis_f64(ranged(v, 1.0, 60_000.0)?),
            "latency.dwc_ms" => self.gateway.dwc_latency = SimTime::from_millis_f64(ranged(v, 0.0, 1e4)?),
            "latency.bdsiit_ms" => self.gateway.bdsiit_latency = SimTime::from_millis_f64(ranged(v, 0.0, 1e4)?),
            "latency.dstm_alloc_ms" => self.gateway.dstm_alloc_latency = SimTime::from_millis_f64(ranged(v, 0.0, 1e4)?),
            "latency.dstm_encap_ms" => self.gateway.dstm_encap_latency = SimTime::from_millis_f64(ranged(v, 0.0, 1e4)?),
            "dstm.pool" => self.gateway.dstm_pool = parse_pool(v)?,
            "dstm.lease_s" => self.gateway.dstm_lease = SimTime::from_secs_f64(ranged(v, 1e-3, 1e7)?),
            "mapping_table" => self.mapping_table = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "metrics.plr_denominator" => self.plr_denominator = v.parse()?,
            _ => return Err("unknown key".to_string()),
        }
        Ok(())
    }

    /// Parses scenario text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut cfg = ScenarioConfig::default();
        let mut issues = Vec::new();
        let mut seen: Vec<(&str, usize)> = Vec::new();
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
            if let Some(&(_, first)) = seen.iter().find(|(s, _)| *s == k) {
                issues.push(KeyIssue {
                    line,
                    key: k.to_string(),
                    message: format!("already set on line {first}"),
                });
                continue;
            }
            seen.push((k, line));
            if let Err(message) = cfg.apply(k, v) {
                issues.push(KeyIssue {
                    line,
                    key: k.to_string(),
                    message,
                });
            }
        }
        if cfg.topology.ftp_flows + cfg.topology.cbr_flows == 0 {
            issues.push(KeyIssue {
                line: 0,
                key: "topology.ftp_flows".into(),
                message: "scenario has no flows".into(),
            });
        }
        if issues.is_empty() {
            Ok(cfg)
        } else {
            Err(ScenarioError::Invalid(issues))
        }
    }

    /// Loads a file and resolves a relative `mapping_table` against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        if let Some(t) = &cfg.mapping_table {
            if t.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.mapping_table = Some(dir.join(t));
                }
            }
        }
        Ok(cfg)
    }

    /// Flow counts after applying the traffic selector.
    pub fn active_flows(&self) -> (u32, u32) {
        match self.traffic {
            Traffic::Ftp => (self.topology.ftp_flows, 0),
            Traffic::Cbr => (0, self.topology.cbr_flows),
            Traffic::Mixed => (self.topology.ftp_flows, self.topology.cbr_flows),
        }
    }

    /// Per-flow CBR packet rate.
    pub fn cbr_rate(&self) -> f64 {
        if let Some(r) = self.cbr_rate_pps {
            return r;
        }
        let flows = self.active_flows().1.max(1) as f64;
        let bits = f64::from(self.packet_size + 20) * 8.0;
        self.cbr_load * self.topology.bottleneck_bw_bps as f64 / bits / flows
    }

    /// The mapping table in effect: the configured file, or one generated to
    /// cover the topology's hosts.
    pub fn mapping_entries(&self) -> Result<Vec<MappingEntry>, ScenarioError> {
        match &self.mapping_table {
            Some(path) => load_mapping_table(path).map_err(|source| ScenarioError::MappingTable {
                path: path.clone(),
                source,
            }),
            None => {
                let n = self.topology.ftp_flows + self.topology.cbr_flows;
                Ok(default_mapping(n))
            }
        }
    }

    /// Every key with its effective value, in a form [`ScenarioConfig::parse`]
    /// reads back to an equal config.
    pub fn to_scenario_text(&self) -> String {
        let ms = |t: SimTime| format!("{}", t.as_millis_f64());
        let mbps = |b: u64| format!("{}", b as f64 / 1e6);
        let pool = self
            .gateway
            .dstm_pool
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let lines = [
            ("mechanism", self.mechanism.to_string()),
            ("traffic", self.traffic.to_string()),
            ("packet_size", self.packet_size.to_string()),
            ("sim_time_s", format!("{}", self.sim_time.as_secs_f64())),
            ("seed", self.seed.to_string()),
            ("queue.capacity", self.queue_capacity.to_string()),
            ("topology.access_bw_mbps", mbps(self.topology.access_bw_bps)),
            ("topology.access_delay_ms", ms(self.topology.access_delay)),
            ("topology.bottleneck_bw_mbps", mbps(self.topology.bottleneck_bw_bps)),
            ("topology.bottleneck_delay_ms", ms(self.topology.bottleneck_delay)),
            ("topology.ftp_flows", self.topology.ftp_flows.to_string()),
            ("topology.cbr_flows", self.topology.cbr_flows.to_string()),
            ("topology.start_jitter_ms", ms(self.topology.start_jitter)),
            ("traffic.cbr_load", format!("{}", self.cbr_load)),
            (
                "traffic.cbr_rate_pps",
                self.cbr_rate_pps.map(|r| format!("{r}")).unwrap_or_default(),
            ),
            ("tcp.max_window", self.tcp.max_window.unwrap_or(0).to_string()),
            ("tcp.initial_ssthresh", format!("{}", self.tcp.initial_ssthresh)),
            ("tcp.min_rto_ms", ms(self.tcp.min_rto)),
            ("latency.dwc_ms", ms(self.gateway.dwc_latency)),
            ("latency.bdsiit_ms", ms(self.gateway.bdsiit_latency)),
            ("latency.dstm_alloc_ms", ms(self.gateway.dstm_alloc_latency)),
            ("latency.dstm_encap_ms", ms(self.gateway.dstm_encap_latency)),
            ("dstm.pool", pool),
            ("dstm.lease_s", format!("{}", self.gateway.dstm_lease.as_secs_f64())),
            (
                "mapping_table",
                self.mapping_table
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            ("metrics.plr_denominator", self.plr_denominator.to_string()),
        ];
        let mut s = String::new();
        for (k, v) in lines {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }
}

pub fn source_address(i: u32) -> Ipv6Address {
    Ipv6Address(0x2001_0db8_0001_0000_0000_0000_0000_0000 | u128::from(i + 1))
}

pub fn sink_prefix(i: u32) -> Ipv6Prefix {
    let addr = 0x2001_0db8_0100_0000_0000_0000_0000_0000u128 | (u128::from(i + 1) << 64);
    Ipv6Prefix::new(Ipv6Address(addr), 64).expect("canonical /64")
}

/// Address of the host inside a sink's /64.
pub fn sink_address(i: u32) -> Ipv6Address {
    Ipv6Address(sink_prefix(i).address().0 | 1)
}

/// Sources map /128 to 203.0.113.(i+1), sinks map /64 to 198.51.100.(i+1),
/// and a handful of covering and unrelated prefixes keep lookups honest.
pub fn default_mapping(hosts: u32) -> Vec<MappingEntry> {
    let mut out = Vec::new();
    let mut push = |prefix: Ipv6Prefix, target: Ipv4Address| {
        let id = EntryId(out.len() as u64);
        out.push(MappingEntry::new(prefix, target, id));
    };
    let background: [(&str, Ipv4Address); 4] = [
        ("2001:db8::/32", Ipv4Address::new(192, 0, 2, 254)),
        ("2001:db8:100::/40", Ipv4Address::new(198, 51, 100, 254)),
        ("2001:db8:1::/48", Ipv4Address::new(203, 0, 113, 254)),
        ("2001:db8:8000::/33", Ipv4Address::new(192, 0, 2, 253)),
    ];
    for (p, t) in background {
        push(p.parse().expect("static prefix"), t);
    }
    for i in 0..hosts {
        let host = (i % 250 + 1) as u8;
        push(
            Ipv6Prefix::new(source_address(i), 128).expect("host route"),
            Ipv4Address::new(203, 0, 113, host),
        );
        push(sink_prefix(i), Ipv4Address::new(198, 51, 100, host));
    }
    out
}

//! The three transition gateways.
//!
//! * DW&C resolves addresses through the dollop [`SuccessionTree`] and then
//!   applies stateless translation.
//! * BD-SIIT applies the same translation but resolves addresses through a
//!   flat table scanned longest prefix first.
//! * DSTM leases a temporary IPv4 address to the sending dual-stack host and
//!   carries the IPv4 datagram inside an IPv6 tunnel.
//!
//! Both translators use the same static mapping table: the forward direction
//! is a prefix match on IPv6 addresses, the reverse direction an exact map
//! from IPv4 targets back to IPv6 addresses. Processing cost is an explicit
//! latency per mechanism, charged by the caller as service time.

mod dstm;
mod header;
mod siit;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

pub use dstm::{
    dstm_decapsulate, dstm_encapsulate, Allocation, AddressPool, HostId, Lease, PoolError,
    TunnelError,
};
pub use header::{
    Datagram, IpHeader, Ipv4Header, Ipv6Header, IPV4_HEADER_LEN, IPV6_HEADER_LEN,
    PROTO_IPV4_IN_IPV6, PROTO_TCP, PROTO_UDP,
};
pub use siit::{siit_v4_to_v6, siit_v6_to_v4, TranslateError};

use crate::addr::{Ipv4Address, Ipv6Address};
use crate::lpm::{MappingEntry, SuccessionTree};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GatewayKind {
    Dwc,
    BdSiit,
    Dstm,
}

impl GatewayKind {
    pub const ALL: [GatewayKind; 3] = [GatewayKind::Dwc, GatewayKind::BdSiit, GatewayKind::Dstm];

    pub fn as_str(&self) -> &'static str {
        match self {
            GatewayKind::Dwc => "DWC",
            GatewayKind::BdSiit => "BDSIIT",
            GatewayKind::Dstm => "DSTM",
        }
    }
}

impl fmt::Display for GatewayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownMechanism(pub String);

impl fmt::Display for UnknownMechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown mechanism `{}` (expected DWC, BDSIIT or DSTM)", self.0)
    }
}

impl std::error::Error for UnknownMechanism {}

impl FromStr for GatewayKind {
    type Err = UnknownMechanism;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_uppercase())
            .collect();
        match norm.as_str() {
            "DWC" => Ok(GatewayKind::Dwc),
            "BDSIIT" => Ok(GatewayKind::BdSiit),
            "DSTM" => Ok(GatewayKind::Dstm),
            _ => Err(UnknownMechanism(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    MappingMiss,
    AllocationFailure,
    HopLimitExceeded,
    Malformed,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::MappingMiss => "mapping-miss",
            DropReason::AllocationFailure => "allocation-failure",
            DropReason::HopLimitExceeded => "hop-limit-exceeded",
            DropReason::Malformed => "malformed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Translated(Datagram),
    Encapsulated(Datagram),
    Dropped(DropReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Processed {
    pub verdict: Verdict,
    /// Processing time to charge before the packet can leave the gateway.
    pub latency: SimTime,
}

impl Processed {
    fn drop(reason: DropReason) -> Self {
        Self {
            verdict: Verdict::Dropped(reason),
            latency: SimTime::ZERO,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GatewayCounters {
    pub ingress: u64,
    pub translated: u64,
    pub encapsulated: u64,
    pub dropped: BTreeMap<DropReason, u64>,
}

impl GatewayCounters {
    pub fn dropped_total(&self) -> u64 {
        self.dropped.values().sum()
    }

    /// Every ingress packet is accounted for exactly once.
    pub fn is_balanced(&self) -> bool {
        self.ingress == self.translated + self.encapsulated + self.dropped_total()
    }

    fn record(&mut self, v: &Verdict) {
        self.ingress += 1;
        match v {
            Verdict::Translated(_) => self.translated += 1,
            Verdict::Encapsulated(_) => self.encapsulated += 1,
            Verdict::Dropped(r) => *self.dropped.entry(*r).or_default() += 1,
        }
    }
}

/// Flat prefix table scanned longest prefix first.
#[derive(Debug, Clone, Default)]
pub struct LinearTable {
    entries: Vec<MappingEntry>,
}

impl LinearTable {
    pub fn new(entries: &[MappingEntry]) -> Self {
        let mut entries = entries.to_vec();
        entries.sort_by(|a, b| {
            b.prefix
                .length()
                .cmp(&a.prefix.length())
                .then(a.prefix.cmp(&b.prefix))
        });
        entries.dedup_by(|b, a| a.prefix == b.prefix);
        Self { entries }
    }

    pub fn lookup(&self, addr: Ipv6Address) -> Option<&MappingEntry> {
        self.entries.iter().find(|e| e.prefix.contains(addr))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Exact IPv4 to IPv6 map for the return direction. When several prefixes
/// share a target, the longest one wins.
pub fn reverse_map(entries: &[MappingEntry]) -> HashMap<Ipv4Address, Ipv6Address> {
    let mut best: HashMap<Ipv4Address, (u8, Ipv6Address)> = HashMap::new();
    for e in entries {
        let cand = (e.prefix.length(), e.prefix.address());
        best.entry(e.target)
            .and_modify(|cur| {
                if cand.0 > cur.0 || (cand.0 == cur.0 && cand.1 < cur.1) {
                    *cur = cand;
                }
            })
            .or_insert(cand);
    }
    best.into_iter().map(|(k, (_, a))| (k, a)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayParams {
    pub dwc_latency: SimTime,
    pub bdsiit_latency: SimTime,
    pub dstm_alloc_latency: SimTime,
    pub dstm_encap_latency: SimTime,
    pub dstm_pool: Vec<Ipv4Address>,
    pub dstm_lease: SimTime,
    /// Local and remote tunnel endpoints.
    pub tunnel_src: Ipv6Address,
    pub tunnel_dst: Ipv6Address,
}

impl Default for GatewayParams {
    fn default() -> Self {
        Self {
            dwc_latency: SimTime::from_micros(50),
            bdsiit_latency: SimTime::from_micros(80),
            dstm_alloc_latency: SimTime::from_millis(2),
            dstm_encap_latency: SimTime::from_micros(100),
            dstm_pool: (1..=14).map(|i| Ipv4Address::new(192, 0, 2, i)).collect(),
            dstm_lease: SimTime::from_secs(3600),
            tunnel_src: Ipv6Address(0x2001_0db8_00ff_0000_0000_0000_0000_0001),
            tunnel_dst: Ipv6Address(0x2001_0db8_00ff_0000_0000_0000_0000_0002),
        }
    }
}

#[derive(Debug, Clone)]
enum Resolver {
    Tree(SuccessionTree),
    Linear(LinearTable),
}

impl Resolver {
    fn resolve(&self, addr: Ipv6Address) -> Option<Ipv4Address> {
        match self {
            Resolver::Tree(t) => t.lookup(addr).map(|r| r.entry.target),
            Resolver::Linear(t) => t.lookup(addr).map(|e| e.target),
        }
    }
}

#[derive(Debug, Clone)]
struct Translator {
    forward: Resolver,
    reverse: HashMap<Ipv4Address, Ipv6Address>,
    latency: SimTime,
}

#[derive(Debug, Clone)]
struct DstmState {
    pool: AddressPool,
    resolver: LinearTable,
    alloc_latency: SimTime,
    encap_latency: SimTime,
    tunnel_src: Ipv6Address,
    tunnel_dst: Ipv6Address,
}

#[derive(Debug, Clone)]
enum Engine {
    Translator(Translator),
    Dstm(DstmState),
}

/// A provisioned gateway of one kind.
#[derive(Debug, Clone)]
pub struct Gateway {
    kind: GatewayKind,
    engine: Engine,
    counters: GatewayCounters,
}

impl Gateway {
    pub fn new(kind: GatewayKind, entries: &[MappingEntry], params: &GatewayParams) -> Self {
        let engine = match kind {
            GatewayKind::Dwc => Engine::Translator(Translator {
                forward: Resolver::Tree(entries.iter().copied().collect()),
                reverse: reverse_map(entries),
                latency: params.dwc_latency,
            }),
            GatewayKind::BdSiit => Engine::Translator(Translator {
                forward: Resolver::Linear(LinearTable::new(entries)),
                reverse: reverse_map(entries),
                latency: params.bdsiit_latency,
            }),
            GatewayKind::Dstm => Engine::Dstm(DstmState {
                pool: AddressPool::new(params.dstm_pool.iter().copied(), params.dstm_lease),
                resolver: LinearTable::new(entries),
                alloc_latency: params.dstm_alloc_latency,
                encap_latency: params.dstm_encap_latency,
                tunnel_src: params.tunnel_src,
                tunnel_dst: params.tunnel_dst,
            }),
        };
        Self {
            kind,
            engine,
            counters: GatewayCounters::default(),
        }
    }

    pub fn kind(&self) -> GatewayKind {
        self.kind
    }

    pub fn counters(&self) -> &GatewayCounters {
        &self.counters
    }

    pub fn pool(&self) -> Option<&AddressPool> {
        match &self.engine {
            Engine::Dstm(s) => Some(&s.pool),
            Engine::Translator(_) => None,
        }
    }

    /// Handles a datagram arriving from the IPv6 side.
    pub fn process_v6(&mut self, dgram: &Datagram, now: SimTime) -> Processed {
        let out = match &mut self.engine {
            Engine::Translator(t) => t.forward_v6(dgram),
            Engine::Dstm(s) => s.forward_v6(dgram, now),
        };
        self.counters.record(&out.verdict);
        out
    }

    /// Handles a datagram arriving from the IPv4 side (the return path).
    pub fn process_v4(&mut self, dgram: &Datagram, now: SimTime) -> Processed {
        let out = match &mut self.engine {
            Engine::Translator(t) => t.reverse_v4(dgram),
            Engine::Dstm(s) => s.reverse_v4(dgram, now),
        };
        self.counters.record(&out.verdict);
        out
    }
}

impl Translator {
    fn forward_v6(&self, dgram: &Datagram) -> Processed {
        let [IpHeader::V6(h)] = dgram.headers.as_slice() else {
            return Processed::drop(DropReason::Malformed);
        };
        let (Some(src), Some(dst)) = (self.forward.resolve(h.src), self.forward.resolve(h.dst)) else {
            return Processed::drop(DropReason::MappingMiss);
        };
        match siit_v6_to_v4(h, src, dst) {
            Ok(v4) => Processed {
                verdict: Verdict::Translated(Datagram::ipv4(v4, dgram.payload_len)),
                latency: self.latency,
            },
            Err(_) => Processed::drop(DropReason::HopLimitExceeded),
        }
    }

    fn reverse_v4(&self, dgram: &Datagram) -> Processed {
        let [IpHeader::V4(h)] = dgram.headers.as_slice() else {
            return Processed::drop(DropReason::Malformed);
        };
        let (Some(&src), Some(&dst)) = (self.reverse.get(&h.src), self.reverse.get(&h.dst)) else {
            return Processed::drop(DropReason::MappingMiss);
        };
        match siit_v4_to_v6(h, src, dst) {
            Ok(v6) => Processed {
                verdict: Verdict::Translated(Datagram::ipv6(v6, dgram.payload_len)),
                latency: self.latency,
            },
            Err(TranslateError::HopLimitExceeded) => Processed::drop(DropReason::HopLimitExceeded),
            Err(TranslateError::TruncatedIpv4(_)) => Processed::drop(DropReason::Malformed),
        }
    }
}

impl DstmState {
    fn forward_v6(&mut self, dgram: &Datagram, now: SimTime) -> Processed {
        let [IpHeader::V6(h)] = dgram.headers.as_slice() else {
            return Processed::drop(DropReason::Malformed);
        };
        if h.hop_limit == 0 {
            return Processed::drop(DropReason::HopLimitExceeded);
        }
        let Some(dst) = self.resolver.lookup(h.dst).map(|e| e.target) else {
            return Processed::drop(DropReason::MappingMiss);
        };
        self.pool.expire_leases(now);
        let alloc = match self.pool.allocate(h.src, now) {
            Ok(a) => a,
            Err(PoolError::Exhausted) => return Processed::drop(DropReason::AllocationFailure),
        };
        let inner = match siit_v6_to_v4(h, alloc.address, dst) {
            Ok(v4) => Datagram::ipv4(v4, dgram.payload_len),
            Err(_) => return Processed::drop(DropReason::HopLimitExceeded),
        };
        let tunneled = dstm_encapsulate(&inner, self.tunnel_src, self.tunnel_dst)
            .expect("freshly built IPv4 datagram");
        let mut latency = self.encap_latency;
        if alloc.fresh {
            latency += self.alloc_latency;
        }
        Processed {
            verdict: Verdict::Encapsulated(tunneled),
            latency,
        }
    }

    fn reverse_v4(&mut self, dgram: &Datagram, now: SimTime) -> Processed {
        let [IpHeader::V4(h)] = dgram.headers.as_slice() else {
            return Processed::drop(DropReason::Malformed);
        };
        if h.ttl == 0 {
            return Processed::drop(DropReason::HopLimitExceeded);
        }
        self.pool.expire_leases(now);
        let Some(host) = self.pool.host_of(h.dst) else {
            return Processed::drop(DropReason::MappingMiss);
        };
        let mut inner = *h;
        inner.ttl -= 1;
        let tunneled = dstm_encapsulate(&Datagram::ipv4(inner, dgram.payload_len), self.tunnel_src, host)
            .expect("plain IPv4 datagram");
        Processed {
            verdict: Verdict::Encapsulated(tunneled),
            latency: self.encap_latency,
        }
    }
}

//! Deterministic packet-level simulation of one gateway scenario.
//!
//! Topology is a dumbbell with the gateway at the bottleneck ingress:
//!
//! ```text
//! source 1 ──access──┐                      ┌── sink F+1
//! source 2 ──access──┤ gateway ─bottleneck─ ┤── sink F+2
//!   ...              │  (node 0)            │    ...
//! source F ──access──┘                      └── sink 2F
//! ```
//!
//! Flow `i` runs from node `i + 1` to node `F + 1 + i`. Every source has one
//! outgoing queue onto its access link, and the gateway has one outgoing
//! queue onto the bottleneck, so a queue is named by its node id. The
//! gateway's per-packet processing latency is charged as service time on
//! the bottleneck, ahead of serialization. DSTM's tunnel spans the
//! bottleneck and is removed at the sink.
//!
//! TCP acknowledgements are not simulated as packets. Each ack reaches the
//! source after the fixed return-path delay of a 40-byte segment through
//! idle links and the gateway.

pub mod audit;
mod cbr;
mod event;
mod queue;
mod rng;
mod tcp;

use std::collections::BTreeMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use audit::{AuditError, AuditSummary, FlowCounts, TraceAuditor};
pub use cbr::{cbr_emission_time, cbr_schedule};
pub use event::{EventQueue, OrderingError};
pub use queue::DropTailQueue;
use rng::below;
pub use tcp::{AckOutcome, TcpLiteState, TcpReceiver};

use crate::addr::Ipv6Address;
use crate::gateway::{
    dstm_decapsulate, Datagram, Gateway, GatewayCounters, GatewayKind, Ipv6Header, Verdict,
    IPV4_HEADER_LEN, IPV6_HEADER_LEN, PROTO_TCP, PROTO_UDP,
};
use crate::scenario::{sink_address, source_address, ScenarioConfig, ScenarioError};
use crate::time::SimTime;
use crate::trace::{Proto, TraceEvent, TraceRecord, TraceSink};

pub const GATEWAY_NODE: u32 = 0;
const ACK_SEGMENT: u32 = 20;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Ordering(#[from] OrderingError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Fans one record out to several sinks.
pub struct Tee<'a>(pub Vec<&'a mut dyn TraceSink>);

impl TraceSink for Tee<'_> {
    fn record(&mut self, r: &TraceRecord) {
        for s in self.0.iter_mut() {
            s.record(r);
        }
    }
}

/// Discards everything.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _: &TraceRecord) {}
}

#[derive(Debug, Clone)]
struct Packet {
    flow: u32,
    /// Transmission id, unique within the flow; the trace `seq`.
    tx: u64,
    segment: u64,
    proto: Proto,
    dgram: Datagram,
    sent_at: SimTime,
    /// Gateway processing to charge before serialization.
    extra_service: SimTime,
}

#[derive(Debug)]
enum Event {
    CbrSend { flow: u32, k: u64 },
    TcpStart { flow: u32 },
    TxDone { node: u32 },
    Arrive { node: u32, pkt: Packet },
    Ack { flow: u32, ack: u64, echo: SimTime },
    Timer { flow: u32, generation: u64 },
}

#[derive(Debug)]
struct Port {
    node: u32,
    queue: DropTailQueue<Packet>,
    in_service: Option<Packet>,
    bw_bps: u64,
    prop: SimTime,
}

#[derive(Debug)]
struct TcpFlow {
    sender: TcpLiteState,
    receiver: TcpReceiver,
    timer_generation: u64,
    timer_armed: bool,
}

#[derive(Debug)]
enum FlowKind {
    Tcp(Box<TcpFlow>),
    Cbr { rate_pps: f64 },
}

#[derive(Debug)]
struct Flow {
    src_node: u32,
    sink_node: u32,
    src: Ipv6Address,
    dst: Ipv6Address,
    start: SimTime,
    next_tx: u64,
    kind: FlowKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowInfo {
    pub id: u32,
    pub proto: Proto,
    pub src_node: u32,
    pub sink_node: u32,
    pub start: SimTime,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub end_time: SimTime,
    pub flows: Vec<FlowInfo>,
    /// Packets still in queues, on links, or in propagation at the end.
    pub in_flight: BTreeMap<u32, u64>,
    pub gateway: GatewayCounters,
    /// Drops at each node's queue.
    pub queue_drops: BTreeMap<u32, u64>,
    pub queue_high_water: BTreeMap<u32, usize>,
    pub events: u64,
    /// Minimum propagation delay of any source-to-sink path.
    pub min_path_delay: SimTime,
}

/// A built topology ready to run.
pub struct Simulation {
    cfg: ScenarioConfig,
    events: EventQueue<Event>,
    ports: Vec<Port>,
    flows: Vec<Flow>,
    gateway: Gateway,
    ack_delay: SimTime,
    dispatched: u64,
}

pub fn build_topology(cfg: &ScenarioConfig) -> Result<Simulation, SimError> {
    Simulation::new(cfg)
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        let (ftp, cbr) = cfg.active_flows();
        let n = ftp + cbr;
        if n == 0 {
            return Err(SimError::Invalid(format!("traffic {} selects no flows", cfg.traffic)));
        }
        let entries = cfg.mapping_entries()?;
        let gateway = Gateway::new(cfg.mechanism, &entries, &cfg.gateway);
        let topo = &cfg.topology;

        let mut ports = Vec::with_capacity(n as usize + 1);
        ports.push(Port {
            node: GATEWAY_NODE,
            queue: DropTailQueue::new(cfg.queue_capacity),
            in_service: None,
            bw_bps: topo.bottleneck_bw_bps,
            prop: topo.bottleneck_delay,
        });
        for i in 0..n {
            ports.push(Port {
                node: i + 1,
                queue: DropTailQueue::new(cfg.queue_capacity),
                in_service: None,
                bw_bps: topo.access_bw_bps,
                prop: topo.access_delay,
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut events = EventQueue::new();
        let mut flows = Vec::with_capacity(n as usize);
        // Host indices stay fixed per role so a MIXED run and a single-traffic
        // run address the same hosts.
        let hosts: Vec<(u32, bool)> = (0..ftp)
            .map(|i| (i, true))
            .chain((0..cbr).map(|i| (topo.ftp_flows + i, false)))
            .collect();
        let rate = cfg.cbr_rate();
        if cbr > 0 && !(rate.is_finite() && rate > 0.0) {
            return Err(SimError::Invalid(format!("CBR rate {rate} must be positive")));
        }
        for (id, (host, is_tcp)) in hosts.into_iter().enumerate() {
            let id = id as u32;
            let start = SimTime(below(&mut rng, topo.start_jitter.as_micros()));
            let kind = if is_tcp {
                events.schedule(start, Event::TcpStart { flow: id })?;
                FlowKind::Tcp(Box::new(TcpFlow {
                    sender: TcpLiteState::new(&cfg.tcp),
                    receiver: TcpReceiver::new(),
                    timer_generation: 0,
                    timer_armed: false,
                }))
            } else {
                events.schedule(start, Event::CbrSend { flow: id, k: 0 })?;
                FlowKind::Cbr { rate_pps: rate }
            };
            flows.push(Flow {
                src_node: id + 1,
                sink_node: n + 1 + id,
                src: source_address(host),
                dst: sink_address(host),
                start,
                next_tx: 0,
                kind,
            });
        }

        Ok(Self {
            ack_delay: ack_delay(cfg),
            cfg: cfg.clone(),
            events,
            ports,
            flows,
            gateway,
            dispatched: 0,
        })
    }

    pub fn flows(&self) -> Vec<FlowInfo> {
        self.flows
            .iter()
            .enumerate()
            .map(|(i, f)| FlowInfo {
                id: i as u32,
                proto: match f.kind {
                    FlowKind::Tcp(_) => Proto::Tcp,
                    FlowKind::Cbr { .. } => Proto::Udp,
                },
                src_node: f.src_node,
                sink_node: f.sink_node,
                start: f.start,
            })
            .collect()
    }

    pub fn ack_delay(&self) -> SimTime {
        self.ack_delay
    }

    /// Runs to the configured end time, streaming trace records to `sink`.
    pub fn run(mut self, sink: &mut dyn TraceSink) -> Result<SimOutcome, SimError> {
        let end = self.cfg.sim_time;
        while let Some((now, ev)) = self.events.pop_before(end) {
            self.dispatched += 1;
            self.dispatch(now, ev, sink)?;
        }
        Ok(self.outcome())
    }

    fn dispatch(&mut self, now: SimTime, ev: Event, sink: &mut dyn TraceSink) -> Result<(), SimError> {
        match ev {
            Event::CbrSend { flow, k } => {
                let rate = match self.flows[flow as usize].kind {
                    FlowKind::Cbr { rate_pps } => rate_pps,
                    FlowKind::Tcp(_) => unreachable!("CBR event for a TCP flow"),
                };
                self.emit(flow, 0, now, sink)?;
                let next = cbr_emission_time(self.flows[flow as usize].start, rate, k + 1);
                if next < self.cfg.sim_time {
                    self.events.schedule(next, Event::CbrSend { flow, k: k + 1 })?;
                }
            }
            Event::TcpStart { flow } => self.tcp_pump(flow, now, sink)?,
            Event::TxDone { node } => self.tx_done(node, now, sink)?,
            Event::Arrive { node, pkt } => {
                if node == GATEWAY_NODE {
                    self.gateway_arrival(pkt, now, sink)?;
                } else {
                    self.sink_arrival(node, pkt, now, sink)?;
                }
            }
            Event::Ack { flow, ack, echo } => {
                let FlowKind::Tcp(t) = &mut self.flows[flow as usize].kind else {
                    unreachable!("ack for a CBR flow")
                };
                if let AckOutcome::Advanced(_) = t.sender.on_ack(ack, Some(now - echo)) {
                    t.timer_generation += 1;
                    t.timer_armed = false;
                    if t.sender.in_flight() > 0 {
                        self.arm_timer(flow, now)?;
                    }
                }
                self.tcp_pump(flow, now, sink)?;
            }
            Event::Timer { flow, generation } => {
                let FlowKind::Tcp(t) = &mut self.flows[flow as usize].kind else {
                    unreachable!("timer for a CBR flow")
                };
                if generation == t.timer_generation && t.timer_armed {
                    t.timer_armed = false;
                    t.sender.on_timeout();
                    self.tcp_pump(flow, now, sink)?;
                }
            }
        }
        Ok(())
    }

    fn arm_timer(&mut self, flow: u32, now: SimTime) -> Result<(), SimError> {
        let FlowKind::Tcp(t) = &mut self.flows[flow as usize].kind else {
            return Ok(());
        };
        t.timer_generation += 1;
        t.timer_armed = true;
        let at = now + t.sender.rto;
        let generation = t.timer_generation;
        self.events.schedule(at, Event::Timer { flow, generation })?;
        Ok(())
    }

    fn tcp_pump(&mut self, flow: u32, now: SimTime, sink: &mut dyn TraceSink) -> Result<(), SimError> {
        loop {
            let FlowKind::Tcp(t) = &mut self.flows[flow as usize].kind else {
                return Ok(());
            };
            if !t.sender.can_send() {
                break;
            }
            let seg = t.sender.take_next();
            let need_timer = !t.timer_armed;
            if need_timer {
                self.arm_timer(flow, now)?;
            }
            self.emit(flow, seg, now, sink)?;
        }
        Ok(())
    }

    /// Creates a packet at the flow's source and offers it to the access queue.
    fn emit(&mut self, flow: u32, segment: u64, now: SimTime, sink: &mut dyn TraceSink) -> Result<(), SimError> {
        let f = &mut self.flows[flow as usize];
        let (proto, nh) = match f.kind {
            FlowKind::Tcp(_) => (Proto::Tcp, PROTO_TCP),
            FlowKind::Cbr { .. } => (Proto::Udp, PROTO_UDP),
        };
        let payload = self.cfg.packet_size;
        let dgram = Datagram::ipv6(Ipv6Header::new(f.src, f.dst, nh, payload), payload);
        let tx = f.next_tx;
        f.next_tx += 1;
        let node = f.src_node;
        let pkt = Packet {
            flow,
            tx,
            segment,
            proto,
            dgram,
            sent_at: now,
            extra_service: SimTime::ZERO,
        };
        sink.record(&trace(TraceEvent::Send, now, node, &pkt));
        self.offer(node, pkt, now, sink)
    }

    fn offer(&mut self, node: u32, pkt: Packet, now: SimTime, sink: &mut dyn TraceSink) -> Result<(), SimError> {
        let port = &mut self.ports[node as usize];
        let rec = trace(TraceEvent::Enqueue, now, node, &pkt);
        match port.queue.enqueue(pkt) {
            Ok(()) => {
                sink.record(&rec);
                if port.in_service.is_none() {
                    self.start_next(node, now, sink)?;
                }
            }
            Err(pkt) => sink.record(&trace(TraceEvent::Drop, now, node, &pkt)),
        }
        Ok(())
    }

    fn start_next(&mut self, node: u32, now: SimTime, sink: &mut dyn TraceSink) -> Result<(), SimError> {
        let port = &mut self.ports[node as usize];
        let Some(pkt) = port.queue.dequeue() else {
            return Ok(());
        };
        sink.record(&trace(TraceEvent::Dequeue, now, node, &pkt));
        let service = pkt.extra_service + SimTime::serialization(pkt.dgram.wire_size(), port.bw_bps);
        port.in_service = Some(pkt);
        self.events.schedule(now + service, Event::TxDone { node })?;
        Ok(())
    }

    fn tx_done(&mut self, node: u32, now: SimTime, sink: &mut dyn TraceSink) -> Result<(), SimError> {
        let port = &mut self.ports[node as usize];
        let pkt = port.in_service.take().expect("transmission in progress");
        let at = now + port.prop;
        let next_hop = if node == GATEWAY_NODE {
            self.flows[pkt.flow as usize].sink_node
        } else {
            GATEWAY_NODE
        };
        self.events.schedule(at, Event::Arrive { node: next_hop, pkt })?;
        self.start_next(node, now, sink)
    }

    fn gateway_arrival(&mut self, mut pkt: Packet, now: SimTime, sink: &mut dyn TraceSink) -> Result<(), SimError> {
        let processed = self.gateway.process_v6(&pkt.dgram, now);
        match processed.verdict {
            Verdict::Translated(d) | Verdict::Encapsulated(d) => {
                pkt.dgram = d;
                pkt.extra_service = processed.latency;
                self.offer(GATEWAY_NODE, pkt, now, sink)
            }
            Verdict::Dropped(_) => {
                sink.record(&trace(TraceEvent::Drop, now, GATEWAY_NODE, &pkt));
                Ok(())
            }
        }
    }

    fn sink_arrival(&mut self, node: u32, pkt: Packet, now: SimTime, sink: &mut dyn TraceSink) -> Result<(), SimError> {
        sink.record(&trace(TraceEvent::Receive, now, node, &pkt));
        if pkt.dgram.is_tunneled() {
            // The sink is the tunnel endpoint.
            let _inner = dstm_decapsulate(&pkt.dgram).expect("tunnel packet");
        }
        let flow = pkt.flow;
        if let FlowKind::Tcp(t) = &mut self.flows[flow as usize].kind {
            let ack = t.receiver.on_segment(pkt.segment);
            self.events.schedule(
                now + self.ack_delay,
                Event::Ack {
                    flow,
                    ack,
                    echo: pkt.sent_at,
                },
            )?;
        }
        Ok(())
    }

    fn outcome(self) -> SimOutcome {
        let mut in_flight: BTreeMap<u32, u64> = BTreeMap::new();
        let mut bump = |flow: u32| *in_flight.entry(flow).or_default() += 1;
        for port in &self.ports {
            port.queue.iter().for_each(|p| bump(p.flow));
            if let Some(p) = &port.in_service {
                bump(p.flow);
            }
        }
        for (_, ev) in self.events.pending() {
            if let Event::Arrive { pkt, .. } = ev {
                bump(pkt.flow);
            }
        }
        let topo = &self.cfg.topology;
        SimOutcome {
            end_time: self.cfg.sim_time,
            flows: self.flows(),
            in_flight,
            gateway: self.gateway.counters().clone(),
            queue_drops: self.ports.iter().map(|p| (p.node, p.queue.drop_count())).collect(),
            queue_high_water: self.ports.iter().map(|p| (p.node, p.queue.high_water())).collect(),
            events: self.dispatched,
            min_path_delay: topo.access_delay + topo.bottleneck_delay,
        }
    }
}

fn trace(event: TraceEvent, time: SimTime, node: u32, p: &Packet) -> TraceRecord {
    TraceRecord {
        event,
        time,
        node,
        flow: p.flow,
        seq: p.tx,
        wire_bytes: p.dgram.wire_size(),
        proto: p.proto,
    }
}

/// Return-path delay of an ack: IPv4 (tunneled for DSTM) over the idle
/// bottleneck, gateway processing, then IPv6 over the idle access link.
pub fn ack_delay(cfg: &ScenarioConfig) -> SimTime {
    let topo = &cfg.topology;
    let v4 = ACK_SEGMENT + IPV4_HEADER_LEN;
    let (bn_bytes, gw) = match cfg.mechanism {
        GatewayKind::Dwc => (v4, cfg.gateway.dwc_latency),
        GatewayKind::BdSiit => (v4, cfg.gateway.bdsiit_latency),
        GatewayKind::Dstm => (v4 + IPV6_HEADER_LEN, cfg.gateway.dstm_encap_latency),
    };
    let access_bytes = match cfg.mechanism {
        GatewayKind::Dstm => v4 + IPV6_HEADER_LEN,
        _ => ACK_SEGMENT + IPV6_HEADER_LEN,
    };
    topo.bottleneck_delay
        + SimTime::serialization(bn_bytes, topo.bottleneck_bw_bps)
        + gw
        + topo.access_delay
        + SimTime::serialization(access_bytes, topo.access_bw_bps)
}

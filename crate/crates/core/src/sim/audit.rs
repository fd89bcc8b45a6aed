//! Checks a trace stream against the conservation and queue laws.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use crate::time::SimTime;
use crate::trace::{TraceEvent, TraceRecord, TraceSink};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowCounts {
    pub sent: u64,
    pub received: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditSummary {
    pub flows: BTreeMap<u32, FlowCounts>,
    /// Highest queue occupancy seen per node.
    pub max_occupancy: BTreeMap<u32, usize>,
    pub records: u64,
}

impl AuditSummary {
    pub fn total_drops(&self) -> u64 {
        self.flows.values().map(|f| f.dropped).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("trace audit failed ({} violations); first: {}", .violations.len(), .violations.first().map(String::as_str).unwrap_or(""))]
pub struct AuditError {
    pub violations: Vec<String>,
}

const MAX_VIOLATIONS: usize = 100;

/// Streams records and checks, per flow, that every `s` is resolved at most
/// once by an `r` or `d`, that time never runs backwards, that receives are
/// not faster than the path's propagation delay, and that queue occupancy
/// stays within `[0, capacity]`.
#[derive(Debug)]
pub struct TraceAuditor {
    capacity: usize,
    min_delay: SimTime,
    occupancy: HashMap<u32, usize>,
    max_occupancy: BTreeMap<u32, usize>,
    flows: BTreeMap<u32, FlowCounts>,
    outstanding: HashMap<(u32, u64), SimTime>,
    last_time: SimTime,
    records: u64,
    violations: Vec<String>,
}

impl TraceAuditor {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            min_delay: SimTime::ZERO,
            occupancy: HashMap::new(),
            max_occupancy: BTreeMap::new(),
            flows: BTreeMap::new(),
            outstanding: HashMap::new(),
            last_time: SimTime::ZERO,
            records: 0,
            violations: Vec::new(),
        }
    }

    /// Lower bound on any send-to-receive delay.
    pub fn with_min_delay(mut self, d: SimTime) -> Self {
        self.min_delay = d;
        self
    }

    fn violation(&mut self, msg: String) {
        if self.violations.len() < MAX_VIOLATIONS {
            self.violations.push(msg);
        }
    }

    /// `in_flight` is the simulator's own count of undelivered packets per
    /// flow at the end of the run.
    pub fn finish(mut self, in_flight: &BTreeMap<u32, u64>) -> Result<AuditSummary, AuditError> {
        let mut open: BTreeMap<u32, u64> = BTreeMap::new();
        for (flow, _) in self.outstanding.keys() {
            *open.entry(*flow).or_default() += 1;
        }
        let flows: Vec<_> = self.flows.iter().map(|(k, v)| (*k, *v)).collect();
        for (flow, c) in flows {
            let f = in_flight.get(&flow).copied().unwrap_or(0);
            if c.sent != c.received + c.dropped + f {
                self.violation(format!(
                    "flow {flow}: sent {} != received {} + dropped {} + in flight {f}",
                    c.sent, c.received, c.dropped
                ));
            }
            let o = open.get(&flow).copied().unwrap_or(0);
            if o != f {
                self.violation(format!("flow {flow}: {o} unresolved sends but {f} reported in flight"));
            }
        }
        for (flow, f) in in_flight {
            if *f > 0 && !self.flows.contains_key(flow) {
                self.violation(format!("flow {flow}: {f} in flight but never sent"));
            }
        }
        if !self.violations.is_empty() {
            return Err(AuditError {
                violations: self.violations,
            });
        }
        Ok(AuditSummary {
            flows: self.flows,
            max_occupancy: self.max_occupancy,
            records: self.records,
        })
    }
}

impl TraceSink for TraceAuditor {
    fn record(&mut self, r: &TraceRecord) {
        self.records += 1;
        if r.time < self.last_time {
            self.violation(format!("time went backwards to {} at record {}", r.time, self.records));
        }
        self.last_time = r.time;
        match r.event {
            TraceEvent::Send => {
                self.flows.entry(r.flow).or_default().sent += 1;
                if self.outstanding.insert((r.flow, r.seq), r.time).is_some() {
                    self.violation(format!("flow {} seq {} sent twice", r.flow, r.seq));
                }
            }
            TraceEvent::Receive | TraceEvent::Drop => {
                let c = self.flows.entry(r.flow).or_default();
                if r.event == TraceEvent::Receive {
                    c.received += 1;
                } else {
                    c.dropped += 1;
                }
                match self.outstanding.remove(&(r.flow, r.seq)) {
                    None => self.violation(format!(
                        "flow {} seq {}: `{}` without an outstanding send",
                        r.flow,
                        r.seq,
                        r.event.symbol()
                    )),
                    Some(sent) if r.event == TraceEvent::Receive && r.time < sent + self.min_delay => {
                        self.violation(format!(
                            "flow {} seq {} arrived after {}s, below the {}s path delay",
                            r.flow,
                            r.seq,
                            r.time - sent,
                            self.min_delay
                        ))
                    }
                    Some(_) => {}
                }
            }
            TraceEvent::Enqueue => {
                let occ = self.occupancy.entry(r.node).or_default();
                *occ += 1;
                let now = *occ;
                let max = self.max_occupancy.entry(r.node).or_default();
                *max = (*max).max(now);
                if now > self.capacity {
                    self.violation(format!("node {} queue holds {now} > {} at {}", r.node, self.capacity, r.time));
                }
            }
            TraceEvent::Dequeue => {
                let occ = self.occupancy.entry(r.node).or_default();
                if *occ == 0 {
                    self.violation(format!("node {} dequeued from an empty queue at {}", r.node, r.time));
                } else {
                    *occ -= 1;
                }
            }
        }
    }
}

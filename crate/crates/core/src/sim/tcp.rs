//! A small TCP model: slow start, congestion avoidance, and go-back-N
//! retransmission on timeout. There is no fast retransmit. Windows count
//! segments; the FTP application always has data.

use std::collections::BTreeSet;

use crate::scenario::TcpParams;
use crate::time::SimTime;

const MAX_RTO: SimTime = SimTime::from_secs(60);
const INITIAL_RTO: SimTime = SimTime::from_secs(1);
const CLOCK_GRANULARITY_US: u64 = 1_000;

#[derive(Debug, Clone, PartialEq)]
pub struct TcpLiteState {
    pub cwnd: f64,
    pub ssthresh: f64,
    /// Next segment number to transmit.
    pub next_seq: u64,
    /// Cumulative ack: every segment below this has been received.
    pub acked_up_to: u64,
    pub rto: SimTime,
    max_window: Option<u32>,
    min_rto: SimTime,
    srtt_us: Option<u64>,
    rttvar_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckOutcome {
    /// The ack advanced the window by this many segments.
    Advanced(u64),
    Duplicate,
}

impl TcpLiteState {
    pub fn new(p: &TcpParams) -> Self {
        Self {
            cwnd: 1.0,
            ssthresh: p.initial_ssthresh,
            next_seq: 0,
            acked_up_to: 0,
            rto: INITIAL_RTO.max(p.min_rto),
            max_window: p.max_window,
            min_rto: p.min_rto,
            srtt_us: None,
            rttvar_us: 0,
        }
    }

    pub fn in_flight(&self) -> u64 {
        self.next_seq - self.acked_up_to
    }

    /// Usable window in whole segments, never below one.
    pub fn window(&self) -> u64 {
        let w = match self.max_window {
            Some(m) => self.cwnd.min(f64::from(m)),
            None => self.cwnd,
        };
        (w.floor() as u64).max(1)
    }

    pub fn can_send(&self) -> bool {
        self.in_flight() < self.window()
    }

    /// Claims the next segment number for transmission.
    pub fn take_next(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    pub fn on_ack(&mut self, ack: u64, rtt: Option<SimTime>) -> AckOutcome {
        if ack <= self.acked_up_to {
            return AckOutcome::Duplicate;
        }
        let advanced = ack - self.acked_up_to;
        self.acked_up_to = ack;
        // Segments sent before a timeout rewind may be acked past next_seq.
        self.next_seq = self.next_seq.max(ack);
        if self.cwnd < self.ssthresh {
            self.cwnd += 1.0;
        } else {
            self.cwnd += 1.0 / self.cwnd;
        }
        if let Some(r) = rtt {
            self.sample_rtt(r);
        }
        AckOutcome::Advanced(advanced)
    }

    pub fn on_timeout(&mut self) {
        self.ssthresh = (self.cwnd / 2.0).max(2.0);
        self.cwnd = 1.0;
        self.next_seq = self.acked_up_to;
        self.rto = SimTime((self.rto.as_micros() * 2).min(MAX_RTO.as_micros()));
    }

    fn sample_rtt(&mut self, r: SimTime) {
        let r = r.as_micros();
        match self.srtt_us {
            None => {
                self.srtt_us = Some(r);
                self.rttvar_us = r / 2;
            }
            Some(srtt) => {
                self.rttvar_us = (3 * self.rttvar_us + srtt.abs_diff(r)) / 4;
                self.srtt_us = Some((7 * srtt + r) / 8);
            }
        }
        let srtt = self.srtt_us.unwrap_or(r);
        let rto = srtt + (4 * self.rttvar_us).max(CLOCK_GRANULARITY_US);
        self.rto = SimTime(rto.clamp(self.min_rto.as_micros(), MAX_RTO.as_micros()));
    }
}

/// In-order delivery with an out-of-order buffer; acks are cumulative.
#[derive(Debug, Clone, Default)]
pub struct TcpReceiver {
    expected: u64,
    buffered: BTreeSet<u64>,
}

impl TcpReceiver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the cumulative ack to send for this segment.
    pub fn on_segment(&mut self, seq: u64) -> u64 {
        if seq == self.expected {
            self.expected += 1;
            while self.buffered.remove(&self.expected) {
                self.expected += 1;
            }
        } else if seq > self.expected {
            self.buffered.insert(seq);
        }
        self.expected
    }

    pub fn expected(&self) -> u64 {
        self.expected
    }
}

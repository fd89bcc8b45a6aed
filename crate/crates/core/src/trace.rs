//! Line-oriented packet trace shared by the simulator and the metrics code.
//!
//! One record per line, seven space-separated fields:
//!
//! ```text
//! <ev> <time_s> <node> <flow> <seq> <wire_bytes> <proto>
//! ```
//!
//! * `ev` is `s` (sent by the source application), `r` (received by the
//!   destination), `+` (enqueued), `-` (dequeued, transmission starts) or
//!   `d` (dropped).
//! * `time_s` is seconds with exactly six decimals; simulation time is whole
//!   microseconds so this is lossless.
//! * `node` is where the event happened. Queue events name the node that
//!   owns the outgoing queue; every node has at most one.
//! * `seq` numbers transmissions within a flow. A retransmitted TCP segment
//!   gets a new `seq`, so `s` and `r` pair up unambiguously.
//! * `wire_bytes` is the datagram size at that point, headers included.
//!   `s` records are always plain IPv6 datagrams from IPv6-only sources.
//! * `proto` is `tcp` or `udp`.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::time::{parse_fixed_secs, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    Send,
    Receive,
    Enqueue,
    Dequeue,
    Drop,
}

impl TraceEvent {
    pub fn symbol(self) -> char {
        match self {
            TraceEvent::Send => 's',
            TraceEvent::Receive => 'r',
            TraceEvent::Enqueue => '+',
            TraceEvent::Dequeue => '-',
            TraceEvent::Drop => 'd',
        }
    }

    fn from_symbol(s: &str) -> Option<Self> {
        Some(match s {
            "s" => TraceEvent::Send,
            "r" => TraceEvent::Receive,
            "+" => TraceEvent::Enqueue,
            "-" => TraceEvent::Dequeue,
            "d" => TraceEvent::Drop,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Proto {
    Tcp,
    Udp,
}

impl Proto {
    pub fn as_str(self) -> &'static str {
        match self {
            Proto::Tcp => "tcp",
            Proto::Udp => "udp",
        }
    }
}

impl fmt::Display for Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Proto {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "tcp" => Ok(Proto::Tcp),
            "udp" => Ok(Proto::Udp),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceRecord {
    pub event: TraceEvent,
    pub time: SimTime,
    pub node: u32,
    pub flow: u32,
    pub seq: u64,
    pub wire_bytes: u32,
    pub proto: Proto,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {} {}",
            self.event.symbol(),
            self.time,
            self.node,
            self.flow,
            self.seq,
            self.wire_bytes,
            self.proto
        )
    }
}

#[derive(Debug, Error)]
pub enum TraceParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl TraceRecord {
    pub fn parse_line(line: &str, line_no: usize) -> Result<Self, TraceParseError> {
        let err = |message: String| TraceParseError::Syntax {
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", fields.len())));
        }
        let event = TraceEvent::from_symbol(fields[0]).ok_or_else(|| err(format!("bad event `{}`", fields[0])))?;
        let time = parse_fixed_secs(fields[1]).ok_or_else(|| err(format!("bad time `{}`", fields[1])))?;
        let num = |i: usize, what: &str| -> Result<u64, TraceParseError> {
            fields[i].parse().map_err(|_| err(format!("bad {what} `{}`", fields[i])))
        };
        let node = num(2, "node")? as u32;
        let flow = num(3, "flow")? as u32;
        let seq = num(4, "seq")?;
        let wire_bytes = num(5, "size")? as u32;
        let proto = fields[6].parse().map_err(|_| err(format!("bad proto `{}`", fields[6])))?;
        Ok(TraceRecord {
            event,
            time,
            node,
            flow,
            seq,
            wire_bytes,
            proto,
        })
    }
}

/// Anything that consumes trace records as they are produced.
pub trait TraceSink {
    fn record(&mut self, r: &TraceRecord);
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, r: &TraceRecord) {
        self.push(*r);
    }
}

/// Writes records in the text format. I/O errors are latched and reported
/// by [`TraceWriter::finish`].
pub struct TraceWriter<W: Write> {
    out: W,
    error: Option<io::Error>,
    lines: u64,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            out,
            error: None,
            lines: 0,
        }
    }

    pub fn finish(mut self) -> io::Result<u64> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.lines)
    }
}

impl<W: Write> TraceSink for TraceWriter<W> {
    fn record(&mut self, r: &TraceRecord) {
        if self.error.is_some() {
            return;
        }
        match writeln!(self.out, "{r}") {
            Ok(()) => self.lines += 1,
            Err(e) => self.error = Some(e),
        }
    }
}

/// Streams every record of a trace file into `sink`.
pub fn replay<R: BufRead>(reader: R, sink: &mut dyn TraceSink) -> Result<u64, TraceParseError> {
    let mut n = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        sink.record(&TraceRecord::parse_line(&line, i + 1)?);
        n += 1;
    }
    Ok(n)
}

pub fn read_trace<R: BufRead>(reader: R) -> Result<Vec<TraceRecord>, TraceParseError> {
    let mut v = Vec::new();
    replay(reader, &mut v)?;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_format_is_fixed() {
        let r = TraceRecord {
            event: TraceEvent::Enqueue,
            time: SimTime(1_000_208),
            node: 0,
            flow: 3,
            seq: 17,
            wire_bytes: 276,
            proto: Proto::Tcp,
        };
        assert_eq!(r.to_string(), "+ 1.000208 0 3 17 276 tcp");
        assert_eq!(TraceRecord::parse_line(&r.to_string(), 1).unwrap(), r);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = read_trace("s 0.000000 1 0 0 72 udp\nx 0.1 1 0 0 72 udp\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TraceParseError::Syntax { line: 2, .. }), "{err}");
        assert!(TraceRecord::parse_line("s 0.000000 1 0 0 72", 1).is_err());
        assert!(TraceRecord::parse_line("s 0.000000 1 0 0 72 icmp", 1).is_err());
    }

    #[test]
    fn writer_round_trips() {
        let recs = vec![
            TraceRecord {
                event: TraceEvent::Send,
                time: SimTime(0),
                node: 1,
                flow: 0,
                seq: 0,
                wire_bytes: 72,
                proto: Proto::Udp,
            },
            TraceRecord {
                event: TraceEvent::Receive,
                time: SimTime(12_345),
                node: 9,
                flow: 0,
                seq: 0,
                wire_bytes: 52,
                proto: Proto::Udp,
            },
        ];
        let mut buf = Vec::new();
        let mut w = TraceWriter::new(&mut buf);
        for r in &recs {
            w.record(r);
        }
        assert_eq!(w.finish().unwrap(), 2);
        assert_eq!(read_trace(buf.as_slice()).unwrap(), recs);
    }
}

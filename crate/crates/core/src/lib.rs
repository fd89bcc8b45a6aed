//! IPv4/IPv6 transition-mechanism simulator.
//!
//! * [`addr`] and [`dollop`]: address values and the eight-chunk prefix
//!   decomposition.
//! * [`lpm`]: the succession tree used for IPv6-prefix to IPv4 mapping.
//! * [`gateway`]: stateless translation, the dollop-tree gateway, and the
//!   dual-stack pool/tunnel gateway.
//! * [`sim`]: a deterministic discrete-event packet simulator.
//! * [`metrics`]: throughput, delay, loss and jitter from simulator traces.
//! * [`scenario`], [`sweep`] and [`expect`]: the experiment harness.

pub mod addr;
pub mod dollop;
pub mod expect;
pub mod gateway;
pub mod lpm;
pub mod metrics;
pub mod run;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod time;
pub mod trace;

pub use addr::{Ipv4Address, Ipv6Address, Ipv6Prefix};
pub use dollop::{decompose_prefix, dollop_contains, Dollop, DollopVector};
pub use gateway::{Gateway, GatewayKind, GatewayParams};
pub use lpm::{oracle_lookup, EntryId, LookupResult, MappingEntry, SuccessionTree};
pub use time::SimTime;

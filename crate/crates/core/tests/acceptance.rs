//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use transim6_core::addr::{chunks_of, mask};
use transim6_core::dollop::{decompose_prefix, DOLLOPS};
use transim6_core::expect::Expectations;
use transim6_core::gateway::{
    dstm_decapsulate, dstm_encapsulate, siit_v4_to_v6, siit_v6_to_v4, Datagram, Ipv4Header, Ipv6Header,
    IPV4_HEADER_LEN, IPV6_HEADER_LEN, PROTO_TCP, PROTO_UDP,
};
use transim6_core::metrics::{jitter_series, mean_eed, plr, throughput, FlowStats, FlowStatsCollector, PlrDenominator};
use transim6_core::run::{run_to_dir, simulate, Outputs, REPORT_FILE, TRACE_FILE};
use transim6_core::scenario::{ScenarioConfig, Traffic};
use transim6_core::sweep::{run_sweep, SweepSpec};
use transim6_core::trace::replay;
use transim6_core::{
    oracle_lookup, EntryId, GatewayKind, Ipv4Address, Ipv6Address, Ipv6Prefix, MappingEntry, SimTime, SuccessionTree,
};

type Check = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Check);

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").canonicalize().unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(got: f64, want: f64) -> bool {
    (got - want).abs() <= 1e-9 * want.abs().max(1e-12)
}

/// Range admitted in chunk `z`, one bit at a time: a bit inside the prefix
/// is copied, a free bit is 0 in the low end and 1 in the high end.
fn bit_oracle(p: &Ipv6Prefix, z: usize) -> (u16, u16, u8) {
    let chunk = chunks_of(p.address())[z];
    let (mut lo, mut hi, mut fixed) = (0u16, 0u16, 0u8);
    for bit in 0..16 {
        let pos = 16 * z + bit;
        let b = 1u16 << (15 - bit);
        if pos < usize::from(p.length()) {
            lo |= chunk & b;
            hi |= chunk & b;
            fixed += 1;
        } else {
            hi |= b;
        }
    }
    (lo, hi, fixed)
}

fn decomposition_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut n = 0;
    for len in 0..=128u8 {
        for _ in 0..1000 {
            let p = Ipv6Prefix::canonicalize(Ipv6Address(rng.gen()), len).unwrap();
            let v = decompose_prefix(&p);
            v.validate().map_err(|e| format!("{p}: {e}"))?;
            ensure(v.total_length() == u32::from(len), || format!("{p}: total length {}", v.total_length()))?;
            for z in 0..DOLLOPS {
                let d = v.get(z);
                let want = bit_oracle(&p, z);
                ensure((d.strt(), d.stp(), d.ml()) == want, || {
                    format!("{p} chunk {z}: got {:?}, oracle {want:?}", (d.strt(), d.stp(), d.ml()))
                })?;
            }
            n += 1;
        }
    }
    Ok(format!("{n} prefixes"))
}

fn lpm_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut entries: BTreeMap<Ipv6Prefix, MappingEntry> = BTreeMap::new();
    let mut prefixes: Vec<Ipv6Prefix> = Vec::new();
    while entries.len() < 1000 {
        // Half the prefixes extend an earlier one.
        let p = if !prefixes.is_empty() && rng.gen_bool(0.5) {
            let base = prefixes[rng.gen_range(0..prefixes.len())];
            let len = rng.gen_range(base.length()..=128);
            Ipv6Prefix::canonicalize(Ipv6Address(base.address().0 | (rng.gen::<u128>() & !mask(base.length()))), len)
                .unwrap()
        } else {
            Ipv6Prefix::canonicalize(Ipv6Address(rng.gen()), rng.gen_range(0..=128)).unwrap()
        };
        if entries.contains_key(&p) {
            continue;
        }
        let id = EntryId(entries.len() as u64);
        entries.insert(p, MappingEntry::new(p, Ipv4Address(rng.gen()), id));
        prefixes.push(p);
    }
    let mut tree = SuccessionTree::new();
    for e in entries.values() {
        tree.insert(*e).map_err(|e| e.to_string())?;
    }
    ensure(tree.len() == 1000, || format!("tree holds {}", tree.len()))?;
    tree.check_invariants().map_err(|e| e.to_string())?;
    let mut hits = 0;
    for _ in 0..10_000 {
        let a = if rng.gen_bool(0.2) {
            Ipv6Address(rng.gen())
        } else {
            let p = prefixes[rng.gen_range(0..prefixes.len())];
            Ipv6Address(p.address().0 | (rng.gen::<u128>() & !mask(p.length())))
        };
        let got = tree.lookup(a);
        let want = oracle_lookup(entries.values(), a);
        ensure(got == want, || format!("{a}: tree {got:?}, oracle {want:?}"))?;
        hits += usize::from(got.is_some());
    }
    Ok(format!("1000 prefixes, 10000 probes, {hits} hits"))
}

fn translation_round_trip() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    for _ in 0..10_000 {
        let proto = if rng.gen() { PROTO_TCP } else { PROTO_UDP };
        let payload = rng.gen_range(0..65_000);
        let mut h = Ipv6Header::new(Ipv6Address(rng.gen()), Ipv6Address(rng.gen()), proto, payload);
        h.hop_limit = rng.gen_range(2..=255);
        h.traffic_class = rng.gen();
        let v4 = siit_v6_to_v4(&h, Ipv4Address(rng.gen()), Ipv4Address(rng.gen())).map_err(|e| e.to_string())?;
        ensure(v4.total_length - h.payload_length == IPV4_HEADER_LEN && IPV4_HEADER_LEN == 20, || {
            format!("header delta {}", v4.total_length - h.payload_length)
        })?;
        let back = siit_v4_to_v6(&v4, h.src, h.dst).map_err(|e| e.to_string())?;
        ensure(
            back.next_header == proto
                && back.traffic_class == h.traffic_class
                && back.payload_length == payload
                && back.hop_limit == h.hop_limit - 2,
            || format!("{h:?} came back as {back:?}"),
        )?;

        let inner = Datagram::ipv4(
            Ipv4Header {
                src: Ipv4Address(rng.gen()),
                dst: Ipv4Address(rng.gen()),
                ttl: rng.gen(),
                protocol: proto,
                tos: rng.gen(),
                total_length: payload + IPV4_HEADER_LEN,
                checksum_valid: true,
            },
            payload,
        );
        let outer = dstm_encapsulate(&inner, Ipv6Address(rng.gen()), Ipv6Address(rng.gen())).map_err(|e| e.to_string())?;
        ensure(outer.wire_size() - inner.wire_size() == 40 && IPV6_HEADER_LEN == 40, || {
            format!("tunnel overhead {}", outer.wire_size() - inner.wire_size())
        })?;
        let got = dstm_decapsulate(&outer).map_err(|e| e.to_string())?;
        ensure(got == inner, || format!("{inner:?} decapsulated to {got:?}"))?;
    }
    Ok("10000 headers".into())
}

/// Ten 100-byte packets, one per 100 ms; packets 3 and 7 are dropped and
/// the rest take 10, 14, 13, 60, 70, 80, 73, 80 ms.
const TEN_PACKETS: &str = "\
s 0.000000 1 0 0 140 udp
r 0.010000 5 0 0 140 udp
s 0.100000 1 0 1 140 udp
r 0.114000 5 0 1 140 udp
s 0.200000 1 0 2 140 udp
r 0.213000 5 0 2 140 udp
s 0.300000 1 0 3 140 udp
d 0.301000 0 0 3 140 udp
s 0.400000 1 0 4 140 udp
r 0.460000 5 0 4 140 udp
s 0.500000 1 0 5 140 udp
r 0.570000 5 0 5 140 udp
s 0.600000 1 0 6 140 udp
r 0.680000 5 0 6 140 udp
s 0.700000 1 0 7 140 udp
d 0.702000 0 0 7 140 udp
s 0.800000 1 0 8 140 udp
r 0.873000 5 0 8 140 udp
s 0.900000 1 0 9 140 udp
r 0.980000 5 0 9 140 udp
";

fn stats_from(trace: &str, secs: u64) -> Result<FlowStats, String> {
    let mut c = FlowStatsCollector::new();
    replay(trace.as_bytes(), &mut c).map_err(|e| e.to_string())?;
    let flows = c.finish(SimTime::from_secs(secs));
    Ok(FlowStats::pooled(flows.values(), secs as f64))
}

fn metric_formulas() -> Check {
    let s = stats_from(TEN_PACKETS, 1)?;
    let tp = throughput(&s).map_err(|e| e.to_string())?;
    ensure(close(tp.pct, 80.0) && close(tp.bps, 6400.0), || format!("throughput {tp:?}"))?;
    let eed = mean_eed(&s).map_err(|e| e.to_string())?;
    ensure(close(eed, 50.0), || format!("mean EED {eed}"))?;
    let j = jitter_series(&s);
    ensure(j.len() == 7 && close(j[0], 4.0) && close(j[1], -1.0), || format!("jitter {j:?}"))?;

    // 103 sent, 100 received, 3 dropped.
    let mut big = String::new();
    for i in 0..103u64 {
        big.push_str(&format!("s {}.000000 1 0 {i} 140 udp\n", i));
        let ev = if i % 34 == 33 { 'd' } else { 'r' };
        big.push_str(&format!("{ev} {}.050000 5 0 {i} 140 udp\n", i));
    }
    let s = stats_from(&big, 103)?;
    let p = plr(&s, PlrDenominator::Received).map_err(|e| e.to_string())?;
    ensure(s.sent_count == 103 && s.received_count == 100 && close(p, 3.0), || format!("plr {p}"))?;
    Ok(format!("80% / 6400 bps, {eed} ms, {p}%, jitter [{:+.3}, {:+.3}]", j[0], j[1]))
}

fn determinism() -> Check {
    let cfg = ScenarioConfig::load(&scenarios().join("paper-default.scenario")).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_to_dir(&cfg, &a, Outputs::ALL).map_err(|e| e.to_string())?;
    run_to_dir(&cfg, &b, Outputs::ALL).map_err(|e| e.to_string())?;
    for f in [TRACE_FILE, REPORT_FILE] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        ensure(x == y, || format!("{f} differs"))?;
    }
    Ok(format!("seed {}, trace {} bytes", cfg.seed, fs::metadata(a.join(TRACE_FILE)).unwrap().len()))
}

fn trend_suite() -> Check {
    let spec = SweepSpec::load(&scenarios().join("paper-default.sweep")).map_err(|e| e.to_string())?;
    let expect = Expectations::load(&scenarios().join("paper-trends.expect")).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let outcome = run_sweep(&spec, dir.path()).map_err(|e| e.to_string())?;
    ensure(outcome.failures.is_empty(), || format!("{} cells failed", outcome.failures.len()))?;
    let results = expect.check(&outcome.rows);
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("line {}: {} ({})", r.line, r.text, r.violations.join("; ")))
        .collect();
    ensure(failed.is_empty(), || failed.join("\n    "))?;
    Ok(format!("{} cells, {} assertions", outcome.rows.len(), results.len()))
}

fn conservation_and_queue_law() -> Check {
    let base = ScenarioConfig::load(&scenarios().join("paper-default.scenario")).map_err(|e| e.to_string())?;
    let mut runs = 0;
    // Every run is audited as it is traced; a violation is an error here.
    for m in GatewayKind::ALL {
        for t in Traffic::ALL {
            for size in [32, 512, 1256] {
                let mut c = base.clone();
                c.mechanism = m;
                c.traffic = t;
                c.packet_size = size;
                c.sim_time = SimTime::from_secs(50);
                let res = simulate(&c, None).map_err(|e| format!("{m} {t} {size}: {e}"))?;
                for (id, n) in &res.audit.flows {
                    let f = res.outcome.in_flight.get(id).copied().unwrap_or(0);
                    ensure(n.sent == n.received + n.dropped + f, || format!("{m} {t} {size} flow {id}: {n:?} + {f}"))?;
                }
                let occ = res.audit.max_occupancy.values().copied().max().unwrap_or(0);
                ensure(occ <= 50, || format!("{m} {t} {size}: occupancy {occ}"))?;
                runs += 1;
            }
        }
    }
    // Capacity is the gateway queue's service rate: serialization of the
    // translated or tunneled datagram plus the per-packet processing time.
    for m in GatewayKind::ALL {
        for load in [0.3, 0.6, 0.9, 1.0] {
            let mut c = ScenarioConfig::parse(&format!("mechanism = {m}\ntraffic = CBR\nsim_time_s = 50\n"))
                .map_err(|e| e.to_string())?;
            let (extra, latency) = match m {
                GatewayKind::Dwc => (IPV4_HEADER_LEN, c.gateway.dwc_latency),
                GatewayKind::BdSiit => (IPV4_HEADER_LEN, c.gateway.bdsiit_latency),
                GatewayKind::Dstm => (IPV4_HEADER_LEN + IPV6_HEADER_LEN, c.gateway.dstm_encap_latency),
            };
            let service = SimTime::serialization(c.packet_size + extra, c.topology.bottleneck_bw_bps) + latency;
            let flows = f64::from(c.topology.cbr_flows);
            c.cbr_rate_pps = Some(load / service.as_secs_f64() / flows);
            let res = simulate(&c, None).map_err(|e| e.to_string())?;
            ensure(res.audit.total_drops() == 0, || {
                format!("{m} CBR at {load} of capacity: {} drops", res.audit.total_drops())
            })?;
            runs += 1;
        }
    }
    Ok(format!("{runs} audited runs"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 7] = [
        ("1 decomposition oracle", 10, decomposition_oracle),
        ("2 LPM equivalence", 30, lpm_equivalence),
        ("3 translation round trip", 1, translation_round_trip),
        ("4 metric formulas", 1, metric_formulas),
        ("5 determinism", 60, determinism),
        ("6 trend suite", 300, trend_suite),
        ("7 conservation and queue law", 600, conservation_and_queue_law),
    ];
    let mut failed = 0;
    for (name, limit, f) in criteria {
        let start = Instant::now();
        let result = f();
        let took = start.elapsed();
        let limit = Duration::from_secs(limit);
        let (ok, detail) = match result {
            Ok(d) if took <= limit => (true, d),
            Ok(d) => (false, format!("{d}; too slow")),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        println!(
            "{} criterion {name}: {detail} [{:.2}s, limit {}s]",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

//! Stateless IPv6/IPv4 header translation.
//!
//! Each call depends only on its arguments. The hop count is decremented
//! once, as a router would; a packet arriving with zero hops left is
//! discarded.

use thiserror::Error;

use super::header::{Ipv4Header, Ipv6Header, IPV4_HEADER_LEN};
use crate::addr::{Ipv4Address, Ipv6Address};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TranslateError {
    #[error("hop limit exceeded")]
    HopLimitExceeded,
    #[error("IPv4 total length {0} is shorter than the header")]
    TruncatedIpv4(u32),
}

pub fn siit_v6_to_v4(
    h: &Ipv6Header,
    mapped_src: Ipv4Address,
    mapped_dst: Ipv4Address,
) -> Result<Ipv4Header, TranslateError> {
    if h.hop_limit == 0 {
        return Err(TranslateError::HopLimitExceeded);
    }
    Ok(Ipv4Header {
        src: mapped_src,
        dst: mapped_dst,
        ttl: h.hop_limit - 1,
        protocol: h.next_header,
        tos: h.traffic_class,
        total_length: h.payload_length + IPV4_HEADER_LEN,
        checksum_valid: true,
    })
}

pub fn siit_v4_to_v6(
    h: &Ipv4Header,
    mapped_src: Ipv6Address,
    mapped_dst: Ipv6Address,
) -> Result<Ipv6Header, TranslateError> {
    if h.ttl == 0 {
        return Err(TranslateError::HopLimitExceeded);
    }
    if h.total_length < IPV4_HEADER_LEN {
        return Err(TranslateError::TruncatedIpv4(h.total_length));
    }
    Ok(Ipv6Header {
        src: mapped_src,
        dst: mapped_dst,
        hop_limit: h.ttl - 1,
        next_header: h.protocol,
        traffic_class: h.tos,
        payload_length: h.total_length - IPV4_HEADER_LEN,
        checksum_valid: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::header::PROTO_UDP;

    fn v6_header(hop_limit: u8, payload_length: u32) -> Ipv6Header {
        Ipv6Header {
            src: "2001:db8:1::1".parse().unwrap(),
            dst: "2001:db8:2::1".parse().unwrap(),
            hop_limit,
            next_header: PROTO_UDP,
            traffic_class: 0x28,
            payload_length,
            checksum_valid: true,
        }
    }

    #[test]
    fn v6_to_v4_fields() {
        let out = siit_v6_to_v4(&v6_header(64, 100), Ipv4Address(1), Ipv4Address(2)).unwrap();
        assert_eq!(out.ttl, 63);
        assert_eq!(out.total_length, 120);
        assert_eq!(out.protocol, PROTO_UDP);
        assert_eq!(out.tos, 0x28);
        assert_eq!((out.src, out.dst), (Ipv4Address(1), Ipv4Address(2)));
    }

    #[test]
    fn zero_hop_limit_is_discarded() {
        assert_eq!(
            siit_v6_to_v4(&v6_header(0, 10), Ipv4Address(1), Ipv4Address(2)),
            Err(TranslateError::HopLimitExceeded)
        );
    }

    #[test]
    fn ttl_one_leaves_zero_hops() {
        let v4 = Ipv4Header {
            src: Ipv4Address(1),
            dst: Ipv4Address(2),
            ttl: 1,
            protocol: 6,
            tos: 0,
            total_length: 20,
            checksum_valid: true,
        };
        let out = siit_v4_to_v6(&v4, Ipv6Address(1), Ipv6Address(2)).unwrap();
        assert_eq!(out.hop_limit, 0);
        assert_eq!(out.payload_length, 0);
        let zero = Ipv4Header { ttl: 0, ..v4 };
        assert!(siit_v4_to_v6(&zero, Ipv6Address(1), Ipv6Address(2)).is_err());
        let short = Ipv4Header { total_length: 12, ..v4 };
        assert_eq!(
            siit_v4_to_v6(&short, Ipv6Address(1), Ipv6Address(2)),
            Err(TranslateError::TruncatedIpv4(12))
        );
    }

    #[test]
    fn round_trip_decrements_twice() {
        let h = v6_header(64, 512);
        let v4 = siit_v6_to_v4(&h, Ipv4Address(1), Ipv4Address(2)).unwrap();
        let back = siit_v4_to_v6(&v4, h.src, h.dst).unwrap();
        assert_eq!(back.next_header, h.next_header);
        assert_eq!(back.traffic_class, h.traffic_class);
        assert_eq!(back.payload_length, h.payload_length);
        assert_eq!(back.hop_limit, h.hop_limit - 2);
    }
}

//! Modeled IP headers and datagrams.
//!
//! Only the fields that translation touches are kept. Checksums are not
//! computed; each header carries a validity flag instead.

use crate::addr::{Ipv4Address, Ipv6Address};

pub const IPV4_HEADER_LEN: u32 = 20;
pub const IPV6_HEADER_LEN: u32 = 40;

/// Next-header value for IPv4 encapsulated in IPv6.
pub const PROTO_IPV4_IN_IPV6: u8 = 4;
pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ipv4Header {
    pub src: Ipv4Address,
    pub dst: Ipv4Address,
    pub ttl: u8,
    pub protocol: u8,
    pub tos: u8,
    /// Header plus payload, in bytes. Never below 20.
    pub total_length: u32,
    pub checksum_valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ipv6Header {
    pub src: Ipv6Address,
    pub dst: Ipv6Address,
    pub hop_limit: u8,
    pub next_header: u8,
    pub traffic_class: u8,
    pub payload_length: u32,
    pub checksum_valid: bool,
}

impl Ipv6Header {
    pub fn new(src: Ipv6Address, dst: Ipv6Address, next_header: u8, payload_length: u32) -> Self {
        Self {
            src,
            dst,
            hop_limit: 64,
            next_header,
            traffic_class: 0,
            payload_length,
            checksum_valid: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IpHeader {
    V4(Ipv4Header),
    V6(Ipv6Header),
}

impl IpHeader {
    pub fn header_len(&self) -> u32 {
        match self {
            IpHeader::V4(_) => IPV4_HEADER_LEN,
            IpHeader::V6(_) => IPV6_HEADER_LEN,
        }
    }
}

/// A header stack (outermost first) over an opaque payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Datagram {
    pub headers: Vec<IpHeader>,
    pub payload_len: u32,
}

impl Datagram {
    pub fn ipv6(header: Ipv6Header, payload_len: u32) -> Self {
        Self {
            headers: vec![IpHeader::V6(header)],
            payload_len,
        }
    }

    pub fn ipv4(header: Ipv4Header, payload_len: u32) -> Self {
        Self {
            headers: vec![IpHeader::V4(header)],
            payload_len,
        }
    }

    pub fn outer(&self) -> Option<&IpHeader> {
        self.headers.first()
    }

    pub fn wire_size(&self) -> u32 {
        self.payload_len + self.headers.iter().map(IpHeader::header_len).sum::<u32>()
    }

    /// IPv6 outer header carrying an IPv4 datagram.
    pub fn is_tunneled(&self) -> bool {
        matches!(
            self.headers.as_slice(),
            [IpHeader::V6(outer), IpHeader::V4(_), ..] if outer.next_header == PROTO_IPV4_IN_IPV6
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_size_sums_headers() {
        let h = Ipv6Header::new(Ipv6Address(1), Ipv6Address(2), PROTO_UDP, 100);
        let d = Datagram::ipv6(h, 100);
        assert_eq!(d.wire_size(), 140);
        assert!(!d.is_tunneled());
    }
}

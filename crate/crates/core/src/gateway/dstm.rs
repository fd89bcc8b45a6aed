//! Temporary IPv4 address pool and IPv4-in-IPv6 tunneling.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::header::{Datagram, IpHeader, Ipv6Header, PROTO_IPV4_IN_IPV6};
use crate::addr::{Ipv4Address, Ipv6Address};
use crate::time::SimTime;

/// A dual-stack host is identified by its IPv6 address.
pub type HostId = Ipv6Address;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lease {
    pub address: Ipv4Address,
    pub expiry: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Allocation {
    pub address: Ipv4Address,
    /// False when an unexpired lease was renewed.
    pub fresh: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PoolError {
    #[error("address pool exhausted")]
    Exhausted,
}

#[derive(Debug, Clone)]
pub struct AddressPool {
    configured: BTreeSet<Ipv4Address>,
    free: BTreeSet<Ipv4Address>,
    leases: BTreeMap<HostId, Lease>,
    lease_duration: SimTime,
}

impl AddressPool {
    pub fn new(addresses: impl IntoIterator<Item = Ipv4Address>, lease_duration: SimTime) -> Self {
        let configured: BTreeSet<_> = addresses.into_iter().collect();
        Self {
            free: configured.clone(),
            configured,
            leases: BTreeMap::new(),
            lease_duration,
        }
    }

    pub fn capacity(&self) -> usize {
        self.configured.len()
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    pub fn lease_of(&self, host: &HostId) -> Option<&Lease> {
        self.leases.get(host)
    }

    pub fn host_of(&self, address: Ipv4Address) -> Option<HostId> {
        self.leases
            .iter()
            .find(|(_, l)| l.address == address)
            .map(|(h, _)| *h)
    }

    /// Renews an unexpired lease for `host`, or takes the lowest free address.
    pub fn allocate(&mut self, host: HostId, now: SimTime) -> Result<Allocation, PoolError> {
        let expiry = now + self.lease_duration;
        if let Some(lease) = self.leases.get_mut(&host) {
            if lease.expiry > now {
                lease.expiry = expiry;
                return Ok(Allocation {
                    address: lease.address,
                    fresh: false,
                });
            }
            let stale = lease.address;
            self.leases.remove(&host);
            self.free.insert(stale);
        }
        let address = self.free.pop_first().ok_or(PoolError::Exhausted)?;
        self.leases.insert(host, Lease { address, expiry });
        Ok(Allocation {
            address,
            fresh: true,
        })
    }

    /// Returns `None` when the host holds no lease.
    pub fn release(&mut self, host: &HostId) -> Option<Ipv4Address> {
        let lease = self.leases.remove(host)?;
        self.free.insert(lease.address);
        Some(lease.address)
    }

    /// Reclaims every lease with `expiry <= now`.
    pub fn expire_leases(&mut self, now: SimTime) -> Vec<(HostId, Ipv4Address)> {
        let expired: Vec<HostId> = self
            .leases
            .iter()
            .filter(|(_, l)| l.expiry <= now)
            .map(|(h, _)| *h)
            .collect();
        expired
            .into_iter()
            .map(|h| {
                let addr = self.release(&h).expect("lease listed above");
                (h, addr)
            })
            .collect()
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        let leased: BTreeSet<Ipv4Address> = self.leases.values().map(|l| l.address).collect();
        if leased.len() != self.leases.len() {
            return Err("two hosts share one address".into());
        }
        if !leased.is_disjoint(&self.free) {
            return Err("an address is both free and leased".into());
        }
        let union: BTreeSet<_> = leased.union(&self.free).copied().collect();
        if union != self.configured {
            return Err("free and leased do not partition the pool".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TunnelError {
    #[error("nested encapsulation is not allowed")]
    AlreadyTunneled,
    #[error("only IPv4 datagrams can be tunneled")]
    NotIpv4,
    #[error("datagram is not an IPv4-in-IPv6 tunnel packet")]
    NotTunneled,
}

/// Wraps an IPv4 datagram in an outer IPv6 header; the wire size grows by 40.
pub fn dstm_encapsulate(
    inner: &Datagram,
    tunnel_src: Ipv6Address,
    tunnel_dst: Ipv6Address,
) -> Result<Datagram, TunnelError> {
    let v4 = match inner.headers.as_slice() {
        [IpHeader::V4(h)] => h,
        [IpHeader::V6(_), ..] if inner.is_tunneled() => return Err(TunnelError::AlreadyTunneled),
        _ => return Err(TunnelError::NotIpv4),
    };
    let mut outer = Ipv6Header::new(tunnel_src, tunnel_dst, PROTO_IPV4_IN_IPV6, v4.total_length);
    outer.traffic_class = v4.tos;
    Ok(Datagram {
        headers: vec![IpHeader::V6(outer), IpHeader::V4(*v4)],
        payload_len: inner.payload_len,
    })
}

pub fn dstm_decapsulate(outer: &Datagram) -> Result<Datagram, TunnelError> {
    if !outer.is_tunneled() {
        return Err(TunnelError::NotTunneled);
    }
    Ok(Datagram {
        headers: outer.headers[1..].to_vec(),
        payload_len: outer.payload_len,
    })
}

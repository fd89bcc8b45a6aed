//! Exact-width IPv4/IPv6 address values, textual notation and IPv6 prefixes.
//!
//! Text parsing is hand-rolled so that malformed input reports the byte
//! offset where it went wrong. Formatting follows the RFC 5952 rules:
//! lowercase hex, no leading zeros, and the longest run of two or more zero
//! groups (leftmost on ties) compressed to `::`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// What was wrong with a piece of address text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddrErrorKind {
    Empty,
    UnexpectedChar,
    GroupTooLong,
    EmptyGroup,
    OctetOutOfRange,
    LeadingZero,
    WrongGroupCount,
    RepeatedCompression,
    BadPrefixLength,
    MissingPrefixLength,
}

impl fmt::Display for AddrErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AddrErrorKind::Empty => "empty input",
            AddrErrorKind::UnexpectedChar => "unexpected character",
            AddrErrorKind::GroupTooLong => "group has more than four hex digits",
            AddrErrorKind::EmptyGroup => "empty group",
            AddrErrorKind::OctetOutOfRange => "octet out of range",
            AddrErrorKind::LeadingZero => "octet has a leading zero",
            AddrErrorKind::WrongGroupCount => "wrong number of groups",
            AddrErrorKind::RepeatedCompression => "`::` may appear only once",
            AddrErrorKind::BadPrefixLength => "invalid prefix length",
            AddrErrorKind::MissingPrefixLength => "missing `/len`",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{kind} at byte {position}")]
pub struct AddrParseError {
    pub kind: AddrErrorKind,
    pub position: usize,
}

impl AddrParseError {
    fn new(kind: AddrErrorKind, position: usize) -> Self {
        Self { kind, position }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PrefixError {
    #[error("prefix length {0} exceeds 128")]
    LengthOutOfRange(u32),
    #[error("prefix {address}/{length} has host bits set (canonical form is {canonical}/{length})")]
    NonCanonical {
        address: Ipv6Address,
        length: u8,
        canonical: Ipv6Address,
    },
    #[error(transparent)]
    Parse(#[from] AddrParseError),
}

/// An IPv4 address held as a host-order `u32` whose most significant byte is
/// the first dotted-quad octet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Ipv4Address(pub u32);

impl Ipv4Address {
    pub const fn new(a: u8, b: u8, c: u8, d: u8) -> Self {
        Self(u32::from_be_bytes([a, b, c, d]))
    }

    pub const fn value(self) -> u32 {
        self.0
    }

    pub const fn octets(self) -> [u8; 4] {
        self.0.to_be_bytes()
    }
}

impl From<u32> for Ipv4Address {
    fn from(v: u32) -> Self {
        Self(v)
    }
}

impl From<std::net::Ipv4Addr> for Ipv4Address {
    fn from(a: std::net::Ipv4Addr) -> Self {
        Self(u32::from(a))
    }
}

impl fmt::Display for Ipv4Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.octets();
        write!(f, "{a}.{b}.{c}.{d}")
    }
}

impl FromStr for Ipv4Address {
    type Err = AddrParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_ipv4_at(s, 0)
    }
}

fn parse_ipv4_at(s: &str, base: usize) -> Result<Ipv4Address, AddrParseError> {
    if s.is_empty() {
        return Err(AddrParseError::new(AddrErrorKind::Empty, base));
    }
    let bytes = s.as_bytes();
    let mut octets = [0u8; 4];
    let mut idx = 0usize;
    for (n, octet) in octets.iter_mut().enumerate() {
        if n > 0 {
            match bytes.get(idx) {
                Some(b'.') => idx += 1,
                Some(_) => return Err(AddrParseError::new(AddrErrorKind::UnexpectedChar, base + idx)),
                None => return Err(AddrParseError::new(AddrErrorKind::WrongGroupCount, base + idx)),
            }
        }
        let start = idx;
        let mut value: u32 = 0;
        while let Some(&c) = bytes.get(idx) {
            if !c.is_ascii_digit() {
                break;
            }
            if idx - start == 3 {
                return Err(AddrParseError::new(AddrErrorKind::OctetOutOfRange, base + start));
            }
            value = value * 10 + u32::from(c - b'0');
            idx += 1;
        }
        if idx == start {
            let kind = if idx == bytes.len() || bytes[idx] == b'.' {
                AddrErrorKind::EmptyGroup
            } else {
                AddrErrorKind::UnexpectedChar
            };
            return Err(AddrParseError::new(kind, base + idx));
        }
        if idx - start > 1 && bytes[start] == b'0' {
            return Err(AddrParseError::new(AddrErrorKind::LeadingZero, base + start));
        }
        if value > 255 {
            return Err(AddrParseError::new(AddrErrorKind::OctetOutOfRange, base + start));
        }
        *octet = value as u8;
    }
    if idx != bytes.len() {
        let kind = if bytes[idx] == b'.' {
            AddrErrorKind::WrongGroupCount
        } else {
            AddrErrorKind::UnexpectedChar
        };
        return Err(AddrParseError::new(kind, base + idx));
    }
    Ok(Ipv4Address(u32::from_be_bytes(octets)))
}

/// A 128-bit IPv6 address. Chunk 0 is the most significant 16 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Ipv6Address(pub u128);

impl Ipv6Address {
    pub const UNSPECIFIED: Self = Self(0);

    pub const fn value(self) -> u128 {
        self.0
    }

    /// The eight 16-bit chunks, left to right.
    pub fn chunks(self) -> [u16; 8] {
        chunks_of(self)
    }

    pub fn from_chunks(chunks: [u16; 8]) -> Self {
        reassemble(chunks)
    }
}

impl From<u128> for Ipv6Address {
    fn from(v: u128) -> Self {
        Self(v)
    }
}

impl From<[u16; 8]> for Ipv6Address {
    fn from(c: [u16; 8]) -> Self {
        reassemble(c)
    }
}

impl From<std::net::Ipv6Addr> for Ipv6Address {
    fn from(a: std::net::Ipv6Addr) -> Self {
        Self(u128::from(a))
    }
}

/// Splits an address into eight 16-bit chunks; element `z` holds bits
/// `[127 - 16z ..= 112 - 16z]`.
pub fn chunks_of(addr: Ipv6Address) -> [u16; 8] {
    let mut out = [0u16; 8];
    for (z, chunk) in out.iter_mut().enumerate() {
        *chunk = (addr.0 >> (112 - 16 * z)) as u16;
    }
    out
}

pub fn reassemble(chunks: [u16; 8]) -> Ipv6Address {
    Ipv6Address(chunks.iter().fold(0u128, |acc, &c| (acc << 16) | u128::from(c)))
}

impl fmt::Display for Ipv6Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let groups = self.chunks();

        // Longest run of zero groups (length >= 2), leftmost on ties.
        let (mut best_start, mut best_len) = (0usize, 0usize);
        let mut z = 0;
        while z < 8 {
            if groups[z] == 0 {
                let start = z;
                while z < 8 && groups[z] == 0 {
                    z += 1;
                }
                if z - start > best_len {
                    best_start = start;
                    best_len = z - start;
                }
            } else {
                z += 1;
            }
        }

        if best_len < 2 {
            for (i, g) in groups.iter().enumerate() {
                if i > 0 {
                    f.write_str(":")?;
                }
                write!(f, "{g:x}")?;
            }
            return Ok(());
        }

        for (i, g) in groups[..best_start].iter().enumerate() {
            if i > 0 {
                f.write_str(":")?;
            }
            write!(f, "{g:x}")?;
        }
        f.write_str("::")?;
        for (i, g) in groups[best_start + best_len..].iter().enumerate() {
            if i > 0 {
                f.write_str(":")?;
            }
            write!(f, "{g:x}")?;
        }
        Ok(())
    }
}

impl FromStr for Ipv6Address {
    type Err = AddrParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_ipv6_at(s, 0)
    }
}

/// Parses colon-separated hex groups; returns the groups and the offset just
/// past the last consumed byte.
fn parse_groups(s: &str, base: usize, out: &mut Vec<u16>) -> Result<(), AddrParseError> {
    if s.is_empty() {
        return Ok(());
    }
    for (offset, group) in split_with_offsets(s, ':') {
        let at = base + offset;
        if group.is_empty() {
            return Err(AddrParseError::new(AddrErrorKind::EmptyGroup, at));
        }
        if let Some(bad) = group.bytes().position(|c| !c.is_ascii_hexdigit()) {
            return Err(AddrParseError::new(AddrErrorKind::UnexpectedChar, at + bad));
        }
        if group.len() > 4 {
            return Err(AddrParseError::new(AddrErrorKind::GroupTooLong, at + 4));
        }
        if out.len() == 8 {
            return Err(AddrParseError::new(AddrErrorKind::WrongGroupCount, at));
        }
        // Validated above: 1..=4 hex digits always fit.
        out.push(u16::from_str_radix(group, 16).expect("validated hex group"));
    }
    Ok(())
}

fn split_with_offsets(s: &str, sep: char) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0usize;
    s.split(sep).map(move |part| {
        let here = offset;
        offset += part.len() + sep.len_utf8();
        (here, part)
    })
}

fn parse_ipv6_at(s: &str, base: usize) -> Result<Ipv6Address, AddrParseError> {
    if s.is_empty() {
        return Err(AddrParseError::new(AddrErrorKind::Empty, base));
    }
    if let Some(bad) = s.bytes().position(|c| !(c.is_ascii_hexdigit() || c == b':')) {
        return Err(AddrParseError::new(AddrErrorKind::UnexpectedChar, base + bad));
    }

    let mut head = Vec::with_capacity(8);
    match s.find("::") {
        None => {
            parse_groups(s, base, &mut head)?;
            if head.len() != 8 {
                return Err(AddrParseError::new(AddrErrorKind::WrongGroupCount, base + s.len()));
            }
            let mut chunks = [0u16; 8];
            chunks.copy_from_slice(&head);
            Ok(reassemble(chunks))
        }
        Some(gap) => {
            let tail_str = &s[gap + 2..];
            if let Some(again) = tail_str.find("::") {
                return Err(AddrParseError::new(
                    AddrErrorKind::RepeatedCompression,
                    base + gap + 2 + again,
                ));
            }
            if tail_str.starts_with(':') {
                return Err(AddrParseError::new(AddrErrorKind::EmptyGroup, base + gap + 2));
            }
            parse_groups(&s[..gap], base, &mut head)?;
            let mut tail = Vec::with_capacity(8);
            parse_groups(tail_str, base + gap + 2, &mut tail)?;
            if head.len() + tail.len() > 7 {
                return Err(AddrParseError::new(AddrErrorKind::WrongGroupCount, base + gap));
            }
            let mut chunks = [0u16; 8];
            chunks[..head.len()].copy_from_slice(&head);
            chunks[8 - tail.len()..].copy_from_slice(&tail);
            Ok(reassemble(chunks))
        }
    }
}

/// Network mask with the top `length` bits set.
pub fn mask(length: u8) -> u128 {
    match length {
        0 => 0,
        l if l >= 128 => u128::MAX,
        l => u128::MAX << (128 - u32::from(l)),
    }
}

/// An IPv6 prefix in canonical form: every bit below the prefix length is
/// zero. Use [`Ipv6Prefix::canonicalize`] to mask arbitrary input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ipv6Prefix {
    address: Ipv6Address,
    length: u8,
}

impl Ipv6Prefix {
    pub fn new(address: Ipv6Address, length: u8) -> Result<Self, PrefixError> {
        if length > 128 {
            return Err(PrefixError::LengthOutOfRange(u32::from(length)));
        }
        let canonical = Ipv6Address(address.0 & mask(length));
        if canonical != address {
            return Err(PrefixError::NonCanonical {
                address,
                length,
                canonical,
            });
        }
        Ok(Self { address, length })
    }

    /// Clears the host bits instead of rejecting them.
    pub fn canonicalize(address: Ipv6Address, length: u8) -> Result<Self, PrefixError> {
        if length > 128 {
            return Err(PrefixError::LengthOutOfRange(u32::from(length)));
        }
        Ok(Self {
            address: Ipv6Address(address.0 & mask(length)),
            length,
        })
    }

    pub fn address(&self) -> Ipv6Address {
        self.address
    }

    pub fn length(&self) -> u8 {
        self.length
    }

    /// Top-`length`-bits comparison.
    pub fn contains(&self, addr: Ipv6Address) -> bool {
        addr.0 & mask(self.length) == self.address.0
    }
}

impl fmt::Display for Ipv6Prefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.address, self.length)
    }
}

impl FromStr for Ipv6Prefix {
    type Err = PrefixError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let slash = s
            .find('/')
            .ok_or(AddrParseError::new(AddrErrorKind::MissingPrefixLength, s.len()))?;
        let address = parse_ipv6_at(&s[..slash], 0)?;
        let len_str = &s[slash + 1..];
        let bad_len = AddrParseError::new(AddrErrorKind::BadPrefixLength, slash + 1);
        if len_str.is_empty() || !len_str.bytes().all(|c| c.is_ascii_digit()) || len_str.len() > 3 {
            return Err(bad_len.into());
        }
        let length: u32 = len_str.parse().map_err(|_| bad_len)?;
        if length > 128 {
            return Err(PrefixError::LengthOutOfRange(length));
        }
        Ipv6Prefix::new(address, length as u8)
    }
}

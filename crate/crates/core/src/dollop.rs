//! Dollop decomposition: an IPv6 prefix split into eight 16-bit range chunks.
//!
//! Chunk `z` of a prefix of length `L` is classified by how many of its 16
//! bits the prefix fixes. With `div = L / 16` and `md = L % 16`:
//!
//! * chunks `0..div` are fully fixed (`ml = 16`, a single-value range),
//! * chunk `div` keeps its top `md` bits and wildcards the low `16 - md`
//!   (only when `md > 0`),
//! * every later chunk is the full wildcard `[0, 0xFFFF]` with `ml = 0`.
//!
//! Ranges are inclusive on both ends so the wildcard fits in 16 bits.

use std::fmt;

use thiserror::Error;

use crate::addr::{chunks_of, Ipv6Address, Ipv6Prefix, PrefixError};

pub const DOLLOPS: usize = 8;
pub const DOLLOP_BITS: u8 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DollopError {
    #[error("match length {0} exceeds 16")]
    MatchLength(u8),
    #[error("range start {strt:#06x} is not aligned to a /{ml} chunk boundary")]
    Unaligned { strt: u16, ml: u8 },
    #[error("dollop vector is not a valid prefix decomposition: {0}")]
    Vector(&'static str),
}

/// One 16-bit range chunk `{strt, stp, ml}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dollop {
    strt: u16,
    stp: u16,
    ml: u8,
}

impl Dollop {
    pub const WILDCARD: Dollop = Dollop {
        strt: 0,
        stp: 0xFFFF,
        ml: 0,
    };

    pub const fn exact(value: u16) -> Self {
        Dollop {
            strt: value,
            stp: value,
            ml: DOLLOP_BITS,
        }
    }

    /// Builds the dollop that keeps the top `ml` bits of `chunk`.
    pub fn covering(chunk: u16, ml: u8) -> Result<Self, DollopError> {
        if ml > DOLLOP_BITS {
            return Err(DollopError::MatchLength(ml));
        }
        let strt = chunk & chunk_mask(ml);
        Ok(Dollop {
            strt,
            stp: strt | !chunk_mask(ml),
            ml,
        })
    }

    /// Validating constructor; `strt` must already be aligned.
    pub fn new(strt: u16, ml: u8) -> Result<Self, DollopError> {
        if ml > DOLLOP_BITS {
            return Err(DollopError::MatchLength(ml));
        }
        if strt & !chunk_mask(ml) != 0 {
            return Err(DollopError::Unaligned { strt, ml });
        }
        Self::covering(strt, ml)
    }

    pub fn strt(&self) -> u16 {
        self.strt
    }

    pub fn stp(&self) -> u16 {
        self.stp
    }

    pub fn ml(&self) -> u8 {
        self.ml
    }

    pub fn is_wildcard(&self) -> bool {
        self.ml == 0
    }

    /// Number of chunk values covered: `2^(16 - ml)`.
    pub fn span(&self) -> u32 {
        u32::from(self.stp) - u32::from(self.strt) + 1
    }
}

impl fmt::Display for Dollop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:#06x}..={:#06x}]/{}", self.strt, self.stp, self.ml)
    }
}

/// Mask with the top `ml` of 16 bits set.
pub fn chunk_mask(ml: u8) -> u16 {
    match ml {
        0 => 0,
        m if m >= 16 => 0xFFFF,
        m => 0xFFFFu16 << (16 - m),
    }
}

pub fn dollop_contains(d: &Dollop, chunk: u16) -> bool {
    d.strt <= chunk && chunk <= d.stp
}

/// The eight dollops of a prefix, index 0 leftmost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DollopVector {
    dollops: [Dollop; DOLLOPS],
}

impl DollopVector {
    pub fn dollops(&self) -> &[Dollop; DOLLOPS] {
        &self.dollops
    }

    pub fn get(&self, z: usize) -> &Dollop {
        &self.dollops[z]
    }

    /// Sum of per-chunk match lengths; equals the source prefix length.
    pub fn total_length(&self) -> u32 {
        self.dollops.iter().map(|d| u32::from(d.ml)).sum()
    }

    /// Number of leading dollops that are not wildcards.
    pub fn depth(&self) -> usize {
        self.dollops.iter().take_while(|d| d.ml > 0).count()
    }

    /// Builds a vector from raw dollops, checking the shape constraints:
    /// a run of exact dollops, at most one partial dollop, then wildcards.
    pub fn from_dollops(dollops: [Dollop; DOLLOPS]) -> Result<Self, DollopError> {
        let v = DollopVector { dollops };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), DollopError> {
        let mut seen_short = false;
        for d in &self.dollops {
            if d.strt > d.stp {
                return Err(DollopError::Vector("strt > stp"));
            }
            if d.ml > DOLLOP_BITS {
                return Err(DollopError::MatchLength(d.ml));
            }
            if d.span() != 1u32 << (16 - d.ml) {
                return Err(DollopError::Vector("range width does not match ml"));
            }
            if d.strt & !chunk_mask(d.ml) != 0 {
                return Err(DollopError::Vector("range start not aligned"));
            }
            if seen_short && d.ml != 0 {
                return Err(DollopError::Vector("fixed bits after a partial or wildcard chunk"));
            }
            if d.ml < DOLLOP_BITS {
                seen_short = true;
            }
        }
        Ok(())
    }

    /// True iff every chunk of `addr` falls inside its dollop.
    pub fn matches(&self, chunks: &[u16; DOLLOPS]) -> bool {
        self.dollops
            .iter()
            .zip(chunks.iter())
            .all(|(d, &c)| dollop_contains(d, c))
    }
}

impl fmt::Display for DollopVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.dollops.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Splits a canonical prefix into its dollop vector.
///
/// [`Ipv6Prefix`] values are canonical by construction, so this cannot fail;
/// raw `(address, length)` pairs go through [`Ipv6Prefix::new`] first, which
/// is where non-canonical input is rejected.
pub fn decompose_prefix(prefix: &Ipv6Prefix) -> DollopVector {
    let chunks = chunks_of(prefix.address());
    let length = prefix.length() as usize;
    let div = length / 16;
    let md = (length % 16) as u8;

    let mut dollops = [Dollop::WILDCARD; DOLLOPS];
    for z in 0..div {
        dollops[z] = Dollop::exact(chunks[z]);
    }
    if md > 0 {
        // Keep the top md bits; low 16 - md bits become the range.
        let strt = chunks[div] & chunk_mask(md);
        dollops[div] = Dollop {
            strt,
            stp: strt + ((1u32 << (16 - md)) - 1) as u16,
            ml: md,
        };
    }
    DollopVector { dollops }
}

/// Decomposes a raw `(address, length)` pair, rejecting host bits.
pub fn decompose(address: Ipv6Address, length: u8) -> Result<DollopVector, PrefixError> {
    Ipv6Prefix::new(address, length).map(|p| decompose_prefix(&p))
}

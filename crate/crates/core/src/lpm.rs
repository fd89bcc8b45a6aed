//! Succession tree: an eight-level classification tree over dollop ranges
//! holding IPv6-prefix to IPv4-address mappings, with longest-prefix-match
//! lookup.
//!
//! Level `z` of the tree consumes only chunk `z` of an address. The children
//! of a node are grouped by match-length class. Exact children (`ml = 16`)
//! are keyed by chunk value; partial children (`ml` in `1..=15`) are kept in
//! one ordered map per class, scanned longest class first. A partial dollop
//! is always the last fixed dollop of a prefix, so partial children only ever
//! carry a terminal. The wildcard tail of a decomposition is implicit: an
//! entry terminates at the node reached by its last non-wildcard dollop.
//!
//! Lookup descends the exact child first, then falls back through the
//! partial classes and finally the node's own terminal. Everything found
//! below an exact child is longer than anything at or above this level, so
//! the first hit on that order is the longest match.

use std::cmp::Reverse;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::addr::{Ipv4Address, Ipv6Address, Ipv6Prefix, PrefixError};
use crate::dollop::{chunk_mask, decompose_prefix, Dollop, DollopVector, DOLLOPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntryId(pub u64);

impl fmt::Display for EntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MappingEntry {
    pub prefix: Ipv6Prefix,
    pub target: Ipv4Address,
    pub id: EntryId,
}

impl MappingEntry {
    pub fn new(prefix: Ipv6Prefix, target: Ipv4Address, id: EntryId) -> Self {
        Self { prefix, target, id }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LookupResult {
    pub entry: MappingEntry,
    pub matched_length: u8,
}

impl LookupResult {
    fn of(entry: &MappingEntry) -> Self {
        Self {
            entry: *entry,
            matched_length: entry.prefix.length(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LpmError {
    #[error("entry id {id} is already used by {existing}")]
    DuplicateId { id: EntryId, existing: Ipv6Prefix },
}

/// Outcome of an insert.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inserted {
    New,
    /// An entry for the same prefix existed and was replaced.
    Replaced(MappingEntry),
}

/// Outcome of a remove.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Removed {
    Removed(MappingEntry),
    NotFound,
}

#[derive(Debug, Default, Clone)]
struct Node {
    terminal: Option<MappingEntry>,
    exact: BTreeMap<u16, Node>,
    partial: BTreeMap<Reverse<u8>, BTreeMap<u16, Node>>,
}

impl Node {
    fn is_empty(&self) -> bool {
        self.terminal.is_none() && self.exact.is_empty() && self.partial.is_empty()
    }

    fn child_mut(&mut self, d: &Dollop) -> &mut Node {
        if d.ml() == 16 {
            self.exact.entry(d.strt()).or_default()
        } else {
            self.partial
                .entry(Reverse(d.ml()))
                .or_default()
                .entry(d.strt())
                .or_default()
        }
    }

    fn find(&self, chunks: &[u16; DOLLOPS], z: usize) -> Option<&MappingEntry> {
        if z < DOLLOPS {
            let c = chunks[z];
            if let Some(hit) = self.exact.get(&c).and_then(|child| child.find(chunks, z + 1)) {
                return Some(hit);
            }
            for (Reverse(ml), class) in &self.partial {
                // Ranges within one class are aligned and disjoint: the only
                // candidate is the greatest start not above the chunk.
                if let Some((&strt, child)) = class.range(..=c).next_back() {
                    if c & chunk_mask(*ml) == strt {
                        if let Some(hit) = child.find(chunks, z + 1) {
                            return Some(hit);
                        }
                    }
                }
            }
        }
        self.terminal.as_ref()
    }

    fn remove(&mut self, v: &DollopVector, z: usize, depth: usize) -> Option<MappingEntry> {
        if z == depth {
            return self.terminal.take();
        }
        let d = v.get(z);
        if d.ml() == 16 {
            let child = self.exact.get_mut(&d.strt())?;
            let out = child.remove(v, z + 1, depth);
            if child.is_empty() {
                self.exact.remove(&d.strt());
            }
            out
        } else {
            let class = self.partial.get_mut(&Reverse(d.ml()))?;
            let child = class.get_mut(&d.strt())?;
            let out = child.remove(v, z + 1, depth);
            if child.is_empty() {
                class.remove(&d.strt());
                if class.is_empty() {
                    self.partial.remove(&Reverse(d.ml()));
                }
            }
            out
        }
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a MappingEntry>) {
        if let Some(e) = &self.terminal {
            out.push(e);
        }
        for child in self.exact.values() {
            child.collect(out);
        }
        for class in self.partial.values() {
            for child in class.values() {
                child.collect(out);
            }
        }
    }

    fn height(&self) -> usize {
        let below = self
            .exact
            .values()
            .chain(self.partial.values().flat_map(|c| c.values()))
            .map(|c| c.height() + 1)
            .max();
        below.unwrap_or(0)
    }

    /// Checks that every terminal sits at the path its prefix decomposes to.
    fn check_paths(&self, path: &mut Vec<Dollop>) -> Result<(), String> {
        if let Some(e) = &self.terminal {
            let v = decompose_prefix(&e.prefix);
            let expect: Vec<Dollop> = v.dollops()[..v.depth()].to_vec();
            if *path != expect {
                return Err(format!("entry {} for {} stored at wrong path", e.id, e.prefix));
            }
        }
        for (&value, child) in &self.exact {
            path.push(Dollop::exact(value));
            child.check_paths(path)?;
            path.pop();
        }
        for (Reverse(ml), class) in &self.partial {
            let mut prev_stp: Option<u16> = None;
            for (&strt, child) in class {
                let d = Dollop::new(strt, *ml).map_err(|e| e.to_string())?;
                if let Some(p) = prev_stp {
                    if p >= d.strt() {
                        return Err(format!("overlapping siblings in class /{ml}"));
                    }
                }
                prev_stp = Some(d.stp());
                if !child.exact.is_empty() || !child.partial.is_empty() {
                    return Err("partial dollop has children".into());
                }
                path.push(d);
                child.check_paths(path)?;
                path.pop();
            }
        }
        Ok(())
    }
}

/// Prefix-to-IPv4 mapping tree keyed by dollop decomposition.
///
/// Single writer, many readers: `lookup` takes `&self`, mutation `&mut self`.
#[derive(Debug, Default, Clone)]
pub struct SuccessionTree {
    root: Node,
    len: usize,
    ids: HashMap<EntryId, Ipv6Prefix>,
}

impl SuccessionTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Installs `entry`. A second entry for the same prefix replaces the first.
    pub fn insert(&mut self, entry: MappingEntry) -> Result<Inserted, LpmError> {
        if let Some(existing) = self.ids.get(&entry.id) {
            if *existing != entry.prefix {
                return Err(LpmError::DuplicateId {
                    id: entry.id,
                    existing: *existing,
                });
            }
        }
        let v = decompose_prefix(&entry.prefix);
        let mut node = &mut self.root;
        for d in &v.dollops()[..v.depth()] {
            node = node.child_mut(d);
        }
        let previous = node.terminal.replace(entry);
        match previous {
            Some(old) => {
                if old.id != entry.id {
                    self.ids.remove(&old.id);
                    self.ids.insert(entry.id, entry.prefix);
                }
                Ok(Inserted::Replaced(old))
            }
            None => {
                self.ids.insert(entry.id, entry.prefix);
                self.len += 1;
                Ok(Inserted::New)
            }
        }
    }

    pub fn lookup(&self, addr: Ipv6Address) -> Option<LookupResult> {
        let chunks = addr.chunks();
        self.root.find(&chunks, 0).map(LookupResult::of)
    }

    pub fn remove(&mut self, prefix: &Ipv6Prefix) -> Removed {
        let v = decompose_prefix(prefix);
        match self.root.remove(&v, 0, v.depth()) {
            Some(e) => {
                self.ids.remove(&e.id);
                self.len -= 1;
                Removed::Removed(e)
            }
            None => Removed::NotFound,
        }
    }

    /// Exact-prefix retrieval (no longest-match fallback).
    pub fn get(&self, prefix: &Ipv6Prefix) -> Option<&MappingEntry> {
        let v = decompose_prefix(prefix);
        let mut node = &self.root;
        for d in &v.dollops()[..v.depth()] {
            node = if d.ml() == 16 {
                node.exact.get(&d.strt())?
            } else {
                node.partial.get(&Reverse(d.ml()))?.get(&d.strt())?
            };
        }
        node.terminal.as_ref()
    }

    /// All installed entries in tree order.
    pub fn entries(&self) -> Vec<MappingEntry> {
        let mut out = Vec::with_capacity(self.len);
        self.root.collect(&mut out);
        out.into_iter().copied().collect()
    }

    /// Levels below the root; never more than eight.
    pub fn height(&self) -> usize {
        self.root.height()
    }

    /// Verifies the structural invariants. Intended for tests.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.root.check_paths(&mut Vec::new())?;
        let n = self.entries().len();
        if n != self.len || n != self.ids.len() {
            return Err(format!("count mismatch: {} walked, {} recorded", n, self.len));
        }
        if self.height() > DOLLOPS {
            return Err("tree deeper than eight levels".into());
        }
        Ok(())
    }
}

impl FromIterator<MappingEntry> for SuccessionTree {
    fn from_iter<I: IntoIterator<Item = MappingEntry>>(iter: I) -> Self {
        let mut t = SuccessionTree::new();
        for e in iter {
            // Replace-on-duplicate; ids from a single source are unique.
            let _ = t.insert(e);
        }
        t
    }
}

/// Reference lookup: linear scan comparing the top bits directly.
pub fn oracle_lookup<'a, I>(entries: I, addr: Ipv6Address) -> Option<LookupResult>
where
    I: IntoIterator<Item = &'a MappingEntry>,
{
    let mut best: Option<&MappingEntry> = None;
    for e in entries {
        let len = u32::from(e.prefix.length());
        let matches = len == 0 || (addr.0 ^ e.prefix.address().0) >> (128 - len) == 0;
        if matches && best.is_none_or(|b| b.prefix.length() < e.prefix.length()) {
            best = Some(e);
        }
    }
    best.map(LookupResult::of)
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {source}")]
    Prefix {
        line: usize,
        #[source]
        source: PrefixError,
    },
    #[error("line {line}: prefix {prefix} listed twice")]
    Duplicate { line: usize, prefix: Ipv6Prefix },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parses a mapping-table file: one `<ipv6-prefix>/<len> <ipv4-address>` per
/// line, `#` starts a comment. Entry ids follow line order starting at 0.
pub fn parse_mapping_table<R: BufRead>(reader: R) -> Result<Vec<MappingEntry>, TableError> {
    let mut out = Vec::new();
    let mut seen = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut fields = body.split_whitespace();
        let (Some(p), Some(a), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(TableError::Syntax {
                line: line_no,
                message: format!("expected `<prefix>/<len> <ipv4>`, got `{body}`"),
            });
        };
        let prefix: Ipv6Prefix = p.parse().map_err(|source| TableError::Prefix {
            line: line_no,
            source,
        })?;
        let target: Ipv4Address = a.parse().map_err(|e| TableError::Syntax {
            line: line_no,
            message: format!("bad IPv4 address `{a}`: {e}"),
        })?;
        if seen.insert(prefix, line_no).is_some() {
            return Err(TableError::Duplicate {
                line: line_no,
                prefix,
            });
        }
        out.push(MappingEntry::new(prefix, target, EntryId(out.len() as u64)));
    }
    Ok(out)
}

pub fn load_mapping_table(path: &Path) -> Result<Vec<MappingEntry>, TableError> {
    let f = std::fs::File::open(path)?;
    parse_mapping_table(std::io::BufReader::new(f))
}

pub fn format_mapping_table(entries: &[MappingEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        s.push_str(&format!("{} {}\n", e.prefix, e.target));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(p: &str, t: &str, id: u64) -> MappingEntry {
        MappingEntry::new(p.parse().unwrap(), t.parse().unwrap(), EntryId(id))
    }

    fn a(s: &str) -> Ipv6Address {
        s.parse().unwrap()
    }

    #[test]
    fn empty_tree_misses() {
        let t = SuccessionTree::new();
        assert!(t.lookup(a("2001:db8::1")).is_none());
        assert!(oracle_lookup(&[], a("::1")).is_none());
    }

    #[test]
    fn single_entry_hit() {
        let mut t = SuccessionTree::new();
        let e = entry("2001:db8::/32", "192.0.2.1", 1);
        assert_eq!(t.insert(e), Ok(Inserted::New));
        let hit = t.lookup(e.prefix.address()).unwrap();
        assert_eq!(hit.entry, e);
        assert_eq!(hit.matched_length, 32);
        assert!(t.lookup(a("2001:db9::1")).is_none());
    }

    #[test]
    fn nested_prefixes_prefer_longest() {
        let mut t = SuccessionTree::new();
        let short = entry("2001:db8::/32", "192.0.2.1", 1);
        let long = entry("2001:db8:ff00::/40", "192.0.2.2", 2);
        t.insert(short).unwrap();
        t.insert(long).unwrap();
        let probe = a("2001:db8:ff01::1");
        assert_eq!(t.lookup(probe).unwrap().entry, long);
        assert_eq!(oracle_lookup(&[short, long], probe).unwrap().entry, long);
        assert_eq!(t.lookup(a("2001:db8:fe00::1")).unwrap().entry, short);
        t.check_invariants().unwrap();
    }

    #[test]
    fn universal_prefix() {
        let mut t = SuccessionTree::new();
        let any = entry("::/0", "0.0.0.1", 7);
        t.insert(any).unwrap();
        let r = t.lookup(a("ffff::1")).unwrap();
        assert_eq!((r.entry, r.matched_length), (any, 0));
        assert_eq!(oracle_lookup(&[any], a("ffff::1")).unwrap().matched_length, 0);
    }

    #[test]
    fn backtracks_from_failed_exact_descent() {
        let mut t = SuccessionTree::new();
        // Exact child 0x2001 exists but only leads to a deeper /48; the /3
        // partial sibling must still catch other 0x2001 traffic.
        let deep = entry("2001:db8:1::/48", "192.0.2.1", 1);
        let wide = entry("2000::/3", "192.0.2.2", 2);
        t.insert(deep).unwrap();
        t.insert(wide).unwrap();
        assert_eq!(t.lookup(a("2001:db8:2::1")).unwrap().entry, wide);
        assert_eq!(t.lookup(a("2001:db8:1::9")).unwrap().entry, deep);
        assert!(t.lookup(a("4000::")).is_none());
    }

    #[test]
    fn duplicate_prefix_replaces_and_reports() {
        let mut t = SuccessionTree::new();
        let first = entry("2001:db8::/32", "192.0.2.1", 1);
        let second = entry("2001:db8::/32", "192.0.2.9", 2);
        t.insert(first).unwrap();
        assert_eq!(t.insert(second), Ok(Inserted::Replaced(first)));
        assert_eq!(t.len(), 1);
        assert_eq!(t.lookup(a("2001:db8::5")).unwrap().entry.target, second.target);
        // id 1 was released with the replaced entry
        t.insert(entry("2001:db9::/32", "192.0.2.3", 1)).unwrap();
        t.check_invariants().unwrap();
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut t = SuccessionTree::new();
        t.insert(entry("2001:db8::/32", "192.0.2.1", 1)).unwrap();
        let err = t.insert(entry("2001:db9::/32", "192.0.2.1", 1)).unwrap_err();
        assert!(matches!(err, LpmError::DuplicateId { .. }));
    }

    #[test]
    fn remove_falls_through_to_shorter() {
        let mut t = SuccessionTree::new();
        let short = entry("2001:db8::/32", "192.0.2.1", 1);
        let long = entry("2001:db8:ff00::/40", "192.0.2.2", 2);
        t.insert(short).unwrap();
        t.insert(long).unwrap();
        assert_eq!(t.remove(&long.prefix), Removed::Removed(long));
        assert_eq!(t.lookup(a("2001:db8:ff01::1")).unwrap().entry, short);
        assert_eq!(t.remove(&long.prefix), Removed::NotFound);
        assert_eq!(t.remove(&short.prefix), Removed::Removed(short));
        assert!(t.lookup(a("2001:db8:ff01::1")).is_none());
        assert!(t.is_empty());
        assert_eq!(t.height(), 0, "empty branches are pruned");
    }

    #[test]
    fn remove_absent_leaves_tree_unchanged() {
        let mut t = SuccessionTree::new();
        t.insert(entry("2001:db8::/32", "192.0.2.1", 1)).unwrap();
        let before = t.entries();
        assert_eq!(t.remove(&"2001:db8::/33".parse().unwrap()), Removed::NotFound);
        assert_eq!(t.remove(&"2001:db8:8000::/33".parse().unwrap()), Removed::NotFound);
        assert_eq!(t.entries(), before);
    }

    #[test]
    fn mapping_table_file() {
        let text = "# mapping\n2001:db8::/32 192.0.2.1\n\n2001:db8:ff00::/40   192.0.2.2 # nested\n";
        let entries = parse_mapping_table(text.as_bytes()).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[1].id, EntryId(1));
        assert_eq!(entries[1].target, Ipv4Address::new(192, 0, 2, 2));
        let round = parse_mapping_table(format_mapping_table(&entries).as_bytes()).unwrap();
        assert_eq!(round, entries);
    }

    #[test]
    fn mapping_table_errors_name_the_line() {
        let err = parse_mapping_table("2001:db8::/32 192.0.2.1\n2001:db8::1/64 192.0.2.1\n".as_bytes())
            .unwrap_err();
        assert!(matches!(err, TableError::Prefix { line: 2, .. }), "{err}");
        let err = parse_mapping_table("2001:db8::/32\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TableError::Syntax { line: 1, .. }));
        let err = parse_mapping_table("::/0 1.2.3.4\n::/0 1.2.3.5\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TableError::Duplicate { line: 2, .. }));
        let err = parse_mapping_table("::/0 1.2.3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TableError::Syntax { line: 1, .. }));
    }
}

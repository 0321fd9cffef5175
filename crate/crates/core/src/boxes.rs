//! Interval layouts, capacities and symbolic box addressing.
//!
//! Nothing here materializes interval contents. Every region is described by
//! a level, a kind and an address, and all sizes are computed with checked
//! `u128` arithmetic.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::InputError;

pub type Level = u32;

/// Which capacity formula to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityKind {
    Mp,
    Tree,
    B,
}

/// Capacity formulas, `None` on `u128` overflow.
pub fn checked_capacity(kind: CapacityKind, k: Level) -> Option<u128> {
    let k128 = u128::from(k);
    match kind {
        CapacityKind::Mp => k128.checked_mul(2)?.checked_add(2),
        CapacityKind::Tree => {
            let a = pow2(k.checked_add(2)?)?;
            let b = pow2(k.checked_add(1)?)?.checked_add(1)?;
            a.checked_mul(k128 + 2)?.checked_mul(b)?.checked_add(1)
        }
        CapacityKind::B => (k128 + 1).checked_mul(pow2(k)?.checked_add(1)?),
    }
}

/// Capacity formulas. Panics only when the value does not fit in `u128`
/// (levels above 60).
pub fn capacity(kind: CapacityKind, k: Level) -> u128 {
    checked_capacity(kind, k).expect("capacity overflows u128")
}

fn pow2(e: Level) -> Option<u128> {
    1u128.checked_shl(e).filter(|_| e < 128)
}

/// Replacement alphabet sizes used by negative-control runs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityOverride {
    /// Applies to every level not listed in `levels`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub all: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub levels: BTreeMap<Level, u64>,
}

impl CapacityOverride {
    pub fn uniform(a: u64) -> Self {
        CapacityOverride { all: Some(a), levels: BTreeMap::new() }
    }

    pub fn at(&self, k: Level) -> Option<u128> {
        self.levels.get(&k).copied().or(self.all).map(u128::from)
    }

    /// Parses `N` (all levels) or `k=N,k=N,...`, optionally mixed with a bare
    /// default: `2` or `3=5,4=6` or `2,3=5`.
    pub fn parse(text: &str) -> Result<Self, InputError> {
        let mut out = CapacityOverride::default();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let bad = || InputError::BadField { field: "capacity override", detail: part.into() };
            if let Some((k, a)) = part.split_once('=') {
                let k: Level = k.trim().parse().map_err(|_| bad())?;
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                if a < 2 {
                    return Err(bad());
                }
                out.levels.insert(k, a);
            } else {
                let a: u64 = part.parse().map_err(|_| bad())?;
                if a < 2 {
                    return Err(bad());
                }
                out.all = Some(a);
            }
        }
        if out.all.is_none() && out.levels.is_empty() {
            return Err(InputError::BadField { field: "capacity override", detail: text.into() });
        }
        Ok(out)
    }
}

/// A carving address: a string of digits below the level's capacity.
/// Ordering is lexicographic with prefixes first, which is also a preorder
/// walk of the carving tree.
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(pub Vec<u32>);

impl Address {
    pub fn root() -> Self {
        Address(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, m: u32) -> Self {
        let mut v = self.0.clone();
        v.push(m);
        Address(v)
    }

    pub fn prefix(&self, len: usize) -> Self {
        Address(self.0[..len].to_vec())
    }

    /// `self ⊆ other` as strings.
    pub fn is_prefix_of(&self, other: &Address) -> bool {
        other.0.starts_with(&self.0)
    }

    pub fn is_strict_prefix_of(&self, other: &Address) -> bool {
        self.len() < other.len() && self.is_prefix_of(other)
    }

    pub fn comparable(&self, other: &Address) -> bool {
        self.is_prefix_of(other) || other.is_prefix_of(self)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, ">")
    }
}

/// A region inside one column at one level.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxKind {
    /// Slot `j` of the private part of the interval.
    Private(u64),
    Carved(Address),
}

impl BoxKind {
    pub fn is_private(&self) -> bool {
        matches!(self, BoxKind::Private(_))
    }

    pub fn address(&self) -> Option<&Address> {
        match self {
            BoxKind::Carved(a) => Some(a),
            BoxKind::Private(_) => None,
        }
    }
}

/// Per-level shape of one column: private part, carving alphabet, lowest level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub style: CapacityKind,
    pub min_level: Level,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overridden: Option<CapacityOverride>,
}

impl Geometry {
    pub fn mp(c: Level) -> Self {
        Geometry { style: CapacityKind::Mp, min_level: c, overridden: None }
    }

    pub fn tree(node_len: Level) -> Self {
        Geometry { style: CapacityKind::Tree, min_level: node_len, overridden: None }
    }

    pub fn with_override(mut self, o: Option<CapacityOverride>) -> Self {
        self.overridden = o;
        self
    }

    /// Alphabet size used for carving at level `k`.
    pub fn capacity(&self, k: Level) -> u128 {
        self.overridden
            .as_ref()
            .and_then(|o| o.at(k))
            .unwrap_or_else(|| capacity(self.style, k))
    }

    /// Number of private slots at level `k`.
    pub fn private_len(&self, k: Level) -> u128 {
        match self.style {
            CapacityKind::Tree => 1u128 << k.min(127),
            _ => 1,
        }
    }

    /// Size of a carved block at depth `depth` (the root block has depth 0).
    pub fn block_len(&self, k: Level, depth: usize) -> Result<u128, InputError> {
        let exp = (k as usize + 1)
            .checked_sub(depth)
            .ok_or(InputError::AddressTooLong { level: k, len: depth })?;
        checked_pow(self.capacity(k), exp as u32).ok_or(InputError::Overflow)
    }

    pub fn interval_len(&self, k: Level) -> Result<u128, InputError> {
        self.block_len(k, 0)?.checked_add(self.private_len(k)).ok_or(InputError::Overflow)
    }

    /// Trace bound for inputs at level `k`.
    pub fn bound(&self, k: Level) -> u64 {
        u64::from(k)
    }

    pub fn check_level(&self, k: Level) -> Result<(), InputError> {
        if k < self.min_level {
            return Err(InputError::LevelTooLow { level: k, min: self.min_level });
        }
        Ok(())
    }

    pub fn check_kind(&self, k: Level, kind: &BoxKind) -> Result<(), InputError> {
        self.check_level(k)?;
        match kind {
            BoxKind::Private(j) => {
                if u128::from(*j) >= self.private_len(k) {
                    return Err(InputError::PrivateSlot { level: k, slot: *j });
                }
            }
            BoxKind::Carved(a) => self.check_address(k, a)?,
        }
        Ok(())
    }

    pub fn check_address(&self, k: Level, a: &Address) -> Result<(), InputError> {
        if a.len() > k as usize + 1 {
            return Err(InputError::AddressTooLong { level: k, len: a.len() });
        }
        let cap = self.capacity(k);
        if let Some(d) = a.0.iter().find(|d| u128::from(**d) >= cap) {
            return Err(InputError::DigitOutOfRange { level: k, digit: *d });
        }
        Ok(())
    }

    /// Offset range of a region relative to the start of `I(k)`.
    pub fn local_range(&self, k: Level, kind: &BoxKind) -> Result<Range<u128>, InputError> {
        self.check_kind(k, kind)?;
        match kind {
            BoxKind::Private(j) => Ok(u128::from(*j)..u128::from(*j) + 1),
            BoxKind::Carved(a) => {
                let mut start = self.private_len(k);
                for (i, d) in a.0.iter().enumerate() {
                    let child = self.block_len(k, i + 1)?;
                    start = child
                        .checked_mul(u128::from(*d))
                        .and_then(|o| o.checked_add(start))
                        .ok_or(InputError::Overflow)?;
                }
                let len = self.block_len(k, a.len())?;
                Ok(start..start + len)
            }
        }
    }

    /// Inverse of `local_range` on singletons: the private slot or full-depth
    /// address of offset `off` inside `I(k)`.
    pub fn locate_local(&self, k: Level, off: u128) -> Result<BoxKind, InputError> {
        self.check_level(k)?;
        let p = self.private_len(k);
        if off < p {
            return Ok(BoxKind::Private(off as u64));
        }
        let mut rest = off - p;
        if rest >= self.block_len(k, 0)? {
            return Err(InputError::OutsideLayout);
        }
        let mut digits = Vec::with_capacity(k as usize + 1);
        for depth in 1..=k as usize + 1 {
            let child = self.block_len(k, depth)?;
            digits.push((rest / child) as u32);
            rest %= child;
        }
        Ok(BoxKind::Carved(Address(digits)))
    }

    /// Size of a region.
    pub fn region_len(&self, k: Level, kind: &BoxKind) -> Result<u128, InputError> {
        match kind {
            BoxKind::Private(_) => Ok(1),
            BoxKind::Carved(a) => self.block_len(k, a.len()),
        }
    }
}

fn checked_pow(base: u128, exp: u32) -> Option<u128> {
    base.checked_pow(exp)
}

/// Layout of one side of the two-sided construction: `I(k)` for `k ≥ c`
/// placed consecutively from 0.
#[derive(Clone, Debug)]
pub struct LayoutMp {
    pub geometry: Geometry,
}

impl LayoutMp {
    pub fn new(c: Level, overridden: Option<CapacityOverride>) -> Result<Self, InputError> {
        if c == 0 {
            return Err(InputError::BadField { field: "c", detail: "must be at least 1".into() });
        }
        Ok(LayoutMp { geometry: Geometry::mp(c).with_override(overridden) })
    }

    pub fn c(&self) -> Level {
        self.geometry.min_level
    }

    pub fn interval_of(&self, k: Level) -> Result<Range<u128>, InputError> {
        self.geometry.check_level(k)?;
        let mut start = 0u128;
        for j in self.c()..k {
            start = start.checked_add(self.geometry.interval_len(j)?).ok_or(InputError::Overflow)?;
        }
        let len = self.geometry.interval_len(k)?;
        Ok(start..start.checked_add(len).ok_or(InputError::Overflow)?)
    }

    /// The level whose interval holds `z`; this is also the trace bound.
    pub fn h_value(&self, z: u128) -> Result<Level, InputError> {
        self.locate(z).map(|(k, _)| k)
    }

    pub fn locate(&self, z: u128) -> Result<(Level, BoxKind), InputError> {
        let mut start = 0u128;
        let mut k = self.c();
        loop {
            let len = self.geometry.interval_len(k).map_err(|_| InputError::OutsideLayout)?;
            if z - start < len {
                return Ok((k, self.geometry.locate_local(k, z - start)?));
            }
            start += len;
            k += 1;
        }
    }

    pub fn carve(&self, k: Level, alpha: &Address) -> Result<Range<u128>, InputError> {
        self.region(k, &BoxKind::Carved(alpha.clone()))
    }

    pub fn private_slot(&self, k: Level) -> Result<u128, InputError> {
        Ok(self.interval_of(k)?.start)
    }

    pub fn region(&self, k: Level, kind: &BoxKind) -> Result<Range<u128>, InputError> {
        let base = self.interval_of(k)?.start;
        let r = self.geometry.local_range(k, kind)?;
        Ok(base + r.start..base + r.end)
    }
}

/// Layout of all columns belonging to one index `e` on the strategy tree.
///
/// The global order lists blocks `(k, τ)` by increasing `k` and, inside a
/// level, by breadth-first rank of `τ`; block `(k, τ)` is `I^τ(k)` and exists
/// when `k ≥ |τ|`. The order function is then `k` on each block.
#[derive(Clone, Debug)]
pub struct LayoutTree {
    /// `(node id, node length)` in breadth-first order.
    pub columns: Vec<(u32, Level)>,
    /// Lexicographically ordered `Θ^τ(k)`, keyed by `(τ, k)`.
    pub theta: BTreeMap<(u32, Level), Vec<u32>>,
    pub overridden: Option<CapacityOverride>,
}

impl LayoutTree {
    pub fn geometry(&self, node: u32) -> Result<Geometry, InputError> {
        let len = self.node_len(node)?;
        Ok(Geometry::tree(len).with_override(self.overridden.clone()))
    }

    fn node_len(&self, node: u32) -> Result<Level, InputError> {
        self.columns
            .iter()
            .find(|(n, _)| *n == node)
            .map(|(_, l)| *l)
            .ok_or(InputError::UnknownNode(node))
    }

    fn level_block(&self, k: Level) -> Result<u128, InputError> {
        let mut total = 0u128;
        for (node, len) in &self.columns {
            if *len <= k {
                let g = self.geometry(*node)?;
                total = total.checked_add(g.interval_len(k)?).ok_or(InputError::Overflow)?;
            }
        }
        Ok(total)
    }

    pub fn interval_of(&self, k: Level, node: u32) -> Result<Range<u128>, InputError> {
        let g = self.geometry(node)?;
        g.check_level(k)?;
        let mut start = 0u128;
        for j in 0..k {
            start = start.checked_add(self.level_block(j)?).ok_or(InputError::Overflow)?;
        }
        for (other, len) in &self.columns {
            if *other == node {
                break;
            }
            if *len <= k {
                let og = self.geometry(*other)?;
                start = start.checked_add(og.interval_len(k)?).ok_or(InputError::Overflow)?;
            }
        }
        let len = g.interval_len(k)?;
        Ok(start..start.checked_add(len).ok_or(InputError::Overflow)?)
    }

    /// `(node, k, cell)` holding `z`.
    pub fn locate(&self, z: u128) -> Result<(u32, Level, BoxKind), InputError> {
        if self.columns.is_empty() {
            return Err(InputError::OutsideLayout);
        }
        let mut start = 0u128;
        let mut k = 0;
        loop {
            let block = self.level_block(k).map_err(|_| InputError::OutsideLayout)?;
            if z - start < block {
                let mut off = z - start;
                for (node, len) in &self.columns {
                    if *len > k {
                        continue;
                    }
                    let g = self.geometry(*node)?;
                    let il = g.interval_len(k)?;
                    if off < il {
                        return Ok((*node, k, g.locate_local(k, off)?));
                    }
                    off -= il;
                }
            }
            start += block;
            k += 1;
        }
    }

    pub fn h_value(&self, z: u128) -> Result<Level, InputError> {
        self.locate(z).map(|(_, k, _)| k)
    }

    pub fn carve(&self, k: Level, alpha: &Address, node: u32) -> Result<Range<u128>, InputError> {
        self.region(k, node, &BoxKind::Carved(alpha.clone()))
    }

    pub fn region(&self, k: Level, node: u32, kind: &BoxKind) -> Result<Range<u128>, InputError> {
        let base = self.interval_of(k, node)?.start;
        let r = self.geometry(node)?.local_range(k, kind)?;
        Ok(base + r.start..base + r.end)
    }

    /// Slot index of `σ` inside `J^τ(k)`.
    pub fn private_index(&self, k: Level, owner: u32, node: u32) -> Result<u64, InputError> {
        self.theta
            .get(&(node, k))
            .and_then(|v| v.iter().position(|s| *s == owner))
            .map(|p| p as u64)
            .ok_or(InputError::NotInTheta { owner, node, level: k })
    }

    pub fn private_slot(&self, k: Level, owner: u32, node: u32) -> Result<u128, InputError> {
        let j = self.private_index(k, owner, node)?;
        Ok(self.interval_of(k, node)?.start + u128::from(j))
    }
}

/// Nodes of `nodes` lying under `root` (inclusive) whose residual part, the
/// inputs not covered by a strictly deeper member of `nodes`, is nonempty.
/// `root` is always considered a member.
///
/// Each returned address names one class of inputs that share the same set
/// of covering members: exactly the members that are prefixes of it.
pub fn residual_cells(
    geometry: &Geometry,
    k: Level,
    root: &Address,
    nodes: &BTreeSet<Address>,
) -> Result<Vec<Address>, InputError> {
    let mut members: Vec<&Address> = nodes.range(root.clone()..).take_while(|a| root.is_prefix_of(a)).collect();
    if members.first() != Some(&root) {
        members.insert(0, root);
    }
    let mut covered: BTreeMap<&Address, u128> = BTreeMap::new();
    let set: BTreeSet<&Address> = members.iter().copied().collect();
    for a in members.iter().skip(1) {
        let mut parent = None;
        for len in (root.len()..a.len()).rev() {
            let p = a.prefix(len);
            if let Some(found) = set.get(&p) {
                parent = Some(*found);
                break;
            }
        }
        let parent = parent.expect("root is a prefix of every member");
        *covered.entry(parent).or_insert(0) += geometry.block_len(k, a.len())?;
    }
    let mut out = Vec::new();
    for a in members {
        let c = covered.get(a).copied().unwrap_or(0);
        if c < geometry.block_len(k, a.len())? {
            out.push(a.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn capacity_spot_values() {
        assert_eq!(capacity(CapacityKind::Mp, 1), 4);
        assert_eq!(capacity(CapacityKind::Tree, 0), 25);
        assert_eq!(capacity(CapacityKind::Tree, 2), 577);
        assert_eq!(capacity(CapacityKind::B, 1), 6);
    }

    #[test]
    fn mp_intervals_from_zero() {
        let l = LayoutMp::new(1, None).unwrap();
        assert_eq!(l.interval_of(1).unwrap(), 0..17);
        assert_eq!(l.interval_of(2).unwrap(), 17..234);
        assert!(l.interval_of(0).is_err());
        assert_eq!(l.h_value(0).unwrap(), 1);
        assert_eq!(l.h_value(16).unwrap(), 1);
        assert_eq!(l.h_value(17).unwrap(), 2);
        assert_eq!(l.private_slot(2).unwrap(), 17);
    }

    #[test]
    fn mp_carving_blocks() {
        let l = LayoutMp::new(1, None).unwrap();
        assert_eq!(l.carve(1, &Address::root()).unwrap(), 1..17);
        assert_eq!(l.carve(1, &Address(vec![0])).unwrap(), 1..5);
        assert_eq!(l.carve(1, &Address(vec![1])).unwrap(), 5..9);
        assert_eq!(l.carve(1, &Address(vec![0, 0])).unwrap(), 1..2);
        assert!(l.carve(1, &Address(vec![0, 0, 0])).is_err());
        assert!(l.carve(1, &Address(vec![4])).is_err());
    }

    #[test]
    fn locate_inverts_carving() {
        let l = LayoutMp::new(1, None).unwrap();
        for z in 0..234u128 {
            let (k, kind) = l.locate(z).unwrap();
            assert_eq!(l.region(k, &kind).unwrap(), z..z + 1);
        }
    }

    #[test]
    fn override_parse_forms() {
        assert_eq!(CapacityOverride::parse("2").unwrap().at(7), Some(2));
        let o = CapacityOverride::parse("2,3=5").unwrap();
        assert_eq!(o.at(3), Some(5));
        assert_eq!(o.at(4), Some(2));
        assert!(CapacityOverride::parse("1").is_err());
        assert!(CapacityOverride::parse("x=2").is_err());
        assert!(CapacityOverride::parse("").is_err());
    }

    #[test]
    fn residual_cells_detect_full_cover() {
        let g = Geometry::mp(1);
        let mut nodes = BTreeSet::new();
        for m in 0..4 {
            nodes.insert(Address(vec![m]));
        }
        let cells = residual_cells(&g, 1, &Address::root(), &nodes).unwrap();
        assert_eq!(cells.len(), 4);
        assert!(!cells.contains(&Address::root()));
        nodes.remove(&Address(vec![3]));
        nodes.insert(Address(vec![3, 1]));
        let cells = residual_cells(&g, 1, &Address::root(), &nodes).unwrap();
        assert!(cells.contains(&Address::root()));
        assert!(cells.contains(&Address(vec![3, 1])));
    }
}

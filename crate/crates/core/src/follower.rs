//! Followers, their box pointers, and the box-choice rule shared by both engines.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::boxes::{Address, BoxKind, Geometry, Level};
use crate::cea::{Region, Tick};

/// Column identifier: a side (0 or 1) or a tree node id.
pub type ColumnId = u32;

/// A follower's box in one column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pointer {
    pub level: Level,
    pub kind: BoxKind,
    pub t: Tick,
}

impl Pointer {
    pub fn region(&self) -> Region {
        Region { level: self.level, kind: self.kind.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Alive,
    Enumerated,
    Cancelled,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Follower {
    /// Appointment tick; also the number enumerated into E.
    pub id: u64,
    /// Index `e` of the diagonalization requirement this follower serves.
    pub requirement: u32,
    /// Owning tree node, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<u32>,
    /// One pointer per column in R.
    pub pointers: BTreeMap<ColumnId, Pointer>,
    pub top: ColumnId,
    pub realised: bool,
    pub attentions: u32,
    pub status: Status,
}

/// Membership of a follower at a column and level.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Class {
    /// Top column, carved box.
    K,
    /// Top column, private box.
    L,
    /// Non-top column.
    G,
}

impl Follower {
    pub fn class_at(&self, col: ColumnId, k: Level) -> Option<Class> {
        let p = self.pointers.get(&col)?;
        if p.level != k {
            return None;
        }
        Some(if self.top != col {
            Class::G
        } else if p.kind.is_private() {
            Class::L
        } else {
            Class::K
        })
    }

    pub fn alive(&self) -> bool {
        self.status == Status::Alive
    }

    /// Sum over R of level plus one, so dropping a level-0 column still counts.
    pub fn potential(&self) -> u64 {
        self.pointers.values().map(|p| u64::from(p.level) + 1).sum()
    }

    pub fn address_at(&self, col: ColumnId) -> Option<&Address> {
        self.pointers.get(&col).and_then(|p| p.kind.address())
    }
}

/// Where a new carved box goes: `β⌢m`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice {
    pub column: ColumnId,
    pub level: Level,
    pub beta: Address,
    pub m: u32,
}

impl Choice {
    pub fn address(&self) -> Address {
        self.beta.child(self.m)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    BetaTooLong,
    NoFreeDigit,
}

/// No legal box exists: the choice rule ran out of room.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub column: ColumnId,
    pub level: Level,
    pub beta: Address,
    /// The follower receiving attention, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acting: Option<u64>,
    /// `(follower, address)` of every occupied box at this column and level.
    pub occupied: Vec<(u64, Address)>,
}

/// Picks `β` and the least free digit `m` at `(col, k)`.
///
/// `survivors` are the followers alive before and after the stage, with
/// their parameters from before the stage; `acting` is the follower
/// receiving attention, which never supplies `β`.
pub fn choose_box<'a>(
    survivors: impl Iterator<Item = &'a Follower> + Clone,
    acting: Option<u64>,
    col: ColumnId,
    k: Level,
    geometry: &Geometry,
) -> Result<Choice, Violation> {
    let beta = survivors
        .clone()
        .filter(|y| Some(y.id) != acting && y.class_at(col, k) == Some(Class::K))
        .max_by_key(|y| y.id)
        .and_then(|y| y.address_at(col).cloned())
        .unwrap_or_default();
    let occupied: Vec<(u64, Address)> = survivors
        .filter(|y| y.pointers.get(&col).map_or(false, |p| p.level == k))
        .filter_map(|y| y.address_at(col).map(|a| (y.id, a.clone())))
        .collect();
    let violation = |kind| Violation { kind, column: col, level: k, beta: beta.clone(), acting, occupied: occupied.clone() };
    if beta.len() > k as usize {
        return Err(violation(ViolationKind::BetaTooLong));
    }
    let cap = geometry.capacity(k);
    let mut m = 0u32;
    while u128::from(m) < cap {
        let cand = beta.child(m);
        if !occupied.iter().any(|(_, a)| *a == cand) {
            return Ok(Choice { column: col, level: k, beta, m });
        }
        m += 1;
    }
    Err(violation(ViolationKind::NoFreeDigit))
}

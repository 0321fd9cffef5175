//! Core of the box-promotion simulator: symbolic box layouts, bounded
//! oracle-relative traces, the two engines, adversary policies and the
//! auditor. Needs only `alloc`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod adversary;
pub mod boxes;
pub mod cea;
pub mod error;
pub mod follower;
pub mod log;
pub mod mp;
pub mod run;
pub mod scenario;
pub mod tree;
pub mod verifier;
pub mod world;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::boxes::Level;
use crate::cea::Tick;
use crate::follower::{Class, ColumnId};
use crate::log::{SizeEntry, StageRecord};
use crate::world::World;

pub use crate::error::InputError;

/// A construction advanced one tick at a time. Adversary events for the
/// tick are applied to `world_mut()` before `step`.
pub trait Engine {
    fn world(&self) -> &World;
    fn world_mut(&mut self) -> &mut World;
    fn step(&mut self, tick: Tick) -> StageRecord;
}

/// `|K|`, `|L|`, `|G|` per column and level over the live followers.
pub fn sizes(world: &World, cols: &[ColumnId]) -> Vec<SizeEntry> {
    let mut acc: BTreeMap<(ColumnId, Level), [u32; 3]> = BTreeMap::new();
    for f in world.followers.values() {
        for (col, p) in &f.pointers {
            if !cols.contains(col) {
                continue;
            }
            let slot = acc.entry((*col, p.level)).or_default();
            match f.class_at(*col, p.level) {
                Some(Class::K) => slot[0] += 1,
                Some(Class::L) => slot[1] += 1,
                Some(Class::G) => slot[2] += 1,
                None => {}
            }
        }
    }
    acc.into_iter().map(|((column, level), [k, l, g])| SizeEntry { column, level, k, l, g }).collect()
}

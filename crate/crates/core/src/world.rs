//! State shared by the engines, the adversaries and the auditor: columns,
//! oracles, halting declarations, live followers and E.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::boxes::{LayoutMp, LayoutTree};
use crate::cea::{CeSet, Column, Pcf, PostOutcome, Region, Tick};
use crate::error::InputError;
use crate::follower::{ColumnId, Follower};

/// Where an axiom applies: a box, or one explicit input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionSpec {
    Box(Region),
    Point(u128),
}

/// One adversary move.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Enumerate {
        set: u32,
        element: u64,
    },
    PostAxiom {
        column: ColumnId,
        region: RegionSpec,
        /// Child digits of the region left out.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        except: Vec<u32>,
        value: u64,
        #[serde(rename = "use")]
        use_: u64,
    },
    DeclareHalt {
        e: u32,
        x: u64,
        value: u64,
    },
}

/// Absolute input positions for explicit singleton axioms.
#[derive(Clone, Debug)]
pub enum Locator {
    Mp(LayoutMp),
    /// One layout per index `e`.
    Tree(BTreeMap<u32, LayoutTree>),
}

#[derive(Clone, Debug)]
pub struct World {
    pub columns: BTreeMap<ColumnId, Column>,
    /// Which oracle governs each column's trace.
    pub column_oracle: BTreeMap<ColumnId, u32>,
    pub oracles: BTreeMap<u32, CeSet>,
    pub pcf: Pcf,
    /// Live followers by id.
    pub followers: BTreeMap<u64, Follower>,
    /// `v` at the column's most recent stage, per `(follower, column)`.
    pub uses: BTreeMap<(u64, ColumnId), Option<u64>>,
    /// E, with enumeration ticks.
    pub enumerated: BTreeMap<u64, Tick>,
    pub locator: Locator,
}

impl World {
    pub fn new(locator: Locator) -> Self {
        World {
            columns: BTreeMap::new(),
            column_oracle: BTreeMap::new(),
            oracles: BTreeMap::new(),
            pcf: Pcf::new(),
            followers: BTreeMap::new(),
            uses: BTreeMap::new(),
            enumerated: BTreeMap::new(),
            locator,
        }
    }

    pub fn add_column(&mut self, id: ColumnId, column: Column, oracle: u32) {
        self.columns.insert(id, column);
        self.column_oracle.insert(id, oracle);
        self.oracles.entry(oracle).or_default();
    }

    pub fn oracle_of(&self, col: ColumnId) -> &CeSet {
        &self.oracles[&self.column_oracle[&col]]
    }

    /// Tick boundary: every trace retries its queue.
    pub fn begin_tick(&mut self, tick: Tick) {
        for c in self.columns.values_mut() {
            c.trace.retry(tick);
        }
    }

    pub fn resolve(&self, column: ColumnId, spec: &RegionSpec) -> Result<Region, InputError> {
        match spec {
            RegionSpec::Box(r) => Ok(r.clone()),
            RegionSpec::Point(z) => match &self.locator {
                Locator::Mp(l) => {
                    let (level, kind) = l.locate(*z)?;
                    Ok(Region { level, kind })
                }
                Locator::Tree(ls) => {
                    let e = self.column_oracle.get(&column).ok_or(InputError::UnknownColumn(column))?;
                    let (node, level, kind) = ls.get(e).ok_or(InputError::UnknownColumn(column))?.locate(*z)?;
                    if node != column {
                        return Err(InputError::BadField {
                            field: "point",
                            detail: format!("input {z} lies in column {node}, not {column}"),
                        });
                    }
                    Ok(Region { level, kind })
                }
            },
        }
    }

    pub fn apply(&mut self, tick: Tick, event: &Event) -> Result<Option<PostOutcome>, InputError> {
        match event {
            Event::Enumerate { set, element } => {
                let o = self.oracles.get_mut(set).ok_or(InputError::BadField {
                    field: "set",
                    detail: format!("no oracle {set}"),
                })?;
                if o.enumerate(tick, *element) {
                    let cols: Vec<ColumnId> =
                        self.column_oracle.iter().filter(|(_, o)| *o == set).map(|(c, _)| *c).collect();
                    for c in cols {
                        self.columns.get_mut(&c).expect("column").trace.oracle_changed(tick, *element);
                    }
                }
                Ok(None)
            }
            Event::PostAxiom { column, region, except, value, use_ } => {
                let r = self.resolve(*column, region)?;
                let col = self.columns.get_mut(column).ok_or(InputError::UnknownColumn(*column))?;
                col.trace.post_except(tick, r, except.clone(), *value, *use_).map(Some)
            }
            Event::DeclareHalt { e, x, value } => {
                self.pcf.declare(tick, *e, *x, *value);
                Ok(None)
            }
        }
    }

    /// Whether some member of E is a witnessed zero of `φ_e`.
    pub fn satisfied(&self, e: u32) -> bool {
        self.enumerated.keys().any(|x| self.pcf.value(e, *x) == Some(0))
    }

    pub fn singleton_entries(&self) -> usize {
        self.columns.values().map(Column::singleton_entries).sum()
    }
}

//! Per-tick records. A log is a header followed by one record per tick and
//! holds everything the auditor needs.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::boxes::Level;
use crate::cea::{Region, Tick};
use crate::follower::{Choice, ColumnId, Follower, Status, Violation};
use crate::scenario::Scenario;
use crate::world::Event;

pub const SCHEMA: &str = "boxpromo.stage-log";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: String,
    pub version: u32,
    pub scenario: Scenario,
}

impl LogHeader {
    pub fn new(scenario: Scenario) -> Self {
        LogHeader { schema: SCHEMA.into(), version: SCHEMA_VERSION, scenario }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Appoint {
        follower: u64,
        requirement: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        node: Option<u32>,
    },
    Promote {
        follower: u64,
        column: ColumnId,
        case: u8,
    },
    Violation(Violation),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removal {
    pub follower: u64,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsiWrite {
    pub column: ColumnId,
    pub region: Region,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UseEntry {
    pub follower: u64,
    pub column: ColumnId,
    pub v: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeEntry {
    pub column: ColumnId,
    pub level: Level,
    pub k: u32,
    pub l: u32,
    pub g: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub tick: Tick,
    pub stage: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tau_stages: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path: Vec<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<Event>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub removed: Vec<Removal>,
    /// Full snapshots of followers created or changed this tick.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub followers: Vec<Follower>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub psi_writes: Vec<PsiWrite>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uses: Vec<UseEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub choices: Vec<Choice>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sizes: Vec<SizeEntry>,
}

impl StageRecord {
    pub fn new(tick: Tick) -> Self {
        StageRecord { tick, ..Default::default() }
    }

    pub fn promotion(&self) -> Option<(u64, ColumnId, u8)> {
        match &self.action {
            Some(Action::Promote { follower, column, case }) => Some((*follower, *column, *case)),
            _ => None,
        }
    }

    pub fn violation(&self) -> Option<&Violation> {
        match &self.action {
            Some(Action::Violation(v)) => Some(v),
            _ => None,
        }
    }
}

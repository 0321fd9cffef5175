//! Run configuration.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::boxes::CapacityOverride;
use crate::cea::Tick;
use crate::error::InputError;
use crate::world::Event;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Mp,
    Tree,
}

/// An entry of the tree's requirement list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Requirement {
    /// Make E differ from `φ_e`.
    P { e: u32 },
    /// Defeat trace `c` for oracle `e`.
    N { e: u32, c: u32 },
}

impl Requirement {
    pub fn is_negative(&self) -> bool {
        matches!(self, Requirement::N { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Permissive,
    Stonewall,
    SeeSaw,
    Random,
    Scripted,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub tick: Tick,
    #[serde(flatten)]
    pub event: Event,
}

fn default_gap() -> u64 {
    64
}
fn default_permit() -> u32 {
    300
}
fn default_realise() -> u32 {
    500
}
fn default_refuse() -> u32 {
    50
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryConfig {
    pub policy: PolicyKind,
    #[serde(default)]
    pub seed: u64,
    /// Tick after which the adversary stops granting permissions and
    /// realising followers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quiesce_at: Option<Tick>,
    /// Longest tolerated run of ticks with an unmet obligation.
    #[serde(default = "default_gap")]
    pub gap: u64,
    /// Per-mille chance per tick and oracle of a voluntary permission (random policy).
    #[serde(default = "default_permit")]
    pub permit_per_mille: u32,
    /// Per-mille chance per tick and follower of realising it (random policy).
    #[serde(default = "default_realise")]
    pub realise_per_mille: u32,
    /// Per-mille chance per tick and follower of refusing it forever (random policy).
    #[serde(default = "default_refuse")]
    pub refuse_per_mille: u32,
    /// Tree runs: the `(e, c)` traces the adversary keeps. Defaults to all.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traced: Option<Vec<(u32, u32)>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<ScriptEvent>,
}

impl AdversaryConfig {
    pub fn new(policy: PolicyKind, seed: u64) -> Self {
        AdversaryConfig {
            policy,
            seed,
            quiesce_at: None,
            gap: default_gap(),
            permit_per_mille: default_permit(),
            realise_per_mille: default_realise(),
            refuse_per_mille: default_refuse(),
            traced: None,
            script: Vec::new(),
        }
    }
}

fn default_c() -> u32 {
    1
}
fn default_fraction() -> u32 {
    20
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub engine: EngineKind,
    #[serde(default = "default_c")]
    pub c: u32,
    #[serde(default)]
    pub e_max: u32,
    /// Two-sided runs: active requirement indices. Defaults to `c..=e_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirements: Option<Vec<u32>>,
    #[serde(default)]
    pub depth: u32,
    /// Tree runs: priority list. Defaults to alternating `N(e,0)`, `P(e)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement_list: Option<Vec<Requirement>>,
    pub horizon: Tick,
    pub adversary: AdversaryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity_override: Option<CapacityOverride>,
    #[serde(default)]
    pub negative_control: bool,
    /// Share of final ticks, in percent, used to approximate limits.
    #[serde(default = "default_fraction")]
    pub limit_fraction_pct: u32,
}

impl Scenario {
    pub fn mp(name: &str, c: u32, e_max: u32, horizon: Tick, adversary: AdversaryConfig) -> Self {
        Scenario {
            name: name.into(),
            engine: EngineKind::Mp,
            c,
            e_max,
            requirements: None,
            depth: 0,
            requirement_list: None,
            horizon,
            adversary,
            capacity_override: None,
            negative_control: false,
            limit_fraction_pct: default_fraction(),
        }
    }

    pub fn tree(name: &str, depth: u32, horizon: Tick, adversary: AdversaryConfig) -> Self {
        Scenario {
            name: name.into(),
            engine: EngineKind::Tree,
            c: 1,
            e_max: 0,
            requirements: None,
            depth,
            requirement_list: None,
            horizon,
            adversary,
            capacity_override: None,
            negative_control: false,
            limit_fraction_pct: default_fraction(),
        }
    }

    pub fn validate(&self) -> Result<(), InputError> {
        let bad = |field, detail: String| Err(InputError::BadField { field, detail });
        if self.horizon < 1 {
            return bad("horizon", "must be at least 1".into());
        }
        if self.c < 1 {
            return bad("c", "must be at least 1".into());
        }
        if self.capacity_override.is_some() && !self.negative_control {
            return bad("capacity_override", "requires negative_control".into());
        }
        if self.limit_fraction_pct == 0 || self.limit_fraction_pct > 100 {
            return bad("limit_fraction_pct", format!("{} is outside 1..=100", self.limit_fraction_pct));
        }
        match self.engine {
            EngineKind::Mp => {
                if self.e_max < self.c {
                    return bad("e_max", format!("{} is below c = {}", self.e_max, self.c));
                }
                for e in self.active_requirements() {
                    if e < self.c || e > self.e_max {
                        return bad("requirements", format!("{e} is outside [c, e_max]"));
                    }
                }
            }
            EngineKind::Tree => {
                if self.depth < 1 {
                    return bad("depth", "must be at least 1".into());
                }
            }
        }
        let mut last = 0;
        for (i, ev) in self.adversary.script.iter().enumerate() {
            if ev.tick < last {
                return Err(InputError::Script { index: i, detail: format!("tick {} after tick {last}", ev.tick) });
            }
            last = ev.tick;
        }
        Ok(())
    }

    pub fn active_requirements(&self) -> Vec<u32> {
        match &self.requirements {
            Some(r) => {
                let mut r = r.clone();
                r.sort_unstable();
                r.dedup();
                r
            }
            None => (self.c..=self.e_max).collect(),
        }
    }

    pub fn tree_requirements(&self) -> Vec<Requirement> {
        match &self.requirement_list {
            Some(l) => l.clone(),
            None => default_requirement_list(self.depth),
        }
    }

    /// First tick of the limit window.
    pub fn window_start(&self) -> Tick {
        self.horizon - self.horizon * u64::from(self.limit_fraction_pct) / 100
    }

    /// Defaults to one window length before the limit window, so the
    /// window itself sees a settled run.
    pub fn quiesce_at(&self) -> Tick {
        let w = self.horizon * u64::from(self.limit_fraction_pct) / 100;
        self.adversary.quiesce_at.unwrap_or_else(|| self.horizon.saturating_sub(2 * w))
    }
}

/// `N(0,0), P(0), N(1,0), P(1), ...`, long enough for every path of the tree.
pub fn default_requirement_list(depth: u32) -> Vec<Requirement> {
    let mut out = Vec::new();
    for e in 0..=depth {
        out.push(Requirement::N { e, c: 0 });
        out.push(Requirement::P { e });
    }
    out
}

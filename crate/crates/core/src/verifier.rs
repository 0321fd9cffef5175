//! Log auditing: replays a stage log against its own copy of the state,
//! checks the structural invariants tick by tick, then analyses the run at
//! the horizon (limits over a final window, the true path, reductions).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::boxes::{capacity, Address, CapacityKind, LayoutMp, Level};
use crate::cea::{Column, Region, Tick};
use crate::error::InputError;
use crate::follower::{Choice, Class, ColumnId, Follower, Status, Violation, ViolationKind};
use crate::log::{Action, LogHeader, StageRecord};
use crate::scenario::{EngineKind, Requirement, Scenario};
use crate::tree::{StrategyTree, INF};
use crate::world::{Locator, World};

/// Findings kept per check; the rest are only counted.
const FINDINGS_PER_CHECK: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    TOrdering,
    AlphaInjective,
    Forest,
    KChain,
    BoundK,
    BoundL,
    BoundKl,
    BoundG,
    Bookkeeping,
    LevelShape,
    TopChange,
    Potential,
    Permission,
    TracedAtStages,
    PsiStable,
    TraceBound,
    LogConsistency,
    Reduction,
    Diagonalization,
}

pub const ALL_CHECKS: [Check; 19] = [
    Check::TOrdering,
    Check::AlphaInjective,
    Check::Forest,
    Check::KChain,
    Check::BoundK,
    Check::BoundL,
    Check::BoundKl,
    Check::BoundG,
    Check::Bookkeeping,
    Check::LevelShape,
    Check::TopChange,
    Check::Potential,
    Check::Permission,
    Check::TracedAtStages,
    Check::PsiStable,
    Check::TraceBound,
    Check::LogConsistency,
    Check::Reduction,
    Check::Diagonalization,
];

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub followers: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<ColumnId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub addresses: Vec<Address>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub tick: Tick,
    pub check: Check,
    pub witness: Witness,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    CompliantAtHorizon,
    Defaulted,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub check: Option<Check>,
    pub evaluated: u64,
    pub failed: u64,
}

/// Class sizes at one column and level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelStats {
    pub column: ColumnId,
    pub level: Level,
    pub max_k: u32,
    pub max_l: u32,
    pub max_g: u32,
    pub final_k: u32,
    pub final_l: u32,
    pub final_g: u32,
    /// K at the horizon, when it did not change during the final window.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_limit: Option<Vec<u64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    InE,
    NotInE,
    ExceededHorizon,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReductionResult {
    pub column: ColumnId,
    pub checked: u64,
    pub agree: u64,
    /// Followers with no answer by the horizon that the argument allows.
    pub allowed: Vec<u64>,
    /// Followers whose answer disagrees with E, or has none without excuse.
    pub disagree: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Diagonal {
    Witnessed { x: u64 },
    Unrealised { x: u64 },
    Open,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagonalResult {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<u32>,
    pub requirement: u32,
    pub result: Diagonal,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub scenario: String,
    pub ticks: u64,
    pub stages: u64,
    pub classification: Classification,
    pub longest_unmet: u64,
    pub final_unmet: u64,
    pub gap: u64,
    pub window_start: Tick,
    pub tallies: Vec<Tally>,
    pub findings: Vec<Finding>,
    pub levels: Vec<LevelStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_path: Option<Vec<u32>>,
    pub reductions: Vec<ReductionResult>,
    pub diagonalization: Vec<DiagonalResult>,
    pub notices: Vec<String>,
    pub max_live_followers: usize,
    pub singleton_entries: usize,
    /// `|K|, |L|, |G|` per column and level, one entry each time they change.
    #[serde(default)]
    pub occupancy: Vec<Occupancy>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occupancy {
    pub tick: Tick,
    pub column: ColumnId,
    pub level: Level,
    pub k: u32,
    pub l: u32,
    pub g: u32,
}

impl AuditReport {
    pub fn failures(&self) -> u64 {
        self.tallies.iter().map(|t| t.failed).sum()
    }

    pub fn failed(&self, check: Check) -> u64 {
        self.tallies.iter().filter(|t| t.check == Some(check)).map(|t| t.failed).sum()
    }

    pub fn evaluated(&self, check: Check) -> u64 {
        self.tallies.iter().filter(|t| t.check == Some(check)).map(|t| t.evaluated).sum()
    }

    pub fn first(&self, check: Check) -> Option<&Finding> {
        self.findings.iter().find(|f| f.check == check)
    }
}

/// Empty state for a scenario, without any engine.
pub fn initial_world(scenario: &Scenario) -> Result<(World, Option<StrategyTree>), InputError> {
    scenario.validate()?;
    let o = scenario.capacity_override.clone();
    match scenario.engine {
        EngineKind::Mp => {
            let layout = LayoutMp::new(scenario.c, o)?;
            let g = layout.geometry.clone();
            let mut w = World::new(Locator::Mp(layout));
            for side in 0..2 {
                w.add_column(side, Column::new(g.clone()), side);
            }
            Ok((w, None))
        }
        EngineKind::Tree => {
            let tree = StrategyTree::build(scenario.depth, &scenario.tree_requirements())?;
            let layouts = tree.layouts(&o);
            let mut w = World::new(Locator::Tree(layouts.clone()));
            for n in tree.negative_nodes() {
                if let Requirement::N { e, .. } = n.requirement {
                    w.add_column(n.id, Column::new(layouts[&e].geometry(n.id)?), e);
                }
            }
            Ok((w, Some(tree)))
        }
    }
}

type Membership = BTreeMap<(ColumnId, Level, u8), BTreeSet<u64>>;

pub struct Auditor {
    scenario: Scenario,
    world: World,
    tree: Option<StrategyTree>,
    traced: Option<BTreeSet<ColumnId>>,
    next_tick: Tick,
    stages: u64,
    last_stage: BTreeMap<ColumnId, Tick>,
    streak: BTreeMap<ColumnId, u64>,
    longest: u64,
    window: Tick,
    tallies: BTreeMap<Check, (u64, u64)>,
    findings: Vec<Finding>,
    maxima: BTreeMap<(ColumnId, Level), [u32; 3]>,
    last_counts: BTreeMap<(ColumnId, Level), [u32; 3]>,
    occupancy: Vec<Occupancy>,
    window_membership: Option<Membership>,
    unstable: BTreeSet<(ColumnId, Level, u8)>,
    window_nodes: BTreeSet<u32>,
    /// Per `(follower, column)`: `(tick, v)` whenever the logged use changes.
    use_runs: BTreeMap<(u64, ColumnId), Vec<(Tick, Option<u64>)>>,
    ended: BTreeMap<u64, (Tick, Status)>,
    dropped: BTreeSet<(u64, ColumnId)>,
    columns_of: BTreeMap<u64, BTreeSet<ColumnId>>,
    appointed: Vec<u64>,
    max_live: usize,
}

impl Auditor {
    pub fn new(header: &LogHeader) -> Result<Self, InputError> {
        if header.schema != crate::log::SCHEMA || header.version != crate::log::SCHEMA_VERSION {
            return Err(InputError::BadField {
                field: "schema",
                detail: format!("unsupported log {} v{}", header.schema, header.version),
            });
        }
        let scenario = header.scenario.clone();
        let (world, tree) = initial_world(&scenario)?;
        let traced = match (&tree, &scenario.adversary.traced) {
            (Some(t), Some(pairs)) => Some(
                t.negative_nodes()
                    .filter(|n| matches!(n.requirement, Requirement::N { e, c } if pairs.contains(&(e, c))))
                    .map(|n| n.id)
                    .collect(),
            ),
            _ => None,
        };
        let window = scenario.window_start();
        Ok(Auditor {
            scenario,
            world,
            tree,
            traced,
            next_tick: 0,
            stages: 0,
            last_stage: BTreeMap::new(),
            streak: BTreeMap::new(),
            longest: 0,
            window,
            tallies: BTreeMap::new(),
            findings: Vec::new(),
            maxima: BTreeMap::new(),
            last_counts: BTreeMap::new(),
            occupancy: Vec::new(),
            window_membership: None,
            unstable: BTreeSet::new(),
            window_nodes: BTreeSet::new(),
            use_runs: BTreeMap::new(),
            ended: BTreeMap::new(),
            dropped: BTreeSet::new(),
            columns_of: BTreeMap::new(),
            appointed: Vec::new(),
            max_live: 0,
        })
    }

    fn tally(&mut self, check: Check, ok: bool, tick: Tick, witness: impl FnOnce() -> Witness) {
        let t = self.tallies.entry(check).or_default();
        t.0 += 1;
        if !ok {
            t.1 += 1;
            if t.1 as usize <= FINDINGS_PER_CHECK {
                self.findings.push(Finding { tick, check, witness: witness() });
            }
        }
    }

    fn is_mp(&self) -> bool {
        self.tree.is_none()
    }

    /// Lowest level a column allows; case 2 happens there.
    fn floor(&self, col: ColumnId) -> Level {
        self.world.columns[&col].geometry().min_level
    }

    fn canonical_a(&self, k: Level) -> u128 {
        capacity(if self.is_mp() { CapacityKind::Mp } else { CapacityKind::Tree }, k)
    }

    pub fn feed(&mut self, rec: &StageRecord) -> Result<(), InputError> {
        let s = rec.tick;
        let expected = self.next_tick;
        self.tally(Check::LogConsistency, s == expected, s, || Witness {
            detail: format!("record for tick {s}, expected {expected}"),
            ..Default::default()
        });
        self.next_tick = s + 1;

        self.world.begin_tick(s);
        for (i, ev) in rec.events.iter().enumerate() {
            self.world
                .apply(s, ev)
                .map_err(|err| InputError::Script { index: i, detail: format!("tick {s}: {err}") })?;
        }

        let met: BTreeMap<ColumnId, bool> =
            self.world.columns.iter().map(|(c, col)| (*c, col.obligations_met_now())).collect();
        for (c, ok) in &met {
            if self.traced.as_ref().map_or(false, |t| !t.contains(c)) {
                continue;
            }
            let run = self.streak.entry(*c).or_default();
            *run = if *ok { 0 } else { *run + 1 };
            self.longest = self.longest.max(*run);
        }
        self.check_stage_flags(rec, &met);
        let stage_cols: Vec<ColumnId> = if !rec.stage {
            Vec::new()
        } else if self.is_mp() {
            alloc::vec![0, 1]
        } else {
            rec.tau_stages.clone()
        };
        if s > 0 {
            self.check_traced(s, &stage_cols);
        }

        let mut pre: BTreeMap<u64, Follower> = BTreeMap::new();
        for f in &rec.followers {
            if let Some(old) = self.world.followers.get(&f.id) {
                pre.insert(f.id, old.clone());
            }
        }
        if let Some(id) = acting_of(rec) {
            if let Some(old) = self.world.followers.get(&id) {
                pre.insert(id, old.clone());
            }
        }
        let pre_uses = self.world.uses.clone();

        self.apply_deltas(rec);
        self.check_action(rec, &pre, &pre_uses);
        for c in &rec.choices {
            self.check_choice(s, c);
        }
        if let Some(v) = rec.violation() {
            let v = v.clone();
            self.check_violation(s, &v);
        }
        if s == 0 || !rec.followers.is_empty() || !rec.removed.is_empty() {
            self.check_structure(s);
        }
        self.check_psi_stable(s);
        self.check_trace_bound(s);
        self.track_sizes(s);

        if s >= self.window {
            self.window_nodes.extend(rec.path.iter().copied());
        }
        if rec.stage {
            self.stages += 1;
            for c in stage_cols {
                self.last_stage.insert(c, s);
            }
        }
        self.max_live = self.max_live.max(self.world.followers.len());
        Ok(())
    }

    fn check_stage_flags(&mut self, rec: &StageRecord, met: &BTreeMap<ColumnId, bool>) {
        let s = rec.tick;
        if s == 0 {
            self.tally(Check::LogConsistency, rec.stage, s, || Witness {
                detail: "tick 0 is always a stage".into(),
                ..Default::default()
            });
            return;
        }
        if self.is_mp() {
            let want = met.values().all(|b| *b);
            self.tally(Check::LogConsistency, want == rec.stage, s, || Witness {
                detail: format!("stage flag {} but obligations met is {want}", rec.stage),
                ..Default::default()
            });
        } else {
            for tau in rec.tau_stages.clone() {
                let ok = met.get(&tau).copied().unwrap_or(false) && rec.path.contains(&tau);
                self.tally(Check::LogConsistency, ok, s, || Witness {
                    column: Some(tau),
                    detail: "τ-stage without met obligations or off the walk".into(),
                    ..Default::default()
                });
            }
        }
    }

    /// At a stage, every box still holding its follower's value has it traced.
    fn check_traced(&mut self, s: Tick, cols: &[ColumnId]) {
        let mut bad = Vec::new();
        let mut n = 0usize;
        for f in self.world.followers.values() {
            for (col, p) in &f.pointers {
                if !cols.contains(col) || p.t >= s {
                    continue;
                }
                let column = &self.world.columns[col];
                if column.psi.uniform_value(&p.region()) != Some(p.t) {
                    continue;
                }
                n += 1;
                if column.trace.value_use(&p.region(), p.t).is_none() {
                    bad.push((f.id, *col, p.level));
                }
            }
        }
        for _ in 0..n.saturating_sub(bad.len()) {
            self.tally(Check::TracedAtStages, true, s, Witness::default);
        }
        for (id, col, k) in bad {
            self.tally(Check::TracedAtStages, false, s, || Witness {
                followers: alloc::vec![id],
                column: Some(col),
                level: Some(k),
                detail: "box value not traced at a stage".into(),
                ..Default::default()
            });
        }
    }

    fn apply_deltas(&mut self, rec: &StageRecord) {
        let s = rec.tick;
        for w in &rec.psi_writes {
            if let Some(c) = self.world.columns.get_mut(&w.column) {
                c.psi.write(&w.region, s);
            }
        }
        for r in &rec.removed {
            self.world.followers.remove(&r.follower);
            if r.status == Status::Enumerated {
                self.world.enumerated.insert(r.follower, s);
            }
            self.ended.insert(r.follower, (s, r.status));
        }
        for f in &rec.followers {
            if !self.world.followers.contains_key(&f.id) && !self.appointed.contains(&f.id) {
                self.appointed.push(f.id);
            }
            if let Some(old) = self.world.followers.get(&f.id) {
                for col in old.pointers.keys() {
                    if !f.pointers.contains_key(col) {
                        self.dropped.insert((f.id, *col));
                    }
                }
            }
            self.columns_of.entry(f.id).or_default().extend(f.pointers.keys().copied());
            self.world.followers.insert(f.id, f.clone());
        }
        for u in &rec.uses {
            self.world.uses.insert((u.follower, u.column), u.v);
            let runs = self.use_runs.entry((u.follower, u.column)).or_default();
            if runs.last().map(|(_, v)| *v) != Some(u.v) {
                runs.push((s, u.v));
            }
        }
        let live = &self.world.followers;
        self.world
            .uses
            .retain(|(x, col), _| live.get(x).map_or(false, |f| f.pointers.contains_key(col)));
    }

    fn check_action(&mut self, rec: &StageRecord, pre: &BTreeMap<u64, Follower>, pre_uses: &BTreeMap<(u64, ColumnId), Option<u64>>) {
        let s = rec.tick;
        match rec.action.clone() {
            Some(Action::Appoint { follower, requirement, node }) => {
                let f = self.world.followers.get(&follower).cloned();
                let ok = f.as_ref().map_or(false, |f| self.appointment_shape(f, requirement, node, s));
                self.tally(Check::LevelShape, ok, s, || Witness {
                    followers: alloc::vec![follower],
                    detail: "appointment parameters".into(),
                    ..Default::default()
                });
            }
            Some(Action::Promote { follower, column, case }) => {
                let Some(before) = pre.get(&follower).cloned() else {
                    self.tally(Check::LogConsistency, false, s, || Witness {
                        followers: alloc::vec![follower],
                        detail: "promotion of a follower that is not alive".into(),
                        ..Default::default()
                    });
                    return;
                };
                let r = self.last_stage.get(&column).copied().unwrap_or(0);
                let realised = self.world.pcf.value(before.requirement, follower) == Some(0);
                let permitted = before.top == column
                    && realised
                    && match pre_uses.get(&(follower, column)).copied().flatten() {
                        None => true,
                        Some(v) => self.world.oracle_of(column).changed_below(v, r, s),
                    };
                self.tally(Check::Permission, permitted, s, || Witness {
                    followers: alloc::vec![follower],
                    column: Some(column),
                    detail: format!("promoted without permission since tick {r}"),
                    ..Default::default()
                });
                match case {
                    1 => {
                        let ok = before.pointers.len() == 1
                            && self.world.enumerated.contains_key(&follower)
                            && !self.world.followers.contains_key(&follower);
                        self.tally(Check::LogConsistency, ok, s, || Witness {
                            followers: alloc::vec![follower],
                            detail: "case 1 needs a single column and enumeration".into(),
                            ..Default::default()
                        });
                    }
                    _ => {
                        let Some(after) = self.world.followers.get(&follower).cloned() else {
                            self.tally(Check::LogConsistency, false, s, || Witness {
                                followers: alloc::vec![follower],
                                detail: "promoted follower missing afterwards".into(),
                                ..Default::default()
                            });
                            return;
                        };
                        self.tally(Check::TopChange, after.top != before.top, s, || Witness {
                            followers: alloc::vec![follower],
                            column: Some(column),
                            detail: "top unchanged by a promotion".into(),
                            ..Default::default()
                        });
                        let dec = after.potential() < before.potential() && after.attentions == before.attentions + 1;
                        self.tally(Check::Potential, dec, s, || Witness {
                            followers: alloc::vec![follower],
                            detail: format!("potential {} -> {}", before.potential(), after.potential()),
                            ..Default::default()
                        });
                        let old_k = before.pointers.get(&column).map(|p| p.level);
                        let ok = match case {
                            2 => old_k == Some(self.floor(column)) && !after.pointers.contains_key(&column),
                            3 => {
                                after.pointers.get(&column).map(|p| (p.level, p.t)) == old_k.map(|k| (k - 1, s))
                            }
                            _ => false,
                        };
                        self.tally(Check::LevelShape, ok, s, || Witness {
                            followers: alloc::vec![follower],
                            column: Some(column),
                            detail: format!("case {case} from level {old_k:?}"),
                            ..Default::default()
                        });
                    }
                }
            }
            _ => {}
        }
        for f in &rec.followers {
            if Some(f.id) == acting_of(rec) {
                continue;
            }
            if let Some(before) = pre.get(&f.id) {
                let same = before.pointers == f.pointers && before.top == f.top;
                self.tally(Check::Potential, same, s, || Witness {
                    followers: alloc::vec![f.id],
                    detail: "parameters changed without attention".into(),
                    ..Default::default()
                });
            }
        }
    }

    fn appointment_shape(&self, f: &Follower, e: u32, node: Option<u32>, s: Tick) -> bool {
        if f.id != s || f.requirement != e || f.attentions != 0 || f.pointers.values().any(|p| p.t != s) {
            return false;
        }
        match (&self.tree, node) {
            (None, None) => {
                let p0 = f.pointers.get(&0);
                let p1 = f.pointers.get(&1);
                f.pointers.len() == 2
                    && f.top == 1
                    && p0.map_or(false, |p| p.level == e && !p.kind.is_private())
                    && p1.map_or(false, |p| p.level == e && p.kind.is_private())
            }
            (Some(tree), Some(sigma)) => {
                let rset = tree.inf_ancestors(sigma);
                let k = tree.node(sigma).len();
                let top = rset.last().copied();
                f.node == Some(sigma)
                    && Some(f.top) == top
                    && f.pointers.keys().copied().collect::<Vec<_>>() == rset
                    && f.pointers.iter().all(|(t, p)| p.level == k && p.kind.is_private() == (Some(*t) == top))
            }
            _ => false,
        }
    }

    /// Recomputes `β` and `m` from the surviving followers.
    fn check_choice(&mut self, s: Tick, c: &Choice) {
        let addr = c.address();
        let acting = self
            .world
            .followers
            .values()
            .find(|f| f.pointers.get(&c.column).map_or(false, |p| p.t == s && p.level == c.level && p.kind.address() == Some(&addr)))
            .map(|f| f.id);
        let others: Vec<&Follower> = self.world.followers.values().filter(|f| Some(f.id) != acting).collect();
        let beta = weakest_k(&others, c.column, c.level);
        let occupied = occupied_at(&others, c.column, c.level);
        let free = |m: u32| !occupied.iter().any(|(_, a)| *a == c.beta.child(m));
        let least = (0..c.m).all(|m| !free(m)) && free(c.m);
        let ok = acting.is_some()
            && beta == c.beta
            && c.beta.len() <= c.level as usize
            && u128::from(c.m) < self.canonical_a(c.level)
            && least;
        self.tally(Check::Bookkeeping, ok, s, || Witness {
            followers: acting.into_iter().collect(),
            column: Some(c.column),
            level: Some(c.level),
            addresses: alloc::vec![c.beta.clone(), beta.clone()],
            detail: format!("logged β⌢{} against recomputed β", c.m),
        });
    }

    fn check_violation(&mut self, s: Tick, v: &Violation) {
        let others: Vec<&Follower> = self.world.followers.values().filter(|f| Some(f.id) != v.acting).collect();
        let beta = weakest_k(&others, v.column, v.level);
        let occupied = occupied_at(&others, v.column, v.level);
        let cap = self.world.columns[&v.column].geometry().capacity(v.level);
        let confirmed = beta == v.beta
            && match v.kind {
                ViolationKind::BetaTooLong => beta.len() > v.level as usize,
                ViolationKind::NoFreeDigit => {
                    let taken = occupied.iter().filter(|(_, a)| beta.is_strict_prefix_of(a) && a.len() == beta.len() + 1).count();
                    taken as u128 >= cap
                }
            };
        let mut followers: Vec<u64> = occupied.iter().map(|(id, _)| *id).collect();
        followers.extend(v.acting);
        self.tally(Check::Bookkeeping, false, s, || Witness {
            followers,
            column: Some(v.column),
            level: Some(v.level),
            addresses: occupied.iter().map(|(_, a)| a.clone()).collect(),
            detail: format!(
                "{:?} at β = {:?} with alphabet {cap}{}",
                v.kind,
                v.beta,
                if confirmed { "" } else { " (not reproduced)" }
            ),
        });
    }

    fn groups(&self) -> BTreeMap<(ColumnId, Level), Vec<(&Follower, Class)>> {
        let mut out: BTreeMap<(ColumnId, Level), Vec<(&Follower, Class)>> = BTreeMap::new();
        for f in self.world.followers.values() {
            for (col, p) in &f.pointers {
                if let Some(class) = f.class_at(*col, p.level) {
                    out.entry((*col, p.level)).or_default().push((f, class));
                }
            }
        }
        out
    }

    fn check_structure(&mut self, s: Tick) {
        let mut results: Vec<(Check, bool, Witness)> = Vec::new();
        let groups = self.groups();
        for ((col, k), members) in &groups {
            let (col, k) = (*col, *k);
            let ks: Vec<&Follower> = members.iter().filter(|(_, c)| *c == Class::K).map(|(f, _)| *f).collect();
            let ls: Vec<&Follower> = members.iter().filter(|(_, c)| *c == Class::L).map(|(f, _)| *f).collect();
            let gs: Vec<&Follower> = members.iter().filter(|(_, c)| *c == Class::G).map(|(f, _)| *f).collect();
            let w = |ids: Vec<u64>, detail: String| Witness { followers: ids, column: Some(col), level: Some(k), addresses: Vec::new(), detail };
            let ids = |v: &[&Follower]| v.iter().map(|f| f.id).collect::<Vec<_>>();

            results.push((Check::BoundK, ks.len() <= k as usize, w(ids(&ks), format!("|K| = {} > {k}", ks.len()))));
            if self.is_mp() {
                results.push((Check::BoundL, ls.len() <= k as usize + 1, w(ids(&ls), format!("|L| = {} > {}", ls.len(), k + 1))));
            } else {
                let mut per_owner: BTreeMap<Option<u32>, Vec<u64>> = BTreeMap::new();
                for f in &ls {
                    per_owner.entry(f.node).or_default().push(f.id);
                }
                for (owner, v) in per_owner {
                    results.push((Check::BoundL, v.len() <= k as usize + 1, w(v.clone(), format!("{} L followers of node {owner:?}", v.len()))));
                }
                let b = capacity(CapacityKind::B, k);
                let kl = (ks.len() + ls.len()) as u128;
                results.push((Check::BoundKl, kl <= b, w(ids(&ks), format!("|KL| = {kl} > b({k}) = {b}"))));
            }
            let a = self.canonical_a(k);
            results.push((Check::BoundG, (gs.len() as u128) < a, w(ids(&gs), format!("|G| = {} ≥ a({k}) = {a}", gs.len()))));

            let carved: Vec<(u64, &Address)> = members.iter().filter_map(|(f, _)| f.address_at(col).map(|a| (f.id, a))).collect();
            let distinct: BTreeSet<&Address> = carved.iter().map(|(_, a)| *a).collect();
            results.push((
                Check::AlphaInjective,
                distinct.len() == carved.len(),
                Witness {
                    followers: carved.iter().map(|(i, _)| *i).collect(),
                    column: Some(col),
                    level: Some(k),
                    addresses: carved.iter().map(|(_, a)| (*a).clone()).collect(),
                    detail: "two followers share a box".into(),
                },
            ));
            for (id, a) in &carved {
                for len in 1..a.len() {
                    let p = a.prefix(len);
                    let ok = ks.iter().any(|x| x.id < *id && x.address_at(col) == Some(&p));
                    results.push((
                        Check::Forest,
                        ok,
                        Witness {
                            followers: alloc::vec![*id],
                            column: Some(col),
                            level: Some(k),
                            addresses: alloc::vec![(*a).clone(), p],
                            detail: "proper prefix is not a stronger K box".into(),
                        },
                    ));
                }
            }
            let mut chain: Vec<(u64, &Address)> = ks.iter().filter_map(|f| f.address_at(col).map(|a| (f.id, a))).collect();
            chain.sort();
            let linear = chain.windows(2).all(|p| p[0].1.is_strict_prefix_of(p[1].1));
            results.push((
                Check::KChain,
                linear,
                Witness {
                    followers: chain.iter().map(|(i, _)| *i).collect(),
                    column: Some(col),
                    level: Some(k),
                    addresses: chain.iter().map(|(_, a)| (*a).clone()).collect(),
                    detail: "K boxes not a priority-ordered chain".into(),
                },
            ));
        }

        let mut running: Option<(u64, Tick)> = None;
        for f in self.world.followers.values() {
            let lo = f.pointers.values().map(|p| p.t).min().unwrap_or(0);
            let hi = f.pointers.values().map(|p| p.t).max().unwrap_or(0);
            if let Some((prev, t)) = running {
                results.push((
                    Check::TOrdering,
                    t < lo,
                    Witness { followers: alloc::vec![prev, f.id], detail: format!("t {t} not below {lo}"), ..Default::default() },
                ));
            }
            if running.map_or(true, |(_, t)| hi > t) {
                running = Some((f.id, hi));
            }
            results.push((
                Check::LevelShape,
                self.level_shape(f),
                Witness { followers: alloc::vec![f.id], detail: format!("levels {:?}, top {}", levels(f), f.top), ..Default::default() },
            ));
        }
        for (check, ok, w) in results {
            self.tally(check, ok, s, || w);
        }
    }

    /// Longer columns sit at most one level below shorter ones, never below
    /// their floor, and the top is the longest column at the highest level.
    fn level_shape(&self, f: &Follower) -> bool {
        if f.pointers.is_empty() || !f.pointers.contains_key(&f.top) {
            return false;
        }
        let mut by_len: Vec<(u32, Level)> = f.pointers.iter().map(|(c, p)| (self.column_len(*c), p.level)).collect();
        by_len.sort_by(|a, b| b.0.cmp(&a.0));
        let max = by_len.iter().map(|(_, k)| *k).max().unwrap_or(0);
        let min = by_len.iter().map(|(_, k)| *k).min().unwrap_or(0);
        let monotone = by_len.windows(2).all(|w| w[0].1 <= w[1].1);
        let floors = f.pointers.iter().all(|(c, p)| p.level >= self.floor(*c));
        let top_len = self.column_len(f.top);
        let top_ok = f.pointers[&f.top].level == max
            && by_len.iter().filter(|(_, k)| *k == max).all(|(l, _)| *l <= top_len);
        max - min <= 1 && monotone && floors && top_ok
    }

    /// Rank used for the level order: node length, with side 1 above side 0.
    fn column_len(&self, col: ColumnId) -> u32 {
        match &self.tree {
            Some(t) => t.node(col).len(),
            None => col,
        }
    }

    fn check_psi_stable(&mut self, s: Tick) {
        let mut bad = Vec::new();
        let mut n = 0u64;
        for f in self.world.followers.values() {
            for (col, p) in &f.pointers {
                let class = f.class_at(*col, p.level);
                let applies = class == Some(Class::G) || (class == Some(Class::L) && !f.realised);
                if !applies {
                    continue;
                }
                n += 1;
                if self.world.columns[col].psi.uniform_value(&p.region()) != Some(p.t) {
                    bad.push((f.id, *col, p.level));
                }
            }
        }
        let t = self.tallies.entry(Check::PsiStable).or_default();
        t.0 += n - bad.len() as u64;
        for (id, col, k) in bad {
            self.tally(Check::PsiStable, false, s, || Witness {
                followers: alloc::vec![id],
                column: Some(col),
                level: Some(k),
                detail: "ψ changed on a G box or an unrealised L box".into(),
                ..Default::default()
            });
        }
    }

    fn check_trace_bound(&mut self, s: Tick) {
        let over: Vec<(ColumnId, Region, usize)> = self
            .world
            .columns
            .iter()
            .filter_map(|(c, col)| col.trace.overloaded().map(|(r, n)| (*c, r, n)))
            .collect();
        if over.is_empty() {
            self.tally(Check::TraceBound, true, s, Witness::default);
        }
        for (c, r, n) in over {
            self.tally(Check::TraceBound, false, s, || Witness {
                column: Some(c),
                level: Some(r.level),
                addresses: r.kind.address().cloned().into_iter().collect(),
                detail: format!("{n} values on one input"),
                ..Default::default()
            });
        }
    }

    fn membership(&self) -> Membership {
        let mut out: Membership = BTreeMap::new();
        for ((col, k), members) in self.groups() {
            for (f, class) in members {
                out.entry((col, k, class as u8)).or_default().insert(f.id);
            }
        }
        out
    }

    fn track_sizes(&mut self, s: Tick) {
        let counts: Vec<((ColumnId, Level), [u32; 3])> = self
            .groups()
            .into_iter()
            .map(|(key, members)| {
                let mut n = [0u32; 3];
                for (_, c) in members {
                    n[class_index(c)] += 1;
                }
                (key, n)
            })
            .collect();
        let mut now: BTreeMap<(ColumnId, Level), [u32; 3]> = counts.into_iter().collect();
        for key in self.last_counts.keys() {
            now.entry(*key).or_insert([0; 3]);
        }
        for ((col, k), n) in &now {
            let m = self.maxima.entry((*col, *k)).or_default();
            for i in 0..3 {
                m[i] = m[i].max(n[i]);
            }
            if self.last_counts.get(&(*col, *k)).copied().unwrap_or([0; 3]) != *n {
                self.occupancy.push(Occupancy { tick: s, column: *col, level: *k, k: n[0], l: n[1], g: n[2] });
            }
        }
        now.retain(|_, n| *n != [0; 3]);
        self.last_counts = now;
        if s >= self.window {
            let now = self.membership();
            if let Some(prev) = &self.window_membership {
                let keys: BTreeSet<_> = prev.keys().chain(now.keys()).cloned().collect();
                for key in keys {
                    if prev.get(&key) != now.get(&key) {
                        self.unstable.insert(key);
                    }
                }
            }
            self.window_membership = Some(now);
        }
    }

    pub fn finish(mut self) -> AuditReport {
        let gap = self.scenario.adversary.gap;
        let final_unmet = self.streak.values().copied().max().unwrap_or(0);
        let classification =
            if final_unmet >= gap { Classification::Defaulted } else { Classification::CompliantAtHorizon };
        let mut notices = Vec::new();

        let final_members = self.membership();
        let mut levels = Vec::new();
        let keys: BTreeSet<(ColumnId, Level)> = self.maxima.keys().copied().collect();
        for (col, k) in keys {
            let m = self.maxima[&(col, k)];
            let size = |c: u8| final_members.get(&(col, k, c)).map_or(0, |v| v.len() as u32);
            let k_key = (col, k, Class::K as u8);
            let k_limit = (!self.unstable.contains(&k_key))
                .then(|| final_members.get(&k_key).map(|v| v.iter().copied().collect()).unwrap_or_default());
            levels.push(LevelStats {
                column: col,
                level: k,
                max_k: m[0],
                max_l: m[1],
                max_g: m[2],
                final_k: size(Class::K as u8),
                final_l: size(Class::L as u8),
                final_g: size(Class::G as u8),
                k_limit,
            });
        }

        let true_path = self.tree.as_ref().map(|t| {
            let mut path = alloc::vec![t.root().id];
            let mut node = t.root().id;
            loop {
                let next = t.node(node).children.iter().copied().filter(|c| self.window_nodes.contains(c)).min_by_key(|c| {
                    t.node(*c).path.last().copied().unwrap_or(INF)
                });
                match next {
                    Some(c) => {
                        path.push(c);
                        node = c;
                    }
                    None => break,
                }
            }
            path
        });
        if true_path.is_some() {
            notices.push(format!(
                "true path approximated by nodes visited from tick {} on; late-settling adversaries can shift it",
                self.window
            ));
        }

        let mut reductions = Vec::new();
        let mut diagonalization = Vec::new();
        if self.next_tick < self.scenario.horizon {
            notices.push(format!(
                "run stopped at tick {} before the horizon {}; reduction and diagonalization checks skipped",
                self.next_tick, self.scenario.horizon
            ));
        } else if classification == Classification::Defaulted {
            notices.push(format!(
                "adversary left an obligation unmet for the final {final_unmet} ticks (gap {gap}); reduction and diagonalization checks skipped"
            ));
        } else {
            reductions = self.reductions(&levels, &final_members);
            for r in reductions.clone() {
                let ok = r.disagree.is_empty();
                self.tally(Check::Reduction, ok, self.next_tick, || Witness {
                    followers: r.disagree.clone(),
                    column: Some(r.column),
                    detail: format!("{} of {} answers disagree with E", r.disagree.len(), r.checked),
                    ..Default::default()
                });
            }
            diagonalization = self.diagonalization(true_path.as_deref());
            for d in diagonalization.clone() {
                let ok = d.result != Diagonal::Open;
                self.tally(Check::Diagonalization, ok, self.next_tick, || Witness {
                    detail: format!("requirement {} at node {:?} open", d.requirement, d.node),
                    ..Default::default()
                });
            }
        }

        let tallies = ALL_CHECKS
            .iter()
            .map(|c| {
                let (evaluated, failed) = self.tallies.get(c).copied().unwrap_or((0, 0));
                Tally { check: Some(*c), evaluated, failed }
            })
            .collect();
        AuditReport {
            scenario: self.scenario.name.clone(),
            ticks: self.next_tick,
            stages: self.stages,
            classification,
            longest_unmet: self.longest,
            final_unmet,
            gap,
            window_start: self.window,
            tallies,
            findings: self.findings,
            levels,
            true_path,
            reductions,
            diagonalization,
            notices,
            max_live_followers: self.max_live,
            singleton_entries: self.world.singleton_entries(),
            occupancy: self.occupancy,
        }
    }

    /// The oracle procedure for one column: the earliest tick after `x` at
    /// which `x` is cancelled, enumerated, or holds a computation whose use
    /// the final oracle never changes below again.
    pub fn reduce(&self, x: u64, col: ColumnId) -> Answer {
        let ended = self.ended.get(&x).copied();
        let oracle = self.world.oracle_of(col);
        let horizon = self.next_tick;
        let certified = self.use_runs.get(&(x, col)).and_then(|runs| {
            runs.iter()
                .find(|(s, v)| v.map_or(false, |v| !oracle.changed_below(v, *s, horizon)) && ended.map_or(true, |(t, _)| *s < t))
                .map(|(s, _)| *s)
        });
        match (ended, certified) {
            (Some((t, st)), c) if c.map_or(true, |c| t <= c) => {
                if st == Status::Enumerated {
                    Answer::InE
                } else {
                    Answer::NotInE
                }
            }
            (_, Some(_)) => Answer::NotInE,
            _ => Answer::ExceededHorizon,
        }
    }

    fn reductions(&self, levels: &[LevelStats], members: &Membership) -> Vec<ReductionResult> {
        let cols: Vec<ColumnId> = self.world.columns.keys().copied().collect();
        let mut out = Vec::new();
        for col in cols {
            let mut r = ReductionResult { column: col, ..Default::default() };
            for x in &self.appointed {
                if !self.columns_of.get(x).map_or(false, |c| c.contains(&col)) {
                    continue;
                }
                r.checked += 1;
                let truth = self.world.enumerated.contains_key(x);
                match self.reduce(*x, col) {
                    Answer::InE if truth => r.agree += 1,
                    Answer::NotInE if !truth => r.agree += 1,
                    Answer::ExceededHorizon if self.dropped.contains(&(*x, col)) => r.allowed.push(*x),
                    _ => r.disagree.push(*x),
                }
            }
            if self.is_mp() && col == 1 {
                let c = self.scenario.c;
                let k_limit: Vec<u64> = levels
                    .iter()
                    .find(|l| l.column == 0 && l.level == c)
                    .and_then(|l| l.k_limit.clone())
                    .unwrap_or_default();
                let fits = r.allowed.len() <= c as usize && r.allowed.iter().all(|x| k_limit.contains(x));
                if !fits {
                    r.disagree.append(&mut r.allowed);
                }
            }
            if let Some(tree) = &self.tree {
                // A follower that lost this column settled in K or L of a
                // shorter negative node at a level no higher than this node's length.
                let node = tree.node(col);
                let settled = |x: &u64| {
                    tree.negative_nodes().filter(|rho| rho.len() < node.len() && node.path.starts_with(&rho.path)).any(|rho| {
                        (0..=node.len()).any(|k| {
                            [Class::K, Class::L].iter().any(|c| {
                                let key = (rho.id, k, *c as u8);
                                !self.unstable.contains(&key) && members.get(&key).map_or(false, |m| m.contains(x))
                            })
                        })
                    })
                };
                let (fine, bad): (Vec<u64>, Vec<u64>) = r.allowed.iter().partition(|x| settled(x));
                r.allowed = fine;
                r.disagree.extend(bad);
            }
            out.push(r);
        }
        out
    }

    fn diagonalization(&self, path: Option<&[u32]>) -> Vec<DiagonalResult> {
        let targets: Vec<(Option<u32>, u32)> = match (&self.tree, path) {
            (Some(t), Some(p)) => p
                .iter()
                .filter_map(|n| match t.node(*n).requirement {
                    Requirement::P { e } => Some((Some(*n), e)),
                    Requirement::N { .. } => None,
                })
                .collect(),
            _ => self.scenario.active_requirements().into_iter().map(|e| (None, e)).collect(),
        };
        targets
            .into_iter()
            .map(|(node, e)| {
                let witnessed = self.world.enumerated.keys().find(|x| self.world.pcf.value(e, **x) == Some(0));
                let unrealised = self
                    .world
                    .followers
                    .values()
                    .find(|f| f.requirement == e && f.node == node && self.world.pcf.value(e, f.id) != Some(0));
                let result = match (witnessed, unrealised) {
                    (Some(x), _) => Diagonal::Witnessed { x: *x },
                    (None, Some(f)) => Diagonal::Unrealised { x: f.id },
                    _ => Diagonal::Open,
                };
                DiagonalResult { node, requirement: e, result }
            })
            .collect()
    }
}

fn acting_of(rec: &StageRecord) -> Option<u64> {
    match &rec.action {
        Some(Action::Promote { follower, .. }) | Some(Action::Appoint { follower, .. }) => Some(*follower),
        Some(Action::Violation(v)) => v.acting,
        None => None,
    }
}

fn class_index(c: Class) -> usize {
    match c {
        Class::K => 0,
        Class::L => 1,
        Class::G => 2,
    }
}

fn levels(f: &Follower) -> Vec<(ColumnId, Level)> {
    f.pointers.iter().map(|(c, p)| (*c, p.level)).collect()
}

fn weakest_k(followers: &[&Follower], col: ColumnId, k: Level) -> Address {
    followers
        .iter()
        .filter(|f| f.class_at(col, k) == Some(Class::K))
        .max_by_key(|f| f.id)
        .and_then(|f| f.address_at(col).cloned())
        .unwrap_or_default()
}

fn occupied_at(followers: &[&Follower], col: ColumnId, k: Level) -> Vec<(u64, Address)> {
    followers
        .iter()
        .filter(|f| f.pointers.get(&col).map_or(false, |p| p.level == k))
        .filter_map(|f| f.address_at(col).map(|a| (f.id, a.clone())))
        .collect()
}

/// Audits a whole log.
pub fn audit<'a>(header: &LogHeader, records: impl IntoIterator<Item = &'a StageRecord>) -> Result<AuditReport, InputError> {
    let mut a = Auditor::new(header)?;
    for r in records {
        a.feed(r)?;
    }
    Ok(a.finish())
}

//! Adversaries: the oracles, traces and halting declarations the
//! construction runs against.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boxes::{Address, BoxKind};
use crate::cea::{Blocked, Column, Draft, Region, Tick};
use crate::error::InputError;
use crate::follower::ColumnId;
use crate::scenario::{PolicyKind, ScriptEvent};
use crate::world::{Event, RegionSpec, World};

pub trait Policy {
    /// Moves for `tick`, given the state after the previous tick.
    fn next_events(&mut self, world: &World, tick: Tick) -> Vec<Event>;
}

/// Settings shared by the built-in policies.
#[derive(Clone, Debug)]
pub struct PolicySettings {
    pub kind: PolicyKind,
    pub seed: u64,
    pub quiesce_at: Tick,
    /// Columns whose obligations the adversary fulfils; `None` means all.
    pub traced: Option<BTreeSet<ColumnId>>,
    pub permit_per_mille: u32,
    pub realise_per_mille: u32,
    pub refuse_per_mille: u32,
}

pub fn build(settings: PolicySettings, script: &[ScriptEvent]) -> Result<Box<dyn Policy>, InputError> {
    Ok(match settings.kind {
        PolicyKind::Scripted => Box::new(Scripted::new(script.to_vec())?),
        _ => Box::new(Builtin::new(settings)),
    })
}

/// Replays a fixed event list.
#[derive(Clone, Debug)]
pub struct Scripted {
    events: Vec<ScriptEvent>,
    cursor: usize,
}

impl Scripted {
    pub fn new(events: Vec<ScriptEvent>) -> Result<Self, InputError> {
        for (i, w) in events.windows(2).enumerate() {
            if w[1].tick < w[0].tick {
                return Err(InputError::Script { index: i + 1, detail: alloc::format!("tick {} out of order", w[1].tick) });
            }
        }
        Ok(Scripted { events, cursor: 0 })
    }
}

impl Policy for Scripted {
    fn next_events(&mut self, _world: &World, tick: Tick) -> Vec<Event> {
        let mut out = Vec::new();
        while let Some(ev) = self.events.get(self.cursor) {
            if ev.tick > tick {
                break;
            }
            if ev.tick == tick {
                out.push(ev.event.clone());
            }
            self.cursor += 1;
        }
        out
    }
}

/// Permissive, stonewall, see-saw and random policies.
#[derive(Clone, Debug)]
pub struct Builtin {
    s: PolicySettings,
    rng: ChaCha8Rng,
    /// See-saw: index into the oracle list of the side currently favoured.
    favoured: usize,
    /// `(follower, column, use)` already granted.
    granted: BTreeSet<(u64, ColumnId, u64)>,
}

/// What one column needs this tick.
struct ColumnPlan {
    posts: Vec<Draft>,
    extract: Option<u64>,
    unmet: bool,
}

impl Builtin {
    pub fn new(s: PolicySettings) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(s.seed);
        Builtin { s, rng, favoured: 0, granted: BTreeSet::new() }
    }

    fn roll(&mut self, per_mille: u32) -> bool {
        self.rng.gen_range(0..1000u32) < per_mille
    }

    fn extracts(&self) -> bool {
        self.s.kind != PolicyKind::Stonewall
    }

    fn plan(&self, world: &World, col: ColumnId, tick: Tick) -> ColumnPlan {
        let column = &world.columns[&col];
        let mut obls = column.unmet_now();
        let mut plan = ColumnPlan { posts: Vec::new(), extract: None, unmet: !obls.is_empty() };
        obls.sort_by_key(|o| core::cmp::Reverse(depth(&o.cell)));
        let mut candidates: Vec<(u64, u64)> = Vec::new();
        for ob in obls {
            if plan.posts.iter().any(|d| d.value == ob.value && d.reaches(&ob.cell)) {
                continue;
            }
            let mut trial = plan.posts.clone();
            match cover(column, &ob.cell, ob.value, &mut trial) {
                Ok(()) => plan.posts = trial,
                Err(c) => candidates.extend(c),
            }
        }
        if self.extracts() {
            if let Some((_, u)) = candidates.iter().max_by_key(|(_, u)| *u) {
                plan.extract = world.oracle_of(col).largest_nonmember_below(*u);
            }
        }
        let _ = tick;
        plan
    }

    /// The strongest realised follower whose current top use has not been
    /// granted yet, among columns governed by `oracle`.
    fn awaiting(&self, world: &World, oracle: Option<u32>) -> Vec<(u64, ColumnId, u64)> {
        world
            .followers
            .values()
            .filter(|f| f.realised)
            .filter(|f| oracle.map_or(true, |o| world.column_oracle[&f.top] == o))
            .filter_map(|f| world.uses.get(&(f.id, f.top)).copied().flatten().map(|v| (f.id, f.top, v)))
            .filter(|g| !self.granted.contains(g))
            .collect()
    }

    fn grant(&mut self, world: &World, g: (u64, ColumnId, u64), out: &mut Vec<Event>) -> bool {
        let set = world.column_oracle[&g.1];
        match world.oracles[&set].largest_nonmember_below(g.2) {
            Some(element) => {
                out.push(Event::Enumerate { set, element });
                self.granted.insert(g);
                true
            }
            None => false,
        }
    }
}

fn depth(r: &Region) -> usize {
    match &r.kind {
        BoxKind::Private(_) => usize::MAX,
        BoxKind::Carved(a) => a.len(),
    }
}

/// Adds axioms to `posts` so that `value` is traced on every input of
/// `region` whose current value it is. Sub-boxes that cannot take `value`
/// are left out of the axiom and handled on their own. Returns stale
/// `(value, use)` pairs to extract when posting alone cannot do it.
fn cover(column: &Column, region: &Region, value: u64, posts: &mut Vec<Draft>) -> Result<(), Vec<(u64, u64)>> {
    let trace = &column.trace;
    let whole = Draft { region: region.clone(), except: Vec::new(), value };
    let blocked = trace.blocking_draft(&whole, posts);
    if blocked.is_empty() {
        posts.push(whole);
        return Ok(());
    }
    let required: Vec<(u64, u64)> = blocked
        .iter()
        .filter(|b| column.psi.value(&b.cell) == value)
        .flat_map(|b| b.values.iter().filter(|(v, u)| **v != value && **u != u64::MAX).map(|(v, u)| (*v, *u)))
        .collect();
    if !required.is_empty() || blocked.iter().any(|b| column.psi.value(&b.cell) == value) {
        return Err(required);
    }
    let alpha = match &region.kind {
        BoxKind::Carved(a) if blocked.iter().all(|b| depth(&b.cell) > a.len()) => a.clone(),
        _ => {
            let cur = |b: &Blocked| column.psi.value(&b.cell);
            return Err(blocked
                .iter()
                .flat_map(|b| b.values.iter().filter(move |(v, u)| **v != cur(b) && **u != u64::MAX))
                .map(|(v, u)| (*v, *u))
                .collect());
        }
    };
    let except: BTreeSet<u32> = blocked.iter().filter_map(|b| b.cell.kind.address()).map(|c| c.0[alpha.len()]).collect();
    let holed = Draft { region: region.clone(), except: except.iter().copied().collect(), value };
    if !trace.blocking_draft(&holed, posts).is_empty() {
        return Err(required);
    }
    posts.push(holed);
    for m in except {
        let child = Region::carved(region.level, alpha.child(m));
        if column.psi.uniform_value(&child).map_or(false, |u| u != value) {
            continue;
        }
        if trace.value_use(&child, value).is_some() || posts.iter().any(|d| d.value == value && d.reaches(&child)) {
            continue;
        }
        cover(column, &child, value, posts)?;
    }
    Ok(())
}

impl Policy for Builtin {
    fn next_events(&mut self, world: &World, tick: Tick) -> Vec<Event> {
        let mut out = Vec::new();
        let active = tick < self.s.quiesce_at;
        let stonewall = self.s.kind == PolicyKind::Stonewall;

        if active {
            let undeclared: Vec<(u32, u64)> = world
                .followers
                .values()
                .filter(|f| !world.pcf.declared(f.requirement, f.id))
                .map(|f| (f.requirement, f.id))
                .collect();
            for (e, x) in undeclared {
                if self.s.kind == PolicyKind::Random {
                    let r = self.rng.gen_range(0..1000u32);
                    if r < self.s.realise_per_mille {
                        out.push(Event::DeclareHalt { e, x, value: 0 });
                    } else if r < self.s.realise_per_mille + self.s.refuse_per_mille {
                        out.push(Event::DeclareHalt { e, x, value: 1 });
                    }
                } else {
                    out.push(Event::DeclareHalt { e, x, value: 0 });
                }
            }
        }

        let mut any_unmet = false;
        for col in world.columns.keys().copied().collect::<Vec<_>>() {
            if self.s.traced.as_ref().map_or(false, |t| !t.contains(&col)) {
                continue;
            }
            let plan = self.plan(world, col, tick);
            any_unmet |= plan.unmet;
            if let Some(element) = plan.extract {
                out.push(Event::Enumerate { set: world.column_oracle[&col], element });
                continue;
            }
            for d in plan.posts {
                out.push(Event::PostAxiom {
                    column: col,
                    region: RegionSpec::Box(d.region),
                    except: d.except,
                    value: d.value,
                    use_: tick + 1,
                });
            }
        }

        if !active || stonewall || any_unmet {
            return out;
        }
        let oracles: Vec<u32> = world.oracles.keys().copied().collect();
        match self.s.kind {
            PolicyKind::Permissive => {
                let mut seen = BTreeMap::new();
                for g in self.awaiting(world, None) {
                    seen.entry(world.column_oracle[&g.1]).or_insert(g);
                }
                for g in seen.into_values() {
                    self.grant(world, g, &mut out);
                }
            }
            PolicyKind::SeeSaw => {
                let o = oracles[self.favoured % oracles.len()];
                if let Some(g) = self.awaiting(world, Some(o)).first().copied() {
                    if self.grant(world, g, &mut out) {
                        self.favoured += 1;
                    }
                }
            }
            PolicyKind::Random => {
                for o in oracles {
                    if !self.roll(self.s.permit_per_mille) {
                        continue;
                    }
                    let waiting = self.awaiting(world, Some(o));
                    if waiting.is_empty() {
                        continue;
                    }
                    let g = waiting[self.rng.gen_range(0..waiting.len())];
                    self.grant(world, g, &mut out);
                }
            }
            PolicyKind::Stonewall | PolicyKind::Scripted => {}
        }
        out
    }
}

/// The region of a single explicit input, used by hand-written scripts.
pub fn point_region(level: u32, address: Address) -> Region {
    Region { level, kind: BoxKind::Carved(address) }
}

//! The two-sided construction: followers move between sides 0 and 1 one
//! permission at a time until both sides let them into E.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::boxes::{BoxKind, CapacityOverride, Geometry, LayoutMp, Level};
use crate::cea::{Column, Region, Tick};
use crate::error::InputError;
use crate::follower::{choose_box, ColumnId, Follower, Pointer, Status};
use crate::log::{Action, PsiWrite, Removal, StageRecord};
use crate::world::{Locator, World};
use crate::Engine;

#[derive(Clone, Debug)]
pub struct MpEngine {
    c: Level,
    requirements: Vec<u32>,
    geometry: Geometry,
    world: World,
    last_stage: Tick,
}

impl MpEngine {
    pub fn new(c: Level, requirements: Vec<u32>, overridden: Option<CapacityOverride>) -> Result<Self, InputError> {
        let layout = LayoutMp::new(c, overridden)?;
        let geometry = layout.geometry.clone();
        let mut world = World::new(Locator::Mp(layout));
        for side in 0..2 {
            world.add_column(side, Column::new(geometry.clone()), side);
        }
        Ok(MpEngine { c, requirements, geometry, world, last_stage: 0 })
    }

    pub fn last_stage(&self) -> Tick {
        self.last_stage
    }

    fn permitted(&self, x: &Follower, r: Tick, s: Tick) -> bool {
        match self.world.uses.get(&(x.id, x.top)).copied().flatten() {
            None => true,
            Some(v) => self.world.oracle_of(x.top).changed_below(v, r, s),
        }
    }

    fn remove(&mut self, id: u64, status: Status, rec: &mut StageRecord) {
        if let Some(mut f) = self.world.followers.remove(&id) {
            f.status = status;
            self.world.uses.retain(|(x, _), _| *x != id);
            rec.removed.push(Removal { follower: id, status });
        }
    }

    fn cancel_where(&mut self, rec: &mut StageRecord, pred: impl Fn(&Follower) -> bool) {
        let ids: Vec<u64> = self.world.followers.values().filter(|f| pred(f)).map(|f| f.id).collect();
        for id in ids {
            self.remove(id, Status::Cancelled, rec);
        }
    }

    fn write(&mut self, col: ColumnId, region: Region, s: Tick, rec: &mut StageRecord) {
        self.world.columns.get_mut(&col).expect("side").psi.write(&region, s);
        rec.psi_writes.push(PsiWrite { column: col, region });
    }

    fn appoint(&mut self, e: u32, s: Tick, rec: &mut StageRecord, touched: &mut BTreeSet<u64>) -> bool {
        self.cancel_where(rec, |f| f.requirement > e);
        let choice = match choose_box(self.world.followers.values(), None, 0, e, &self.geometry) {
            Ok(c) => c,
            Err(v) => {
                rec.action = Some(Action::Violation(v));
                return false;
            }
        };
        let mut pointers = BTreeMap::new();
        pointers.insert(0, Pointer { level: e, kind: BoxKind::Carved(choice.address()), t: s });
        pointers.insert(1, Pointer { level: e, kind: BoxKind::Private(0), t: s });
        let f = Follower {
            id: s,
            requirement: e,
            node: None,
            pointers,
            top: 1,
            realised: self.world.pcf.value(e, s) == Some(0),
            attentions: 0,
            status: Status::Alive,
        };
        self.write(0, Region::carved(e, choice.address()), s, rec);
        self.write(1, Region::private(e, 0), s, rec);
        rec.choices.push(choice);
        self.world.followers.insert(s, f);
        touched.insert(s);
        rec.action = Some(Action::Appoint { follower: s, requirement: e, node: None });
        true
    }

    fn promote(&mut self, id: u64, s: Tick, rec: &mut StageRecord, touched: &mut BTreeSet<u64>) -> bool {
        self.cancel_where(rec, |f| f.id > id);
        let x = self.world.followers[&id].clone();
        let i = x.top;
        if !x.pointers.contains_key(&1) {
            rec.action = Some(Action::Promote { follower: id, column: i, case: 1 });
            self.world.enumerated.insert(id, s);
            self.remove(id, Status::Enumerated, rec);
            let e = x.requirement;
            self.cancel_where(rec, |f| f.requirement == e);
            return true;
        }
        let mut y = x.clone();
        y.attentions += 1;
        if i == 1 && x.pointers[&1].level == self.c {
            y.pointers.remove(&1);
            y.top = 0;
            rec.action = Some(Action::Promote { follower: id, column: i, case: 2 });
        } else {
            let k = x.pointers[&i].level - 1;
            let choice = match choose_box(self.world.followers.values(), Some(id), i, k, &self.geometry) {
                Ok(c) => c,
                Err(v) => {
                    rec.action = Some(Action::Violation(v));
                    return false;
                }
            };
            let region = Region::carved(k, choice.address());
            y.pointers.insert(i, Pointer { level: k, kind: region.kind.clone(), t: s });
            y.top = 1 - i;
            self.write(i, region, s, rec);
            rec.choices.push(choice);
            rec.action = Some(Action::Promote { follower: id, column: i, case: 3 });
        }
        self.world.followers.insert(id, y);
        touched.insert(id);
        true
    }
}

impl Engine for MpEngine {
    fn world(&self) -> &World {
        &self.world
    }

    fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    fn step(&mut self, s: Tick) -> StageRecord {
        let mut rec = StageRecord::new(s);
        if s > 0 && !self.world.columns.values().all(Column::obligations_met_now) {
            return rec;
        }
        rec.stage = true;
        if s == 0 {
            self.last_stage = 0;
            return rec;
        }
        let r = self.last_stage;
        let mut touched = BTreeSet::new();
        for f in self.world.followers.values_mut() {
            let now = self.world.pcf.value(f.requirement, f.id) == Some(0);
            if now != f.realised {
                f.realised = now;
                touched.insert(f.id);
            }
        }

        let mut act: Option<(u32, Option<u64>)> = None;
        for &e in &self.requirements {
            if self.world.satisfied(e) {
                continue;
            }
            let mine: Vec<&Follower> = self.world.followers.values().filter(|f| f.requirement == e).collect();
            if let Some(x) = mine.iter().find(|x| x.realised && self.permitted(x, r, s)) {
                act = Some((e, Some(x.id)));
                break;
            }
            if mine.iter().all(|x| x.realised) {
                act = Some((e, None));
                break;
            }
        }
        let ok = match act {
            Some((e, None)) => self.appoint(e, s, &mut rec, &mut touched),
            Some((_, Some(x))) => self.promote(x, s, &mut rec, &mut touched),
            None => true,
        };
        if ok {
            self.refresh_uses(&mut rec);
            rec.sizes = crate::sizes(&self.world, &[0, 1]);
        }
        for id in touched {
            if let Some(f) = self.world.followers.get(&id) {
                rec.followers.push(f.clone());
            }
        }
        self.last_stage = s;
        rec
    }
}

impl MpEngine {
    fn refresh_uses(&mut self, rec: &mut StageRecord) {
        let mut fresh = Vec::new();
        for f in self.world.followers.values() {
            for (col, p) in &f.pointers {
                let v = self.world.columns[col].trace.value_use(&p.region(), p.t);
                fresh.push((f.id, *col, v));
            }
        }
        self.world.uses.clear();
        for (id, col, v) in fresh {
            self.world.uses.insert((id, col), v);
            rec.uses.push(crate::log::UseEntry { follower: id, column: col, v });
        }
    }
}

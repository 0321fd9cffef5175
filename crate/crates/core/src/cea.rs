//! Monotone enumerations, oracle-relative traces with uses, the functions
//! written by the construction, and the stage predicate built from them.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::boxes::{residual_cells, Address, BoxKind, Geometry, Level};
use crate::error::InputError;

pub type Tick = u64;

/// A monotone set with a tick-stamped enumeration log.
#[derive(Clone, Debug, Default)]
pub struct CeSet {
    log: Vec<(Tick, u64)>,
    members: BTreeSet<u64>,
}

impl CeSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if `x` was already present.
    pub fn enumerate(&mut self, tick: Tick, x: u64) -> bool {
        if !self.members.insert(x) {
            return false;
        }
        debug_assert!(self.log.last().map_or(true, |(t, _)| *t <= tick));
        self.log.push((tick, x));
        true
    }

    pub fn contains(&self, x: u64) -> bool {
        self.members.contains(&x)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn log(&self) -> &[(Tick, u64)] {
        &self.log
    }

    /// Whether some element below `u` was enumerated at a tick in `(after, upto]`.
    pub fn changed_below(&self, u: u64, after: Tick, upto: Tick) -> bool {
        let from = self.log.partition_point(|(t, _)| *t <= after);
        self.log[from..].iter().take_while(|(t, _)| *t <= upto).any(|(_, x)| *x < u)
    }

    /// Members below `u` as of the end of tick `s`.
    pub fn restriction(&self, u: u64, s: Tick) -> Vec<u64> {
        let mut v: Vec<u64> = self.log.iter().filter(|(t, x)| *t <= s && *x < u).map(|(_, x)| *x).collect();
        v.sort_unstable();
        v
    }

    pub fn largest_nonmember_below(&self, u: u64) -> Option<u64> {
        (0..u).rev().find(|x| !self.members.contains(x))
    }
}

/// A region of one column: a level and a box at that level.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Region {
    pub level: Level,
    pub kind: BoxKind,
}

impl Region {
    pub fn carved(level: Level, a: Address) -> Self {
        Region { level, kind: BoxKind::Carved(a) }
    }

    pub fn private(level: Level, j: u64) -> Self {
        Region { level, kind: BoxKind::Private(j) }
    }

    pub fn covers(&self, cell: &Region) -> bool {
        if self.level != cell.level {
            return false;
        }
        match (&self.kind, &cell.kind) {
            (BoxKind::Private(a), BoxKind::Private(b)) => a == b,
            (BoxKind::Carved(a), BoxKind::Carved(b)) => a.is_prefix_of(b),
            _ => false,
        }
    }

    /// Whether the region is a single input.
    pub fn is_singleton(&self) -> bool {
        match &self.kind {
            BoxKind::Private(_) => true,
            BoxKind::Carved(a) => a.len() == self.level as usize + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Axiom {
    pub region: Region,
    /// Child digits of a carved region the axiom does not reach.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub except: Vec<u32>,
    pub value: u64,
    pub use_: u64,
    pub posted: Tick,
    pub admitted: Option<Tick>,
    pub killed: Option<Tick>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostOutcome {
    Accepted,
    Delayed,
}

/// value -> least surviving use.
pub type ValueUses = BTreeMap<u64, u64>;

/// One surviving axiom as stored on its node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub value: u64,
    pub use_: u64,
    pub except: Vec<u32>,
}

impl Entry {
    /// Whether the entry, stored on a node of length `node_len`, reaches the
    /// class named by `cell`.
    fn reaches(&self, node_len: usize, cell: &BoxKind) -> bool {
        match cell {
            BoxKind::Carved(a) if a.len() > node_len => !self.except.contains(&a.0[node_len]),
            _ => true,
        }
    }
}

pub type LiveMap = BTreeMap<(Level, BoxKind), Vec<Entry>>;

/// A cell whose trace would exceed its bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Blocked {
    pub cell: Region,
    pub values: ValueUses,
}

/// An axiom not yet posted, used to test what a batch would do.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Draft {
    pub region: Region,
    pub except: Vec<u32>,
    pub value: u64,
}

impl Draft {
    pub fn reaches(&self, cell: &Region) -> bool {
        self.region.covers(cell) && excluded_digit(&self.region, &self.except, cell).is_none()
    }
}

/// The excluded child digit of `region` that `cell` lies under, if any.
fn excluded_digit(region: &Region, except: &[u32], cell: &Region) -> Option<u32> {
    match (&region.kind, &cell.kind) {
        (BoxKind::Carved(r), BoxKind::Carved(c)) if c.len() > r.len() && except.contains(&c.0[r.len()]) => {
            Some(c.0[r.len()])
        }
        _ => None,
    }
}

/// An oracle-relative trace held at box granularity.
#[derive(Clone, Debug)]
pub struct Trace {
    geometry: Geometry,
    axioms: Vec<Axiom>,
    live: LiveMap,
    live_ids: BTreeMap<usize, ()>,
    queue: VecDeque<usize>,
}

impl Trace {
    pub fn new(geometry: Geometry) -> Self {
        Trace { geometry, axioms: Vec::new(), live: BTreeMap::new(), live_ids: BTreeMap::new(), queue: VecDeque::new() }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn axioms(&self) -> &[Axiom] {
        &self.axioms
    }

    pub fn pending(&self) -> impl Iterator<Item = &Axiom> + '_ {
        self.queue.iter().map(move |i| &self.axioms[*i])
    }

    pub fn pending_len(&self) -> usize {
        self.queue.len()
    }

    /// Live trace contents keyed by node.
    pub fn live(&self) -> &LiveMap {
        &self.live
    }

    /// Posts an axiom on the whole of `region`.
    pub fn post(&mut self, tick: Tick, region: Region, value: u64, use_: u64) -> Result<PostOutcome, InputError> {
        self.post_except(tick, region, Vec::new(), value, use_)
    }

    /// Posts an axiom on `region` minus the children named in `except`. It is
    /// admitted now if no input it reaches would exceed its bound, otherwise
    /// queued.
    pub fn post_except(
        &mut self,
        tick: Tick,
        region: Region,
        mut except: Vec<u32>,
        value: u64,
        use_: u64,
    ) -> Result<PostOutcome, InputError> {
        self.geometry.check_kind(region.level, &region.kind)?;
        except.sort_unstable();
        except.dedup();
        if !except.is_empty() {
            let cap = self.geometry.capacity(region.level);
            let open = matches!(&region.kind, BoxKind::Carved(a) if a.len() <= region.level as usize);
            if !open || except.iter().any(|d| u128::from(*d) >= cap) {
                return Err(InputError::BadField {
                    field: "except",
                    detail: alloc::format!("{except:?} are not children of {:?}", region.kind),
                });
            }
        }
        let id = self.axioms.len();
        self.axioms.push(Axiom { region, except, value, use_, posted: tick, admitted: None, killed: None });
        if self.queue.is_empty() && self.admissible_id(id) {
            self.admit(id, tick);
            Ok(PostOutcome::Accepted)
        } else {
            self.queue.push_back(id);
            self.retry(tick);
            if self.axioms[id].admitted.is_some() {
                Ok(PostOutcome::Accepted)
            } else {
                Ok(PostOutcome::Delayed)
            }
        }
    }

    fn admissible_id(&self, id: usize) -> bool {
        let a = &self.axioms[id];
        let draft = Draft { region: a.region.clone(), except: a.except.clone(), value: a.value };
        self.blocking_draft(&draft, &[]).is_empty()
    }

    fn admit(&mut self, id: usize, tick: Tick) {
        let a = &mut self.axioms[id];
        a.admitted = Some(tick);
        let entry = Entry { value: a.value, use_: a.use_, except: a.except.clone() };
        self.live.entry((a.region.level, a.region.kind.clone())).or_default().push(entry);
        self.live_ids.insert(id, ());
    }

    /// Retries the queue in FIFO order, admitting whatever fits.
    pub fn retry(&mut self, tick: Tick) {
        let mut keep = VecDeque::new();
        while let Some(id) = self.queue.pop_front() {
            if self.admissible_id(id) {
                self.admit(id, tick);
            } else {
                keep.push_back(id);
            }
        }
        self.queue = keep;
    }

    /// Applies an oracle change: every live axiom with use above `element` dies.
    pub fn oracle_changed(&mut self, tick: Tick, element: u64) {
        let dead: Vec<usize> = self.live_ids.keys().copied().filter(|i| self.axioms[*i].use_ > element).collect();
        for id in dead {
            self.live_ids.remove(&id);
            self.axioms[id].killed = Some(tick);
        }
        self.live.retain(|_, entries| {
            entries.retain(|e| e.use_ <= element);
            !entries.is_empty()
        });
        self.retry(tick);
    }

    /// Cells of `region` that could not take `value` without exceeding the bound.
    pub fn blocking(&self, region: &Region, value: u64) -> Vec<Blocked> {
        self.blocking_draft(&Draft { region: region.clone(), except: Vec::new(), value }, &[])
    }

    pub fn admissible(&self, region: &Region, value: u64) -> bool {
        self.blocking(region, value).is_empty()
    }

    /// Cells reached by `draft` that would exceed the bound, as if the axioms
    /// in `extra` were also live.
    pub fn blocking_draft(&self, draft: &Draft, extra: &[Draft]) -> Vec<Blocked> {
        let bound = self.geometry.bound(draft.region.level) as usize;
        let mut out = Vec::new();
        for cell in self.cells_with(&draft.region, extra) {
            if !draft.reaches(&cell) {
                continue;
            }
            let mut vals = chain_values(&self.live, &cell);
            for d in extra {
                if d.reaches(&cell) {
                    vals.entry(d.value).or_insert(u64::MAX);
                }
            }
            let n = vals.len() + usize::from(!vals.contains_key(&draft.value));
            if n > bound {
                out.push(Blocked { cell, values: vals });
            }
        }
        out
    }

    /// Class representatives inside `region`, refined by the live nodes and
    /// by the drafts in `extra`.
    fn cells_with(&self, region: &Region, extra: &[Draft]) -> Vec<Region> {
        let root = match &region.kind {
            BoxKind::Private(_) => return alloc::vec![region.clone()],
            BoxKind::Carved(a) => a,
        };
        let mut nodes = nodes_under(&self.live, region.level, root);
        for d in extra {
            if let BoxKind::Carved(a) = &d.region.kind {
                if d.region.level == region.level {
                    for n in core::iter::once(a.clone()).chain(d.except.iter().map(|m| a.child(*m))) {
                        if root.is_prefix_of(&n) {
                            nodes.insert(n);
                        }
                    }
                }
            }
        }
        nodes.insert(root.clone());
        nodes.into_iter().map(|a| Region::carved(region.level, a)).collect()
    }

    /// Surviving values on a single cell now.
    pub fn members(&self, cell: &Region) -> ValueUses {
        chain_values(&self.live, cell)
    }

    /// Surviving values on a single cell at the end of tick `s`, from the log.
    pub fn members_at(&self, cell: &Region, s: Tick) -> ValueUses {
        let mut out = ValueUses::new();
        for a in &self.axioms {
            let alive = a.admitted.map_or(false, |t| t <= s) && a.killed.map_or(true, |k| k > s);
            if alive && a.region.covers(cell) && excluded_digit(&a.region, &a.except, cell).is_none() {
                let e = out.entry(a.value).or_insert(a.use_);
                *e = (*e).min(a.use_);
            }
        }
        out
    }

    /// The largest, over inputs of `region`, of the least use tracing
    /// `value`; `None` if some input does not have `value` traced.
    pub fn value_use(&self, region: &Region, value: u64) -> Option<u64> {
        value_use_in(&self.geometry, &self.live, region, value)
    }

    /// Every class representative of the live trace, per level.
    fn all_cells(&self) -> Vec<Region> {
        let mut out = Vec::new();
        let mut level = None;
        for (l, kind) in self.live.keys() {
            match kind {
                BoxKind::Private(_) => out.push(Region { level: *l, kind: kind.clone() }),
                BoxKind::Carved(_) if level != Some(*l) => {
                    level = Some(*l);
                    let root = Address::root();
                    let mut nodes = nodes_under(&self.live, *l, &root);
                    nodes.insert(root);
                    out.extend(nodes.into_iter().map(|a| Region::carved(*l, a)));
                }
                BoxKind::Carved(_) => {}
            }
        }
        out
    }

    /// Largest number of surviving values on any input, with a witness cell.
    pub fn max_load(&self) -> Option<(Region, usize)> {
        let mut best: Option<(Region, usize)> = None;
        for cell in self.all_cells() {
            let n = chain_values(&self.live, &cell).len();
            if best.as_ref().map_or(true, |(_, m)| n > *m) {
                best = Some((cell, n));
            }
        }
        best
    }

    /// Some input holding more surviving values than its bound allows.
    pub fn overloaded(&self) -> Option<(Region, usize)> {
        self.all_cells().into_iter().find_map(|cell| {
            let n = chain_values(&self.live, &cell).len();
            (n as u64 > self.geometry.bound(cell.level)).then_some((cell, n))
        })
    }

    /// Snapshot of the live contents at the end of tick `s`.
    pub fn live_at(&self, s: Tick) -> LiveMap {
        let mut out = LiveMap::new();
        for a in &self.axioms {
            let alive = a.admitted.map_or(false, |t| t <= s) && a.killed.map_or(true, |k| k > s);
            if alive {
                out.entry((a.region.level, a.region.kind.clone())).or_default().push(Entry {
                    value: a.value,
                    use_: a.use_,
                    except: a.except.clone(),
                });
            }
        }
        out
    }
}

/// Values reaching the class `cell` from its own node and every node above.
fn chain_values(map: &LiveMap, cell: &Region) -> ValueUses {
    let mut out = ValueUses::new();
    let mut add = |node_len: usize, entries: &Vec<Entry>| {
        for e in entries.iter().filter(|e| e.reaches(node_len, &cell.kind)) {
            let u = out.entry(e.value).or_insert(e.use_);
            *u = (*u).min(e.use_);
        }
    };
    match &cell.kind {
        BoxKind::Private(_) => {
            if let Some(v) = map.get(&(cell.level, cell.kind.clone())) {
                add(0, v);
            }
        }
        BoxKind::Carved(a) => {
            for len in 0..=a.len() {
                if let Some(v) = map.get(&(cell.level, BoxKind::Carved(a.prefix(len)))) {
                    add(len, v);
                }
            }
        }
    }
    out
}

/// Keys of `map` at `level` under the carved address `root` (inclusive).
fn keys_under<'a, T>(
    map: &'a BTreeMap<(Level, BoxKind), T>,
    level: Level,
    root: &'a Address,
) -> impl Iterator<Item = &'a Address> + 'a {
    map.range((level, BoxKind::Carved(root.clone()))..)
        .map(|((l, k), _)| (l, k))
        .take_while(move |(l, k)| **l == level && matches!(k, BoxKind::Carved(a) if root.is_prefix_of(a)))
        .filter_map(|(_, k)| k.address())
}

/// Live nodes under `root` (inclusive) together with the excluded children
/// of each, which bound classes just as nodes do.
fn nodes_under(map: &LiveMap, level: Level, root: &Address) -> BTreeSet<Address> {
    let mut out = BTreeSet::new();
    for a in keys_under(map, level, root) {
        out.insert(a.clone());
        for e in &map[&(level, BoxKind::Carved(a.clone()))] {
            out.extend(e.except.iter().map(|m| a.child(*m)));
        }
    }
    out
}

fn value_use_in(geometry: &Geometry, map: &LiveMap, region: &Region, value: u64) -> Option<u64> {
    let use_at = |node_len: usize, key: &(Level, BoxKind), cell: &BoxKind| {
        map.get(key).and_then(|entries| {
            entries.iter().filter(|e| e.value == value && e.reaches(node_len, cell)).map(|e| e.use_).min()
        })
    };
    match &region.kind {
        BoxKind::Private(_) => use_at(0, &(region.level, region.kind.clone()), &region.kind),
        BoxKind::Carved(root) => {
            let k = region.level;
            let nodes = nodes_under(map, k, root);
            let cells = residual_cells(geometry, k, root, &nodes).ok()?;
            let mut worst = 0u64;
            for cell in cells {
                let kind = BoxKind::Carved(cell.clone());
                let best = (0..=cell.len()).filter_map(|len| use_at(len, &(k, BoxKind::Carved(cell.prefix(len))), &kind)).min();
                worst = worst.max(best?);
            }
            Some(worst)
        }
    }
}

/// Whole-box assignments made by the construction. Values are ticks.
#[derive(Clone, Debug, Default)]
pub struct Psi {
    writes: BTreeMap<(Level, BoxKind), Vec<Tick>>,
}

impl Psi {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, region: &Region, tick: Tick) {
        self.writes.entry((region.level, region.kind.clone())).or_default().push(tick);
    }

    pub fn regions(&self) -> impl Iterator<Item = Region> + '_ {
        self.writes.keys().map(|(l, k)| Region { level: *l, kind: k.clone() })
    }

    /// Latest write per region, restricted to writes at or before `r`.
    pub fn latest_at(&self, r: Option<Tick>) -> BTreeMap<(Level, BoxKind), Tick> {
        let mut out = BTreeMap::new();
        for (key, ticks) in &self.writes {
            let t = match r {
                None => ticks.last().copied(),
                Some(r) => ticks.iter().rev().find(|t| **t <= r).copied(),
            };
            if let Some(t) = t {
                out.insert(key.clone(), t);
            }
        }
        out
    }

    /// Value on a single cell: the most recent covering write, else 0.
    pub fn value(&self, cell: &Region) -> Tick {
        self.value_at(cell, Tick::MAX)
    }

    pub fn value_at(&self, cell: &Region, s: Tick) -> Tick {
        let last = |key: &(Level, BoxKind)| {
            self.writes.get(key).and_then(|ts| ts.iter().rev().find(|t| **t <= s).copied()).unwrap_or(0)
        };
        match &cell.kind {
            BoxKind::Private(_) => last(&(cell.level, cell.kind.clone())),
            BoxKind::Carved(a) => {
                (0..=a.len()).map(|len| last(&(cell.level, BoxKind::Carved(a.prefix(len))))).max().unwrap_or(0)
            }
        }
    }

    /// The common value on every input of `region`, if there is one.
    pub fn uniform_value(&self, region: &Region) -> Option<Tick> {
        let base = self.value(region);
        if let BoxKind::Carved(root) = &region.kind {
            for a in keys_under(&self.writes, region.level, root) {
                if a != root {
                    let t = self.writes[&(region.level, BoxKind::Carved(a.clone()))].last().copied().unwrap_or(0);
                    if t > base {
                        return None;
                    }
                }
            }
        }
        Some(base)
    }
}

/// An input class whose current value is not traced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obligation {
    /// Smallest region containing the class.
    pub cell: Region,
    pub value: Tick,
}

/// Classes of mentioned inputs whose value in `psi` is missing from `trace`.
pub fn unmet(
    geometry: &Geometry,
    psi: &BTreeMap<(Level, BoxKind), Tick>,
    trace: &LiveMap,
) -> Vec<Obligation> {
    let mut out = Vec::new();
    let levels: BTreeSet<Level> = psi.keys().map(|(l, _)| *l).collect();
    for k in levels {
        for (key, t) in psi.range((k, BoxKind::Private(0))..(k, BoxKind::Carved(Address::root()))) {
            let has = trace.get(key).map_or(false, |v| v.iter().any(|e| e.value == *t));
            if !has {
                out.push(Obligation { cell: Region { level: k, kind: key.1.clone() }, value: *t });
            }
        }
        let root = Address::root();
        let mut nodes: BTreeSet<Address> = keys_under(psi, k, &root).cloned().collect();
        nodes.extend(nodes_under(trace, k, &root));
        if nodes.is_empty() {
            continue;
        }
        let cells = match residual_cells(geometry, k, &root, &nodes) {
            Ok(c) => c,
            Err(_) => continue,
        };
        for cell in cells {
            let mut want: Option<Tick> = None;
            for len in 0..=cell.len() {
                if let Some(t) = psi.get(&(k, BoxKind::Carved(cell.prefix(len)))) {
                    want = Some(want.map_or(*t, |w: Tick| w.max(*t)));
                }
            }
            if let Some(w) = want {
                let cell_region = Region::carved(k, cell.clone());
                if !chain_values(trace, &cell_region).contains_key(&w) {
                    out.push(Obligation { cell: Region::carved(k, cell), value: w });
                }
            }
        }
    }
    out
}

/// One column: its geometry, trace and written function.
#[derive(Clone, Debug)]
pub struct Column {
    pub trace: Trace,
    pub psi: Psi,
}

impl Column {
    pub fn new(geometry: Geometry) -> Self {
        Column { trace: Trace::new(geometry), psi: Psi::new() }
    }

    pub fn geometry(&self) -> &Geometry {
        self.trace.geometry()
    }

    /// Current unmet obligations.
    pub fn unmet_now(&self) -> Vec<Obligation> {
        unmet(self.geometry(), &self.psi.latest_at(None), self.trace.live())
    }

    pub fn obligations_met_now(&self) -> bool {
        self.unmet_now().is_empty()
    }

    /// Every input mentioned by tick `r` has its value at `r` traced at `s`.
    pub fn obligations_met(&self, r: Tick, s: Tick) -> bool {
        unmet(self.geometry(), &self.psi.latest_at(Some(r)), &self.trace.live_at(s)).is_empty()
    }

    /// Number of stored entries naming a single input.
    pub fn singleton_entries(&self) -> usize {
        let mut keys: BTreeSet<&(Level, BoxKind)> = BTreeSet::new();
        keys.extend(self.psi.writes.keys());
        keys.extend(self.trace.live.keys());
        let from_log = self.trace.axioms.iter().map(|a| &a.region).filter(|r| r.is_singleton()).collect::<BTreeSet<_>>();
        keys.iter().filter(|(l, k)| Region { level: *l, kind: (*k).clone() }.is_singleton()).count() + from_log.len()
    }
}

/// Halting declarations `φ_e(x) = v`, immutable once made.
#[derive(Clone, Debug, Default)]
pub struct Pcf {
    decl: BTreeMap<(u32, u64), (u64, Tick)>,
}

impl Pcf {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false (and changes nothing) if `(e, x)` was already declared.
    pub fn declare(&mut self, tick: Tick, e: u32, x: u64, v: u64) -> bool {
        if self.decl.contains_key(&(e, x)) {
            return false;
        }
        self.decl.insert((e, x), (v, tick));
        true
    }

    pub fn value(&self, e: u32, x: u64) -> Option<u64> {
        self.decl.get(&(e, x)).map(|(v, _)| *v)
    }

    pub fn value_at(&self, e: u32, x: u64, s: Tick) -> Option<u64> {
        self.decl.get(&(e, x)).filter(|(_, t)| *t <= s).map(|(v, _)| *v)
    }

    pub fn declared(&self, e: u32, x: u64) -> bool {
        self.decl.contains_key(&(e, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn col() -> Column {
        Column::new(Geometry::mp(1))
    }

    #[test]
    fn fresh_trace_accepts() {
        let mut c = col();
        let r = Region::carved(1, Address(vec![0]));
        assert_eq!(c.trace.post(1, r.clone(), 7, 5).unwrap(), PostOutcome::Accepted);
        assert_eq!(c.trace.value_use(&r, 7), Some(5));
    }

    #[test]
    fn bound_delays_and_extraction_admits() {
        let mut c = Column::new(Geometry::mp(1));
        let mut a = CeSet::new();
        let r = Region::carved(1, Address(vec![0]));
        assert_eq!(c.trace.post(1, r.clone(), 1, 2).unwrap(), PostOutcome::Accepted);
        assert_eq!(c.trace.post(2, r.clone(), 2, 3).unwrap(), PostOutcome::Delayed);
        a.enumerate(3, 1);
        c.trace.oracle_changed(3, 1);
        let cell = Region::carved(1, Address(vec![0, 2]));
        assert_eq!(c.trace.members(&cell).keys().copied().collect::<Vec<_>>(), vec![2]);
    }

    #[test]
    fn oracle_change_kills_above_use_only() {
        let mut c = Column::new(Geometry::mp(2));
        let z = Region::carved(2, Address(vec![0, 0, 0]));
        c.trace.post(1, z.clone(), 7, 5).unwrap();
        c.trace.post(1, z.clone(), 8, 2).unwrap();
        c.trace.oracle_changed(4, 3);
        assert_eq!(c.trace.members(&z).keys().copied().collect::<Vec<_>>(), vec![8]);
        assert_eq!(c.trace.members_at(&z, 3).len(), 2);
    }

    #[test]
    fn psi_latest_covering_wins() {
        let mut p = Psi::new();
        p.write(&Region::carved(1, Address(vec![0])), 9);
        let z2 = Region::carved(1, Address(vec![0, 1]));
        assert_eq!(p.value(&z2), 9);
        p.write(&Region::carved(1, Address(vec![0, 1])), 11);
        assert_eq!(p.value(&z2), 11);
        assert_eq!(p.value(&Region::carved(1, Address(vec![0, 0]))), 9);
        assert_eq!(p.value(&Region::carved(1, Address(vec![1, 0]))), 0);
        assert_eq!(p.uniform_value(&Region::carved(1, Address(vec![0]))), None);
    }

    #[test]
    fn obligations_follow_cells() {
        let mut c = col();
        assert!(c.obligations_met_now());
        let big = Region::carved(2, Address(vec![0]));
        let small = Region::carved(2, Address(vec![0, 3]));
        c.psi.write(&big, 4);
        assert!(!c.obligations_met_now());
        c.trace.post(4, big.clone(), 4, 5).unwrap();
        assert!(c.obligations_met_now());
        c.psi.write(&small, 6);
        assert_eq!(c.unmet_now(), vec![Obligation { cell: small.clone(), value: 6 }]);
        c.trace.post(6, small, 6, 7).unwrap();
        assert!(c.obligations_met_now());
        assert!(c.obligations_met(5, 6));
        assert!(!c.obligations_met(6, 5));
    }

    #[test]
    fn value_use_takes_max_over_cells() {
        let mut c = Column::new(Geometry::mp(2));
        let r = Region::carved(2, Address(vec![1]));
        for m in 0..6u32 {
            let u = if m == 2 { 30 } else { 12 };
            c.trace.post(1, Region::carved(2, Address(vec![1, m])), 5, u).unwrap();
        }
        assert_eq!(c.trace.value_use(&r, 5), Some(30));
        c.trace.post(2, r.clone(), 5, 20).unwrap();
        assert_eq!(c.trace.value_use(&r, 5), Some(20));
    }

    #[test]
    fn excluded_children_are_not_reached() {
        let mut c = Column::new(Geometry::mp(2));
        let outer = Region::carved(2, Address(vec![1]));
        let inner = Region::carved(2, Address(vec![1, 4]));
        c.psi.write(&outer, 3);
        c.psi.write(&inner, 5);
        c.trace.post(5, inner.clone(), 5, 6).unwrap();
        assert_eq!(c.unmet_now(), vec![Obligation { cell: outer.clone(), value: 3 }]);
        c.trace.post_except(5, outer.clone(), vec![4], 3, 6).unwrap();
        assert!(c.obligations_met_now());
        assert_eq!(c.trace.members(&Region::carved(2, Address(vec![1, 4, 0]))).len(), 1);
        assert_eq!(c.trace.members(&Region::carved(2, Address(vec![1, 2, 0]))).len(), 1);
        assert_eq!(c.trace.value_use(&outer, 3), None);
        assert_eq!(c.trace.value_use(&Region::carved(2, Address(vec![1, 3])), 3), Some(6));
        assert!(c.trace.post_except(5, inner, vec![99], 3, 6).is_err());
    }

    #[test]
    fn pcf_is_immutable() {
        let mut p = Pcf::new();
        assert!(p.declare(3, 1, 10, 0));
        assert!(!p.declare(4, 1, 10, 1));
        assert_eq!(p.value(1, 10), Some(0));
        assert_eq!(p.value_at(1, 10, 2), None);
    }
}

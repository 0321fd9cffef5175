//! The tree construction: a finite tree of strategies, the accessibility
//! walk, and followers whose R-sets range over negative nodes.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::vec::Vec;

use crate::boxes::{BoxKind, CapacityOverride, LayoutTree, Level};
use crate::cea::{Column, Region, Tick};
use crate::error::InputError;
use crate::follower::{choose_box, ColumnId, Follower, Pointer, Status};
use crate::log::{Action, PsiWrite, Removal, StageRecord, UseEntry};
use crate::scenario::Requirement;
use crate::world::{Locator, World};
use crate::Engine;

/// Outcome labels: `0` is ∞ (and the only child of a positive node), `1` is fin.
pub const INF: u8 = 0;
pub const FIN: u8 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub id: u32,
    pub path: Vec<u8>,
    pub requirement: Requirement,
    /// `[∞, fin]` for negative nodes, `[child]` for positive ones; empty at the last level.
    pub children: Vec<u32>,
}

impl Node {
    pub fn len(&self) -> Level {
        self.path.len() as Level
    }

    pub fn is_negative(&self) -> bool {
        self.requirement.is_negative()
    }
}

#[derive(Clone, Debug)]
pub struct StrategyTree {
    /// Breadth-first order; the id is the index.
    pub nodes: Vec<Node>,
    by_path: BTreeMap<Vec<u8>, u32>,
}

impl StrategyTree {
    /// Builds every node of length below `depth`.
    pub fn build(depth: u32, list: &[Requirement]) -> Result<Self, InputError> {
        if depth == 0 {
            return Err(InputError::BadField { field: "depth", detail: "must be at least 1".into() });
        }
        let mut nodes: Vec<Node> = Vec::new();
        let mut by_path = BTreeMap::new();
        let mut queue: VecDeque<Vec<u8>> = VecDeque::new();
        queue.push_back(Vec::new());
        while let Some(path) = queue.pop_front() {
            let above: Vec<&Node> = (0..path.len()).map(|l| &nodes[by_path[&path[..l]] as usize]).collect();
            let used: BTreeSet<Requirement> = above.iter().map(|n| n.requirement).collect();
            let has_inf = above.iter().any(|n| n.is_negative() && path[n.path.len()] == INF);
            let pick = list.iter().find(|r| !used.contains(r) && (has_inf || r.is_negative())).copied().ok_or_else(
                || InputError::BadField {
                    field: "requirement_list",
                    detail: format!("runs out at a node of length {}", path.len()),
                },
            )?;
            let id = nodes.len() as u32;
            by_path.insert(path.clone(), id);
            let outs: &[u8] = if pick.is_negative() { &[INF, FIN] } else { &[INF] };
            if (path.len() as u32) + 1 < depth {
                for o in outs {
                    let mut p = path.clone();
                    p.push(*o);
                    queue.push_back(p);
                }
            }
            nodes.push(Node { id, path, requirement: pick, children: Vec::new() });
        }
        for i in 0..nodes.len() {
            let p = nodes[i].path.clone();
            if p.is_empty() {
                continue;
            }
            let parent = by_path[&p[..p.len() - 1]] as usize;
            nodes[parent].children.push(i as u32);
        }
        Ok(StrategyTree { nodes, by_path })
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, id: u32) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn find(&self, path: &[u8]) -> Option<u32> {
        self.by_path.get(path).copied()
    }

    pub fn child(&self, id: u32, outcome: u8) -> Option<u32> {
        let n = self.node(id);
        n.children.iter().copied().find(|c| self.node(*c).path.last() == Some(&outcome))
    }

    /// Negative nodes `τ` with `τ⌢∞ ⊆ σ`, shortest first.
    pub fn inf_ancestors(&self, sigma: u32) -> Vec<u32> {
        let p = &self.node(sigma).path;
        (0..p.len())
            .filter(|l| p[*l] == INF)
            .map(|l| self.by_path[&p[..l]])
            .filter(|t| self.node(*t).is_negative())
            .collect()
    }

    pub fn negative_nodes(&self) -> impl Iterator<Item = &Node> + '_ {
        self.nodes.iter().filter(|n| n.is_negative())
    }

    /// `a` has higher priority than `b`: left of it, or a proper prefix.
    pub fn stronger(&self, a: u32, b: u32) -> bool {
        self.node(a).path < self.node(b).path
    }

    /// `b` lies strictly to the right of `a`.
    pub fn right_of(&self, a: u32, b: u32) -> bool {
        let (pa, pb) = (&self.node(a).path, &self.node(b).path);
        pb > pa && !pb.starts_with(pa)
    }

    /// Column layouts, one per oracle index.
    pub fn layouts(&self, overridden: &Option<CapacityOverride>) -> BTreeMap<u32, LayoutTree> {
        let mut out: BTreeMap<u32, LayoutTree> = BTreeMap::new();
        for n in self.negative_nodes() {
            if let Requirement::N { e, .. } = n.requirement {
                out.entry(e)
                    .or_insert_with(|| LayoutTree {
                        columns: Vec::new(),
                        theta: BTreeMap::new(),
                        overridden: overridden.clone(),
                    })
                    .columns
                    .push((n.id, n.len()));
            }
        }
        let mut theta: BTreeMap<(u32, Level), Vec<(Vec<u8>, u32)>> = BTreeMap::new();
        for n in &self.nodes {
            if n.is_negative() {
                continue;
            }
            if let Some(top) = self.inf_ancestors(n.id).last() {
                theta.entry((*top, n.len())).or_default().push((n.path.clone(), n.id));
            }
        }
        for ((top, k), mut members) in theta {
            members.sort();
            if let Requirement::N { e, .. } = self.node(top).requirement {
                out.get_mut(&e).expect("layout").theta.insert((top, k), members.into_iter().map(|(_, id)| id).collect());
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TreeEngine {
    tree: StrategyTree,
    layouts: BTreeMap<u32, LayoutTree>,
    world: World,
    last_tau: BTreeMap<u32, Tick>,
}

impl TreeEngine {
    pub fn new(depth: u32, list: &[Requirement], overridden: Option<CapacityOverride>) -> Result<Self, InputError> {
        let tree = StrategyTree::build(depth, list)?;
        let layouts = tree.layouts(&overridden);
        let mut world = World::new(Locator::Tree(layouts.clone()));
        for n in tree.negative_nodes() {
            if let Requirement::N { e, .. } = n.requirement {
                let g = layouts[&e].geometry(n.id)?;
                world.add_column(n.id, Column::new(g), e);
            }
        }
        Ok(TreeEngine { tree, layouts, world, last_tau: BTreeMap::new() })
    }

    pub fn tree(&self) -> &StrategyTree {
        &self.tree
    }

    fn oracle(&self, node: u32) -> u32 {
        self.world.column_oracle[&node]
    }

    fn permitted(&self, x: &Follower, tau: u32, r: Tick, s: Tick) -> bool {
        match self.world.uses.get(&(x.id, tau)).copied().flatten() {
            None => true,
            Some(v) => self.world.oracle_of(tau).changed_below(v, r, s),
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
        self.world.columns.get_mut(&col).expect("column").psi.write(&region, s);
        rec.psi_writes.push(PsiWrite { column: col, region });
    }

    fn top_select(&self, f: &Follower) -> ColumnId {
        *f.pointers
            .iter()
            .max_by_key(|(t, p)| (p.level, self.tree.node(**t).len()))
            .map(|(t, _)| t)
            .expect("nonempty R")
    }

    fn appoint(&mut self, sigma: u32, s: Tick, rec: &mut StageRecord, touched: &mut BTreeSet<u64>) -> bool {
        let tree = self.tree.clone();
        self.cancel_where(rec, |f| f.node.map_or(false, |n| tree.stronger(sigma, n)));
        let rset = self.tree.inf_ancestors(sigma);
        let top = *rset.last().expect("positive nodes sit below an infinite outcome");
        let k = self.tree.node(sigma).len();
        let mut pointers = BTreeMap::new();
        let mut writes = Vec::new();
        for tau in &rset {
            let kind = if *tau == top {
                let e = self.oracle(top);
                let j = self.layouts[&e].private_index(k, sigma, top).expect("σ is in Θ of its top node");
                BoxKind::Private(j)
            } else {
                let g = self.world.columns[tau].geometry().clone();
                match choose_box(self.world.followers.values(), None, *tau, k, &g) {
                    Ok(c) => {
                        let kind = BoxKind::Carved(c.address());
                        rec.choices.push(c);
                        kind
                    }
                    Err(v) => {
                        rec.action = Some(Action::Violation(v));
                        return false;
                    }
                }
            };
            writes.push((*tau, Region { level: k, kind: kind.clone() }));
            pointers.insert(*tau, Pointer { level: k, kind, t: s });
        }
        for (col, region) in writes {
            self.write(col, region, s, rec);
        }
        let e = match self.tree.node(sigma).requirement {
            Requirement::P { e } => e,
            Requirement::N { .. } => unreachable!("appointments happen at positive nodes"),
        };
        let f = Follower {
            id: s,
            requirement: e,
            node: Some(sigma),
            pointers,
            top,
            realised: self.world.pcf.value(e, s) == Some(0),
            attentions: 0,
            status: Status::Alive,
        };
        self.world.followers.insert(s, f);
        touched.insert(s);
        rec.action = Some(Action::Appoint { follower: s, requirement: e, node: Some(sigma) });
        true
    }

    fn promote(&mut self, id: u64, tau: u32, s: Tick, rec: &mut StageRecord, touched: &mut BTreeSet<u64>) -> bool {
        self.cancel_where(rec, |f| f.id > id);
        let x = self.world.followers[&id].clone();
        if x.pointers.len() == 1 {
            rec.action = Some(Action::Promote { follower: id, column: tau, case: 1 });
            self.world.enumerated.insert(id, s);
            self.remove(id, Status::Enumerated, rec);
            let owner = x.node;
            self.cancel_where(rec, |f| f.node == owner);
            return true;
        }
        let mut y = x.clone();
        y.attentions += 1;
        let k = x.pointers[&tau].level;
        if k == self.tree.node(tau).len() {
            y.pointers.remove(&tau);
            self.world.uses.remove(&(id, tau));
            rec.action = Some(Action::Promote { follower: id, column: tau, case: 2 });
        } else {
            let g = self.world.columns[&tau].geometry().clone();
            let choice = match choose_box(self.world.followers.values(), Some(id), tau, k - 1, &g) {
                Ok(c) => c,
                Err(v) => {
                    rec.action = Some(Action::Violation(v));
                    return false;
                }
            };
            let region = Region::carved(k - 1, choice.address());
            y.pointers.insert(tau, Pointer { level: k - 1, kind: region.kind.clone(), t: s });
            self.write(tau, region, s, rec);
            rec.choices.push(choice);
            rec.action = Some(Action::Promote { follower: id, column: tau, case: 3 });
        }
        y.top = self.top_select(&y);
        self.world.followers.insert(id, y);
        touched.insert(id);
        true
    }
}

impl Engine for TreeEngine {
    fn world(&self) -> &World {
        &self.world
    }

    fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    fn step(&mut self, s: Tick) -> StageRecord {
        let mut rec = StageRecord::new(s);
        if s == 0 {
            rec.stage = true;
            for n in self.tree.negative_nodes() {
                self.last_tau.insert(n.id, 0);
                rec.tau_stages.push(n.id);
            }
            rec.path.push(0);
            return rec;
        }
        let mut touched = BTreeSet::new();
        for f in self.world.followers.values_mut() {
            let now = self.world.pcf.value(f.requirement, f.id) == Some(0);
            if now != f.realised {
                f.realised = now;
                touched.insert(f.id);
            }
        }

        let mut node = 0u32;
        let mut ok = true;
        let mut end: Option<u32> = None;
        loop {
            rec.path.push(node);
            let n = self.tree.node(node).clone();
            let room = u64::from(n.len()) < s;
            if n.is_negative() {
                if !self.world.columns[&node].obligations_met_now() {
                    match self.tree.child(node, FIN).filter(|_| room) {
                        Some(c) => {
                            node = c;
                            continue;
                        }
                        None => {
                            end = Some(node);
                            break;
                        }
                    }
                }
                rec.tau_stages.push(node);
                let r = self.last_tau.insert(node, s).unwrap_or(0);
                let mover = self
                    .world
                    .followers
                    .values()
                    .find(|x| x.top == node && x.realised && self.permitted(x, node, r, s))
                    .map(|x| x.id);
                if let Some(x) = mover {
                    ok = self.promote(x, node, s, &mut rec, &mut touched);
                    break;
                }
                match self.tree.child(node, INF).filter(|_| room) {
                    Some(c) => node = c,
                    None => {
                        end = Some(node);
                        break;
                    }
                }
            } else {
                let e = match n.requirement {
                    Requirement::P { e } => e,
                    Requirement::N { .. } => unreachable!(),
                };
                let waiting = self.world.followers.values().any(|f| f.node == Some(node) && !f.realised);
                if self.world.satisfied(e) || waiting {
                    match self.tree.child(node, INF).filter(|_| room) {
                        Some(c) => {
                            node = c;
                            continue;
                        }
                        None => {
                            end = Some(node);
                            break;
                        }
                    }
                }
                ok = self.appoint(node, s, &mut rec, &mut touched);
                break;
            }
        }
        if let Some(last) = end {
            let tree = &self.tree;
            let right: Vec<u64> = self
                .world
                .followers
                .values()
                .filter(|f| f.node.map_or(false, |n| tree.right_of(last, n)))
                .map(|f| f.id)
                .collect();
            for id in right {
                self.remove(id, Status::Cancelled, &mut rec);
            }
        }
        rec.stage = !rec.tau_stages.is_empty();
        if ok {
            self.refresh_uses(&rec.tau_stages.clone(), &mut rec);
            let cols: Vec<ColumnId> = self.world.columns.keys().copied().collect();
            rec.sizes = crate::sizes(&self.world, &cols);
        }
        for id in touched {
            if let Some(f) = self.world.followers.get(&id) {
                rec.followers.push(f.clone());
            }
        }
        rec
    }
}

impl TreeEngine {
    fn refresh_uses(&mut self, stages: &[u32], rec: &mut StageRecord) {
        let mut fresh = Vec::new();
        for f in self.world.followers.values() {
            for (col, p) in &f.pointers {
                if stages.contains(col) {
                    let v = self.world.columns[col].trace.value_use(&p.region(), p.t);
                    fresh.push((f.id, *col, v));
                }
            }
        }
        for (id, col, v) in fresh {
            self.world.uses.insert((id, col), v);
            rec.uses.push(UseEntry { follower: id, column: col, v });
        }
    }
}

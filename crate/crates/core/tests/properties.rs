//! Symbolic structures against brute force over every input of small levels.

use std::collections::{BTreeMap, BTreeSet};

use boxpromo_core::boxes::{Address, BoxKind, Geometry, Level};
use boxpromo_core::cea::{unmet, CeSet, Column, Psi, Region};
use proptest::prelude::*;

/// Every full-depth address of level `k`.
fn points(g: &Geometry, k: Level) -> Vec<Address> {
    let cap = g.capacity(k) as u32;
    let mut out = vec![Address::root()];
    for _ in 0..=k {
        out = out.into_iter().flat_map(|a| (0..cap).map(move |m| a.child(m))).collect();
    }
    out
}

fn arb_address(cap: u32, max_len: usize) -> impl Strategy<Value = Address> {
    prop::collection::vec(0..cap, 0..=max_len).prop_map(Address)
}

fn excluded(region: &Region, except: &[u32], point: &Address) -> bool {
    match &region.kind {
        BoxKind::Carved(a) => point.len() > a.len() && a.is_prefix_of(point) && except.contains(&point.0[a.len()]),
        BoxKind::Private(_) => false,
    }
}

proptest! {
    #[test]
    fn carving_is_laminar(c in 1u32..3, dk in 0u32..3, a in arb_address(8, 4), b in arb_address(8, 4)) {
        let k = c + dk;
        let g = Geometry::mp(c);
        let cap = g.capacity(k) as u32;
        let clip = |x: &Address| Address(x.0.iter().take(k as usize + 1).map(|d| d % cap).collect());
        let (a, b) = (clip(&a), clip(&b));
        let ra = g.local_range(k, &BoxKind::Carved(a.clone())).unwrap();
        let rb = g.local_range(k, &BoxKind::Carved(b.clone())).unwrap();
        let nested = ra.start <= rb.start && rb.end <= ra.end;
        let disjoint = ra.end <= rb.start || rb.end <= ra.start;
        prop_assert_eq!(a.is_prefix_of(&b), nested);
        prop_assert_eq!(!a.comparable(&b), disjoint);
        if a.len() <= k as usize {
            let mut next = ra.start;
            for m in 0..cap {
                let r = g.local_range(k, &BoxKind::Carved(a.child(m))).unwrap();
                prop_assert_eq!(r.start, next);
                next = r.end;
            }
            prop_assert_eq!(next, ra.end);
        }
    }

    #[test]
    fn locate_inverts_offsets(len in 0u32..4, dk in 0u32..2, frac in 0u64..1_000_000) {
        let k = len + dk;
        let g = Geometry::tree(len);
        let total = g.interval_len(k).unwrap();
        let off = total * u128::from(frac) / 1_000_000;
        let kind = g.locate_local(k, off).unwrap();
        prop_assert_eq!(g.local_range(k, &kind).unwrap(), off..off + 1);
    }

    #[test]
    fn psi_matches_pointwise(writes in prop::collection::vec((arb_address(6, 2), 1u64..50), 0..8)) {
        let g = Geometry::mp(2);
        let mut psi = Psi::new();
        let mut log = Vec::new();
        for (i, (a, _)) in writes.iter().enumerate() {
            let r = Region::carved(2, a.clone());
            psi.write(&r, i as u64 + 1);
            log.push((r, i as u64 + 1));
        }
        let pts = points(&g, 2);
        let brute = |p: &Address| {
            let cell = Region::carved(2, p.clone());
            log.iter().filter(|(r, _)| r.covers(&cell)).map(|(_, t)| *t).max().unwrap_or(0)
        };
        for p in &pts {
            prop_assert_eq!(psi.value(&Region::carved(2, p.clone())), brute(p));
        }
        for (a, _) in &writes {
            let r = Region::carved(2, a.clone());
            let vals: BTreeSet<u64> = pts.iter().filter(|p| a.is_prefix_of(p)).map(brute).collect();
            let want = if vals.len() == 1 { vals.into_iter().next() } else { None };
            prop_assert_eq!(psi.uniform_value(&r), want);
        }
    }

    #[test]
    fn trace_matches_pointwise(
        ops in prop::collection::vec(
            (any::<bool>(), arb_address(6, 2), prop::collection::vec(0u32..6, 0..3), 1u64..6, 1u64..30),
            0..14,
        ),
    ) {
        let k = 2;
        let g = Geometry::mp(1);
        let mut col = Column::new(g.clone());
        let mut oracle = CeSet::new();
        for (tick, (post, a, except, value, use_)) in ops.iter().enumerate() {
            let tick = tick as u64;
            if *post {
                let except = if a.len() <= k as usize { except.clone() } else { Vec::new() };
                col.trace.post_except(tick, Region::carved(k, a.clone()), except, *value, *use_).unwrap();
            } else if oracle.enumerate(tick, *use_) {
                col.trace.oracle_changed(tick, *use_);
            }
            prop_assert!(col.trace.overloaded().is_none());
        }
        let pts = points(&g, k);
        let now = ops.len() as u64;
        for p in &pts {
            let cell = Region::carved(k, p.clone());
            let mut brute: BTreeMap<u64, u64> = BTreeMap::new();
            for ax in col.trace.axioms() {
                let alive = ax.admitted.is_some() && ax.killed.is_none();
                if alive && ax.region.covers(&cell) && !excluded(&ax.region, &ax.except, p) {
                    let u = brute.entry(ax.value).or_insert(ax.use_);
                    *u = (*u).min(ax.use_);
                }
            }
            prop_assert!(brute.len() as u64 <= g.bound(k));
            prop_assert_eq!(col.trace.members(&cell), brute.clone());
            prop_assert_eq!(col.trace.members_at(&cell, now), brute);
        }
        for m in 0..6u32 {
            let r = Region::carved(k, Address(vec![m]));
            for value in 1..6u64 {
                let per_point: Vec<Option<u64>> = pts
                    .iter()
                    .filter(|p| p.0[0] == m)
                    .map(|p| col.trace.members(&Region::carved(k, p.clone())).get(&value).copied())
                    .collect();
                let want = per_point.iter().try_fold(0u64, |acc, u| u.map(|u| acc.max(u)));
                prop_assert_eq!(col.trace.value_use(&r, value), want);
            }
        }
    }

    #[test]
    fn obligations_match_pointwise(
        writes in prop::collection::vec(arb_address(4, 2), 1..5),
        posts in prop::collection::vec((arb_address(4, 2), prop::collection::vec(0u32..4, 0..2), 0usize..5), 0..8),
    ) {
        let k = 1;
        let g = Geometry::mp(1);
        let mut col = Column::new(g.clone());
        for (i, a) in writes.iter().enumerate() {
            col.psi.write(&Region::carved(k, a.clone()), i as u64 + 1);
        }
        for (i, (a, except, w)) in posts.iter().enumerate() {
            let value = (*w % writes.len()) as u64 + 1;
            let except = if a.len() <= k as usize { except.clone() } else { Vec::new() };
            col.trace.post_except(0, Region::carved(k, a.clone()), except, value, 100 + i as u64).unwrap();
        }
        let obligations = unmet(&g, &col.psi.latest_at(None), col.trace.live());
        let mut missing = Vec::new();
        for p in points(&g, k) {
            let cell = Region::carved(k, p.clone());
            let mentioned = writes.iter().any(|a| a.is_prefix_of(&p));
            let value = col.psi.value(&cell);
            if mentioned && !col.trace.members(&cell).contains_key(&value) {
                prop_assert!(obligations.iter().any(|o| o.cell.covers(&cell) && o.value == value), "{:?}", p);
                missing.push((cell, value));
            }
        }
        for o in &obligations {
            prop_assert!(missing.iter().any(|(c, v)| o.cell.covers(c) && *v == o.value), "{:?}", o);
        }
    }

    #[test]
    fn posting_never_adds_unmet_inputs(
        writes in prop::collection::vec(arb_address(4, 2), 1..5),
        posts in prop::collection::vec((arb_address(4, 2), 0usize..5), 1..8),
    ) {
        let k = 1;
        let g = Geometry::mp(1);
        let mut col = Column::new(g.clone());
        for (i, a) in writes.iter().enumerate() {
            col.psi.write(&Region::carved(k, a.clone()), i as u64 + 1);
        }
        let pts = points(&g, k);
        let unmet_points = |col: &Column| -> BTreeSet<Address> {
            let obligations = col.unmet_now();
            pts.iter().filter(|p| obligations.iter().any(|o| o.cell.covers(&Region::carved(k, (*p).clone())))).cloned().collect()
        };
        let mut before = unmet_points(&col);
        for (i, (a, w)) in posts.iter().enumerate() {
            let value = (*w % writes.len()) as u64 + 1;
            col.trace.post(i as u64, Region::carved(k, a.clone()), value, 100).unwrap();
            let after = unmet_points(&col);
            prop_assert!(after.is_subset(&before));
            before = after;
        }
    }
}

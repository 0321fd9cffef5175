//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fails.

use std::alloc::{GlobalAlloc, Layout, System};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use boxpromo::{apply_overrides, files, replay, shipped};
use boxpromo_core::boxes::{capacity, Address, BoxKind, CapacityKind, Geometry, LayoutMp};
use boxpromo_core::follower::{Follower, Status};
use boxpromo_core::log::{Action, LogHeader, StageRecord};
use boxpromo_core::run::{run, run_streaming};
use boxpromo_core::scenario::{AdversaryConfig, PolicyKind, Scenario};
use boxpromo_core::verifier::{audit, AuditReport, Check, Classification};
use rand::seq::index::sample;
use rand::SeedableRng;
use rayon::prelude::*;

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }
}

#[global_allocator]
static ALLOCATOR: Counting = Counting;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    ensure(elapsed < limit, || format!("{what} took {elapsed:.2?}, limit {limit:?}"))
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn carving() -> Outcome {
    let started = Instant::now();
    let layout = LayoutMp::new(1, None).map_err(err)?;
    let mut start = 0u128;
    let mut sizes = Vec::new();
    for k in 1..=3u32 {
        let alphabet = 2 * u128::from(k) + 2;
        let len = alphabet.pow(k + 1) + 1;
        let interval = layout.interval_of(k).map_err(err)?;
        ensure(interval == (start..start + len), || format!("I({k}) is {interval:?}, expected {start}..{}", start + len))?;
        for z in interval.clone() {
            let (level, kind) = layout.locate(z).map_err(err)?;
            ensure(level == k && layout.h_value(z).map_err(err)? == k, || format!("h({z}) != {k}"))?;
            ensure(kind.is_private() == (z == start), || format!("{z} private slot mismatch"))?;
            ensure(layout.region(k, &kind).map_err(err)? == (z..z + 1), || format!("{z} does not round-trip"))?;
        }
        let mut frontier = vec![Address::root()];
        let mut leaves = 0u128;
        while let Some(a) = frontier.pop() {
            let range = layout.carve(k, &a).map_err(err)?;
            if a.len() == k as usize + 1 {
                ensure(range.end - range.start == 1, || format!("leaf {a:?} is not a single input"))?;
                leaves += 1;
                continue;
            }
            let mut next = range.start;
            for m in 0..alphabet as u32 {
                let child = layout.carve(k, &a.child(m)).map_err(err)?;
                ensure(child.start == next, || format!("gap before child {m} of {a:?}"))?;
                next = child.end;
                frontier.push(a.child(m));
            }
            ensure(next == range.end, || format!("children of {a:?} do not cover it"))?;
        }
        ensure(leaves + 1 == len, || format!("level {k}: {leaves} leaves"))?;
        sizes.push(len);
        start += len;
    }
    ensure(sizes[2] == 4097, || format!("|I(3)| = {}", sizes[2]))?;
    within(started.elapsed(), Duration::from_secs(5), "carving check")?;
    Ok(format!("|I(1..3)| = {sizes:?}, every input located and every box partitioned"))
}

fn spot_values() -> Outcome {
    let pairs = [
        ("a_mp(1)", capacity(CapacityKind::Mp, 1), 4),
        ("a_tree(0)", capacity(CapacityKind::Tree, 0), 25),
        ("a_tree(2)", capacity(CapacityKind::Tree, 2), 577),
        ("b(1)", capacity(CapacityKind::B, 1), 6),
        ("|I(2)|", len(LayoutMp::new(1, None).map_err(err)?.interval_of(2).map_err(err)?), 217),
        ("|I^tau(2)|", Geometry::tree(2).interval_len(2).map_err(err)?, 192_100_037),
    ];
    for (name, got, want) in pairs {
        ensure(got == want, || format!("{name} = {got}, expected {want}"))?;
    }
    for k in 0..=6u32 {
        let b_next = u128::from(k + 2) * (1 + (1u128 << (k + 1)));
        let want = 1 + (1u128 << (k + 2)) * b_next;
        let got = capacity(CapacityKind::Tree, k);
        ensure(got == want && capacity(CapacityKind::B, k + 1) == b_next, || format!("a_tree({k}) = {got}, expected {want}"))?;
    }
    Ok("six spot values and the a_tree/b identity for k <= 6".into())
}

fn len(r: std::ops::Range<u128>) -> u128 {
    r.end - r.start
}

/// Hand simulation of one follower's two levels under permission on every
/// tick: side 1 starts on top, each permission moves the top side down one
/// level, and at `c` on side 1 the side is dropped. Counts moves up to and
/// including the one that enumerates.
fn chain_by_hand(c: u32, e: u32) -> u32 {
    let (mut side1, mut top_is_one, mut has_one, mut moves) = (e, true, true, 0);
    loop {
        moves += 1;
        if !has_one {
            return moves;
        }
        if top_is_one && side1 == c {
            has_one = false;
        } else if top_is_one {
            side1 -= 1;
        }
        top_is_one = !top_is_one || !has_one;
        if !has_one {
            top_is_one = false;
        }
    }
}

fn promotion_chain() -> Outcome {
    let mut lines = Vec::new();
    for e in 1..=4u32 {
        let started = Instant::now();
        let mut s = Scenario::mp("chain", 1, e, 400, AdversaryConfig::new(PolicyKind::Permissive, 0));
        s.requirements = Some(vec![e]);
        let (records, summary) = run(&s).map_err(err)?;
        let elapsed = started.elapsed();
        ensure(summary.violation.is_none(), || format!("e={e}: violation"))?;
        let winner = records
            .iter()
            .find_map(|r| match r.action {
                Some(Action::Promote { follower, case: 1, .. }) => Some(follower),
                _ => None,
            })
            .ok_or_else(|| format!("e={e}: nobody entered E"))?;
        let moves = records.iter().filter(|r| matches!(r.action, Some(Action::Promote { follower, .. }) if follower == winner)).count() as u32;
        let expected = 2 * (e - 1) + 2;
        ensure(moves == expected && chain_by_hand(1, e) == expected, || format!("e={e}: {moves} permissions, expected {expected}"))?;
        within(elapsed, Duration::from_secs(1), &format!("e={e}"))?;
        lines.push(format!("e={e}:{moves}"));
    }
    Ok(format!("winner permissions {}", lines.join(" ")))
}

/// The seeded invariant suite: MP with c in {1, 2} and e_max = c + 3, trees
/// of depth 1..=6, every built-in adversary, 5000 ticks.
fn suite_scenarios() -> Vec<Scenario> {
    let policies = [PolicyKind::Random, PolicyKind::Permissive, PolicyKind::Stonewall, PolicyKind::SeeSaw];
    (0..100u64)
        .map(|i| {
            let adversary = AdversaryConfig::new(policies[(i % 4) as usize], 7919 * i + 1);
            if (i / 4) % 2 == 0 {
                let c = 1 + ((i / 8) % 2) as u32;
                Scenario::mp(&format!("suite-{i}"), c, c + 3, 5000, adversary)
            } else {
                let depth = 1 + ((i / 8) % 6) as u32;
                Scenario::tree(&format!("suite-{i}"), depth, 5000, adversary)
            }
        })
        .collect()
}

struct SuiteRun {
    scenario: Scenario,
    violation: bool,
    report: AuditReport,
}

fn suite() -> &'static (Vec<SuiteRun>, Duration) {
    static SUITE: OnceLock<(Vec<SuiteRun>, Duration)> = OnceLock::new();
    SUITE.get_or_init(|| {
        let started = Instant::now();
        let runs = suite_scenarios()
            .into_par_iter()
            .map(|scenario| {
                let header = LogHeader::new(scenario.clone());
                let (records, summary) = run(&scenario).expect("suite scenario is valid");
                let report = audit(&header, records.iter()).expect("suite log is well formed");
                SuiteRun { scenario, violation: summary.violation.is_some(), report }
            })
            .collect();
        (runs, started.elapsed())
    })
}

fn invariant_suite() -> Outcome {
    let (runs, elapsed) = suite();
    let mut compliant = 0;
    for r in runs {
        ensure(!r.violation && r.report.failures() == 0, || {
            format!("{}: {} failures, first {:?}", r.scenario.name, r.report.failures(), r.report.findings.first())
        })?;
        compliant += usize::from(r.report.classification == Classification::CompliantAtHorizon);
    }
    within(*elapsed, Duration::from_secs(600), "suite")?;
    Ok(format!(
        "{} runs, 0 audit failures, {compliant} compliant, {} defaulted, {elapsed:.1?}",
        runs.len(),
        runs.len() - compliant
    ))
}

fn negative_control() -> Outcome {
    let canonical = shipped::get("mp-seesaw").ok_or("mp-seesaw missing")?.map_err(err)?;
    let mut overridden = canonical.clone();
    apply_overrides(&mut overridden, None, Some("2"), true).map_err(err)?;
    let (records, _) = run(&overridden).map_err(err)?;
    let report = audit(&LogHeader::new(overridden.clone()), records.iter()).map_err(err)?;
    let first = report.first(Check::Bookkeeping).ok_or("override run reports no bookkeeping violation")?;
    ensure(first.tick < 500, || format!("first violation at tick {}", first.tick))?;
    let (records, summary) = run(&canonical).map_err(err)?;
    let clean = audit(&LogHeader::new(canonical.clone()), records.iter()).map_err(err)?;
    ensure(summary.violation.is_none() && clean.failed(Check::Bookkeeping) == 0, || "canonical run violates".into())?;
    Ok(format!("a'(k)=2 violates at tick {}; canonical capacities: 0 violations over {} ticks", first.tick, summary.ticks))
}

/// Live followers at the end of a log, rebuilt from the per-tick snapshots.
fn final_registry(records: &[StageRecord]) -> BTreeMap<u64, Follower> {
    let mut live = BTreeMap::new();
    for r in records {
        for f in &r.followers {
            live.insert(f.id, f.clone());
        }
        for gone in &r.removed {
            live.remove(&gone.follower);
        }
    }
    live.retain(|_, f: &mut Follower| f.status == Status::Alive);
    live
}

fn reduction_soundness() -> Outcome {
    let mut checked = 0;
    let mut exceeded = 0;
    for scenario in shipped::all().map_err(err)? {
        if scenario.negative_control {
            continue;
        }
        let (records, _) = run(&scenario).map_err(err)?;
        let report = audit(&LogHeader::new(scenario.clone()), records.iter()).map_err(err)?;
        if report.classification != Classification::CompliantAtHorizon || report.ticks < scenario.horizon {
            continue;
        }
        checked += 1;
        let registry = final_registry(&records);
        let name = &scenario.name;
        for r in &report.reductions {
            ensure(r.disagree.is_empty(), || format!("{name} column {}: disagree {:?}", r.column, r.disagree))?;
            ensure(r.agree + r.allowed.len() as u64 == r.checked, || format!("{name} column {}: answers missing", r.column))?;
            let side_one = scenario.engine == boxpromo_core::scenario::EngineKind::Mp && r.column == 1;
            if !side_one {
                let mp = scenario.engine == boxpromo_core::scenario::EngineKind::Mp;
                ensure(!mp || r.allowed.is_empty(), || format!("{name} side 0: exceeded horizon {:?}", r.allowed))?;
                continue;
            }
            let c = scenario.c;
            let k_zero: BTreeSet<u64> = registry
                .values()
                .filter(|f| f.top == 0 && f.pointers.get(&0).map_or(false, |p| p.level == c && matches!(p.kind, BoxKind::Carved(_))))
                .map(|f| f.id)
                .collect();
            ensure(r.allowed.len() <= c as usize, || format!("{name}: {} exceed the horizon, c = {c}", r.allowed.len()))?;
            ensure(r.allowed.iter().all(|x| k_zero.contains(x)), || format!("{name}: {:?} not all in K0({c}) {k_zero:?}", r.allowed))?;
            let stuck: Vec<u64> = registry.values().filter(|f| !f.pointers.contains_key(&1)).map(|f| f.id).collect();
            if name == "mp-open-permission" {
                ensure(!stuck.is_empty() && r.allowed == stuck, || format!("{name}: exceeded {:?}, stuck {stuck:?}", r.allowed))?;
            }
            exceeded += r.allowed.len();
        }
    }
    ensure(checked > 0, || "no compliant shipped run".into())?;
    Ok(format!("{checked} compliant shipped runs, every answer matches E; {exceeded} side-1 horizon exceptions, all in K0(c)"))
}

fn replay_is_exact() -> Outcome {
    let started = Instant::now();
    let scenarios = suite_scenarios();
    let mut rng = rand::rngs::StdRng::seed_from_u64(2024);
    let picks = sample(&mut rng, scenarios.len(), 10).into_vec();
    let dir = tempfile::tempdir().map_err(err)?;
    for i in &picks {
        let scenario = &scenarios[*i];
        let header = LogHeader::new(scenario.clone());
        let (records, _) = run(scenario).map_err(err)?;
        let path = dir.path().join(format!("{}.jsonl", scenario.name));
        files::write_log(&path, &header, &records).map_err(err)?;
        let (read_header, read_records) = files::read_log(&path).map_err(err)?;
        ensure(read_header == header && read_records == records, || format!("{}: log does not round-trip", scenario.name))?;
        let n = replay(&read_header, &read_records).map_err(err)?;
        ensure(n == records.len(), || format!("{}: replayed {n} of {}", scenario.name, records.len()))?;
    }
    within(started.elapsed(), Duration::from_secs(60), "10 replays")?;
    Ok(format!("runs {picks:?} replayed bit-exactly in {:.1?}", started.elapsed()))
}

fn symbolic_storage() -> Outcome {
    let (runs, _) = suite();
    let most = runs.iter().map(|r| r.report.singleton_entries).max().unwrap_or(0);
    ensure(most <= 10_000, || format!("{most} explicit single-input entries"))?;
    let scenario = shipped::get("tree-seesaw").ok_or("tree-seesaw missing")?.map_err(err)?;
    let baseline = LIVE.load(Ordering::Relaxed);
    PEAK.store(baseline, Ordering::Relaxed);
    let summary = run_streaming(&scenario, drop).map_err(err)?;
    let peak = PEAK.load(Ordering::Relaxed) - baseline;
    let level_two = Geometry::tree(2).interval_len(2).map_err(err)?;
    ensure((peak as u128) < level_two, || format!("peak heap {peak} bytes for {} ticks", summary.ticks))?;
    Ok(format!(
        "at most {most} explicit single-input entries per run; tree-seesaw peak heap {peak} bytes against |I^tau(2)| = {level_two} inputs"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("carving", carving),
        ("spot values", spot_values),
        ("promotion chain", promotion_chain),
        ("invariant suite", invariant_suite),
        ("negative control", negative_control),
        ("reduction soundness", reduction_soundness),
        ("replay", replay_is_exact),
        ("symbolic storage", symbolic_storage),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = check();
        let elapsed = started.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}) [{elapsed:.2?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail}) [{elapsed:.2?}]", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

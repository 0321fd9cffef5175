//! Plain-text tables and CSV series for audit reports.

use std::fmt::Write;

use boxpromo_core::verifier::{AuditReport, Diagonal};

/// One line per check, then level statistics, reductions and notices.
pub fn table(report: &AuditReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {}  ticks {}  stages {}", report.scenario, report.ticks, report.stages);
    let _ = writeln!(
        out,
        "adversary {:?}  longest unmet run {}  final unmet run {}  gap {}",
        report.classification, report.longest_unmet, report.final_unmet, report.gap
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<20} {:>10} {:>8}  result", "check", "evaluated", "failed");
    for t in &report.tallies {
        let name = t.check.map(|c| format!("{c:?}")).unwrap_or_else(|| "-".into());
        let verdict = if t.failed > 0 { "FAIL" } else if t.evaluated == 0 { "n/a" } else { "pass" };
        let _ = writeln!(out, "{:<20} {:>10} {:>8}  {}", name, t.evaluated, t.failed, verdict);
    }
    for f in &report.findings {
        let _ = writeln!(out, "  tick {} {:?}: {}", f.tick, f.check, f.witness.detail);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:>6} {:>5} {:>6} {:>6} {:>6} {:>8} {:>8} {:>8}", "column", "level", "max K", "max L", "max G", "final K", "final L", "final G");
    for l in &report.levels {
        let _ = writeln!(
            out,
            "{:>6} {:>5} {:>6} {:>6} {:>6} {:>8} {:>8} {:>8}",
            l.column, l.level, l.max_k, l.max_l, l.max_g, l.final_k, l.final_l, l.final_g
        );
    }
    if !report.reductions.is_empty() {
        let _ = writeln!(out);
        for r in &report.reductions {
            let _ = writeln!(
                out,
                "reduction column {}: {} checked, {} agree, exceeded horizon {:?}, disagree {:?}",
                r.column, r.checked, r.agree, r.allowed, r.disagree
            );
        }
    }
    for d in &report.diagonalization {
        let outcome = match d.result {
            Diagonal::Witnessed { x } => format!("witnessed by {x}"),
            Diagonal::Unrealised { x } => format!("satisfied by unrealised follower {x}"),
            Diagonal::Open => "open".into(),
        };
        let _ = writeln!(out, "requirement {} node {:?}: {}", d.requirement, d.node, outcome);
    }
    if let Some(p) = &report.true_path {
        let _ = writeln!(out, "true path at horizon {p:?}");
    }
    let _ = writeln!(out, "max live followers {}  singleton entries {}", report.max_live_followers, report.singleton_entries);
    for n in &report.notices {
        let _ = writeln!(out, "note: {n}");
    }
    out
}

/// Box occupancy over time: `tick,column,level,k,l,g`, one row per change.
pub fn csv(report: &AuditReport) -> String {
    let mut out = String::from("tick,column,level,k,l,g\n");
    for o in &report.occupancy {
        let _ = writeln!(out, "{},{},{},{},{},{}", o.tick, o.column, o.level, o.k, o.l, o.g);
    }
    out
}

//! Driving an engine against an adversary for a fixed number of ticks.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::adversary::{self, Policy, PolicySettings};
use crate::cea::Tick;
use crate::error::InputError;
use crate::follower::{ColumnId, Violation};
use crate::log::StageRecord;
use crate::mp::MpEngine;
use crate::scenario::{EngineKind, Requirement, Scenario};
use crate::tree::TreeEngine;
use crate::Engine;

#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub ticks: Tick,
    pub stages: u64,
    pub violation: Option<Violation>,
}

pub fn engine_for(scenario: &Scenario) -> Result<(Box<dyn Engine>, Option<BTreeSet<ColumnId>>), InputError> {
    scenario.validate()?;
    let overridden = scenario.capacity_override.clone();
    Ok(match scenario.engine {
        EngineKind::Mp => (Box::new(MpEngine::new(scenario.c, scenario.active_requirements(), overridden)?), None),
        EngineKind::Tree => {
            let engine = TreeEngine::new(scenario.depth, &scenario.tree_requirements(), overridden)?;
            let traced = scenario.adversary.traced.as_ref().map(|pairs| {
                engine
                    .tree()
                    .negative_nodes()
                    .filter(|n| matches!(n.requirement, Requirement::N { e, c } if pairs.contains(&(e, c))))
                    .map(|n| n.id)
                    .collect()
            });
            (Box::new(engine), traced)
        }
    })
}

pub fn policy_for(scenario: &Scenario, traced: Option<BTreeSet<ColumnId>>) -> Result<Box<dyn Policy>, InputError> {
    let a = &scenario.adversary;
    let settings = PolicySettings {
        kind: a.policy,
        seed: a.seed,
        quiesce_at: scenario.quiesce_at(),
        traced,
        permit_per_mille: a.permit_per_mille,
        realise_per_mille: a.realise_per_mille,
        refuse_per_mille: a.refuse_per_mille,
    };
    adversary::build(settings, &a.script)
}

/// Runs `scenario`, handing each record to `sink` as soon as it is made.
/// Stops early at the first violation.
pub fn run_streaming(scenario: &Scenario, mut sink: impl FnMut(StageRecord)) -> Result<RunSummary, InputError> {
    let (mut engine, traced) = engine_for(scenario)?;
    let mut policy = policy_for(scenario, traced)?;
    let mut summary = RunSummary::default();
    for tick in 0..scenario.horizon {
        engine.world_mut().begin_tick(tick);
        let events = policy.next_events(engine.world(), tick);
        for (i, ev) in events.iter().enumerate() {
            engine
                .world_mut()
                .apply(tick, ev)
                .map_err(|err| InputError::Script { index: i, detail: format!("tick {tick}: {err}") })?;
        }
        let mut rec = engine.step(tick);
        rec.events = events;
        summary.ticks = tick + 1;
        summary.stages += u64::from(rec.stage);
        let violation = rec.violation().cloned();
        sink(rec);
        if let Some(v) = violation {
            summary.violation = Some(v);
            break;
        }
    }
    Ok(summary)
}

pub fn run(scenario: &Scenario) -> Result<(Vec<StageRecord>, RunSummary), InputError> {
    let mut records = Vec::new();
    let summary = run_streaming(scenario, |r| records.push(r))?;
    Ok((records, summary))
}

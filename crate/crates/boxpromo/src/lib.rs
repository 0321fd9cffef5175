//! Files and front-end plumbing around `boxpromo-core`: scenario loading,
//! JSON Lines stage logs, replay, audit outcomes and report rendering.

pub mod files;
pub mod render;
pub mod shipped;

pub use boxpromo_core as core;

use std::path::PathBuf;

use boxpromo_core::log::{LogHeader, StageRecord};
use boxpromo_core::run::run_streaming;
use boxpromo_core::scenario::Scenario;
use boxpromo_core::verifier::{AuditReport, Classification};
use boxpromo_core::InputError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {detail}")]
    Parse { path: PathBuf, line: usize, detail: String },
    #[error("{0}")]
    Input(#[from] InputError),
    #[error("no scenario file or shipped scenario named {0:?}")]
    UnknownScenario(String),
    #[error("replay diverges from the log at tick {tick}: {detail}")]
    Divergence { tick: u64, detail: String },
}

impl Error {
    /// Process exit status: divergence is an invariant failure, the rest is bad input.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Divergence { .. } => EXIT_FAILURE,
            _ => EXIT_INPUT,
        }
    }
}

pub const EXIT_CLEAN: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_DEFAULTED: u8 = 2;
pub const EXIT_INPUT: u8 = 3;

/// Exit status for an audit: failures win over a defaulted adversary.
pub fn audit_exit_code(report: &AuditReport) -> u8 {
    if report.failures() > 0 {
        EXIT_FAILURE
    } else if report.classification == Classification::Defaulted {
        EXIT_DEFAULTED
    } else {
        EXIT_CLEAN
    }
}

/// Re-runs the scenario in `header` and compares every record with `logged`.
pub fn replay(header: &LogHeader, logged: &[StageRecord]) -> Result<usize, Error> {
    let mut next = 0usize;
    let mut diverged: Option<Error> = None;
    run_streaming(&header.scenario, |rec| {
        if diverged.is_some() {
            return;
        }
        match logged.get(next) {
            Some(old) if *old == rec => {}
            Some(old) => {
                diverged = Some(Error::Divergence { tick: rec.tick, detail: first_difference(old, &rec) });
            }
            None => {
                diverged = Some(Error::Divergence { tick: rec.tick, detail: "log ends before this tick".into() });
            }
        }
        next += 1;
    })?;
    if let Some(e) = diverged {
        return Err(e);
    }
    if next < logged.len() {
        return Err(Error::Divergence { tick: logged[next].tick, detail: "replay stops before this tick".into() });
    }
    Ok(next)
}

fn first_difference(old: &StageRecord, new: &StageRecord) -> String {
    let a = serde_json::to_value(old).unwrap_or_default();
    let b = serde_json::to_value(new).unwrap_or_default();
    if let (Some(a), Some(b)) = (a.as_object(), b.as_object()) {
        for key in a.keys().chain(b.keys()) {
            if a.get(key) != b.get(key) {
                return format!("field `{key}` differs");
            }
        }
    }
    "records differ".into()
}

/// Applies command-line overrides to a loaded scenario.
pub fn apply_overrides(
    scenario: &mut Scenario,
    seed: Option<u64>,
    capacity: Option<&str>,
    negative_control: bool,
) -> Result<(), Error> {
    if let Some(seed) = seed {
        scenario.adversary.seed = seed;
    }
    if negative_control {
        scenario.negative_control = true;
    }
    if let Some(text) = capacity {
        if !scenario.negative_control {
            return Err(InputError::BadField {
                field: "override-capacity",
                detail: "requires --negative-control".into(),
            }
            .into());
        }
        scenario.capacity_override = Some(boxpromo_core::boxes::CapacityOverride::parse(text)?);
    }
    scenario.validate()?;
    Ok(())
}

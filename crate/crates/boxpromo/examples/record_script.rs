//! Turns a built-in adversary run into a scripted scenario with the same
//! events: `record_script <scenario.json> <name> <out.json>`.

use boxpromo::files;
use boxpromo_core::run::run;
use boxpromo_core::scenario::{PolicyKind, ScriptEvent};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let [_, input, name, output] = args.as_slice() else {
        return Err("usage: record_script <scenario.json> <name> <out.json>".into());
    };
    let mut scenario = files::load_scenario(input)?;
    let (records, _) = run(&scenario)?;
    let script = records
        .iter()
        .flat_map(|r| r.events.iter().map(move |event| ScriptEvent { tick: r.tick, event: event.clone() }))
        .collect();
    scenario.name = name.clone();
    scenario.adversary.policy = PolicyKind::Scripted;
    scenario.adversary.script = script;
    files::write_json(std::path::Path::new(output), &scenario)?;
    Ok(())
}

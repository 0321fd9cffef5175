//! Scenarios compiled into the binary, addressable by name.

use boxpromo_core::scenario::Scenario;

use crate::Error;

const SHIPPED: &[(&str, &str)] = &[
    ("mp-permissive", include_str!("../scenarios/mp-permissive.json")),
    ("mp-permissive-c2", include_str!("../scenarios/mp-permissive-c2.json")),
    ("mp-seesaw", include_str!("../scenarios/mp-seesaw.json")),
    ("mp-random", include_str!("../scenarios/mp-random.json")),
    ("mp-stonewall", include_str!("../scenarios/mp-stonewall.json")),
    ("mp-seesaw-negative", include_str!("../scenarios/mp-seesaw-negative.json")),
    ("mp-quiesce-early", include_str!("../scenarios/mp-quiesce-early.json")),
    ("mp-open-permission", include_str!("../scenarios/mp-open-permission.json")),
    ("tree-permissive", include_str!("../scenarios/tree-permissive.json")),
    ("tree-seesaw", include_str!("../scenarios/tree-seesaw.json")),
    ("tree-random", include_str!("../scenarios/tree-random.json")),
    ("tree-stonewall", include_str!("../scenarios/tree-stonewall.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SHIPPED.iter().map(|(n, _)| *n)
}

pub fn get(name: &str) -> Option<Result<Scenario, Error>> {
    let (_, text) = SHIPPED.iter().find(|(n, _)| *n == name)?;
    Some(serde_json::from_str(text).map_err(|e| Error::Parse {
        path: format!("<shipped {name}>").into(),
        line: e.line(),
        detail: e.to_string(),
    }))
}

/// Every shipped scenario, parsed.
pub fn all() -> Result<Vec<Scenario>, Error> {
    names().map(|n| get(n).expect("listed")).collect()
}

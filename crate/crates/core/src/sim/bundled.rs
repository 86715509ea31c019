//! Scenarios and chains shipped with the crate.

use super::scenario::{ChainResolver, Scenario};
use crate::{Error, Result};

pub const CHAINS: &[(&str, &str)] = &[
    (
        "chains/arm12.json",
        include_str!("../../../../scenarios/chains/arm12.json"),
    ),
    (
        "chains/arm3.json",
        include_str!("../../../../scenarios/chains/arm3.json"),
    ),
    (
        "chains/slides2.json",
        include_str!("../../../../scenarios/chains/slides2.json"),
    ),
    (
        "chains/walker.json",
        include_str!("../../../../scenarios/chains/walker.json"),
    ),
];

pub const SCENARIOS: &[(&str, &str)] = &[
    (
        "drill_free",
        include_str!("../../../../scenarios/drill_free.json"),
    ),
    (
        "drill_guided",
        include_str!("../../../../scenarios/drill_guided.json"),
    ),
    (
        "table_lean",
        include_str!("../../../../scenarios/table_lean.json"),
    ),
    (
        "energy_drain",
        include_str!("../../../../scenarios/energy_drain.json"),
    ),
    (
        "posture_reach",
        include_str!("../../../../scenarios/posture_reach.json"),
    ),
    (
        "free_floating",
        include_str!("../../../../scenarios/free_floating.json"),
    ),
];

/// Resolves chain paths against [`CHAINS`].
pub struct BundledResolver;

impl ChainResolver for BundledResolver {
    fn read(&self, path: &str) -> Result<String> {
        let key = path.trim_start_matches("./");
        CHAINS
            .iter()
            .find(|(p, _)| *p == key)
            .map(|(_, text)| text.to_string())
            .ok_or_else(|| Error::schema("chain", format!("no bundled chain {path}")))
    }
}

pub fn names() -> impl Iterator<Item = &'static str> {
    SCENARIOS.iter().map(|(n, _)| *n)
}

pub fn load(name: &str, overrides: &[String]) -> Result<Scenario> {
    let text = SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::config(format!("no bundled scenario {name}")))?;
    Scenario::from_json(text, &BundledResolver, overrides)
}

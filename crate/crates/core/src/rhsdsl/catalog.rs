//! Built-in systems, shipped as system-spec documents under `catalog/`.

use super::{parse_system, SystemDef, SystemError};

const ENTRIES: &[(&str, &str)] = &[
    (
        "linear-delay",
        include_str!("../../catalog/linear-delay.json"),
    ),
    (
        "positive-delay",
        include_str!("../../catalog/positive-delay.json"),
    ),
    ("blowup", include_str!("../../catalog/blowup.json")),
    (
        "integrator-input",
        include_str!("../../catalog/integrator-input.json"),
    ),
    (
        "stable-linear-delay",
        include_str!("../../catalog/stable-linear-delay.json"),
    ),
    ("decay", include_str!("../../catalog/decay.json")),
    ("growth", include_str!("../../catalog/growth.json")),
    ("zero", include_str!("../../catalog/zero.json")),
    ("two-delay", include_str!("../../catalog/two-delay.json")),
    ("hutchinson", include_str!("../../catalog/hutchinson.json")),
    (
        "delayed-oscillator",
        include_str!("../../catalog/delayed-oscillator.json"),
    ),
    (
        "cubic-damping",
        include_str!("../../catalog/cubic-damping.json"),
    ),
    (
        "bilinear-input",
        include_str!("../../catalog/bilinear-input.json"),
    ),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    ENTRIES.iter().map(|(n, _)| *n)
}

/// Raw JSON of a catalog entry.
pub fn source(name: &str) -> Option<&'static str> {
    ENTRIES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<SystemDef, SystemError> {
    let text = source(name).ok_or_else(|| SystemError::UnknownCatalogEntry(name.to_string()))?;
    parse_system(text)
}

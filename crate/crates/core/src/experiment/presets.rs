//! Named, read-only experiment configurations bundled with the library.

use crate::error::{Error, Result};

use super::config::ExperimentConfig;

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        const PRESETS: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../../presets/", $name, ".toml")))),*
        ];
    };
}

presets!(
    "smoke",
    "gravity-dual",
    "gravity-dual-full",
    "gravity-triple",
    "gravity-triple-full",
    "gravity-dual-hetero",
    "gravity-dual-hetero-full",
    "gravity-triple-hetero",
    "gravity-triple-hetero-full",
    "viscous",
    "viscous-full",
    "flattening",
    "flattening-full",
);

/// Names of all bundled presets.
pub fn list_presets() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

/// TOML text of a preset.
pub fn preset_text(name: &str) -> Result<&'static str> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::Config(format!("unknown preset '{name}' (known: {})", list_presets().join(", "))))
}

/// Loads a preset with optional `key=value` overrides.
pub fn load_preset(name: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml_with(preset_text(name)?, overrides)
}

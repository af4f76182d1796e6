//! Experiment configuration: one TOML document with a section per stage,
//! plus `key=value` overrides addressed by dotted paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub geometry: GeometryConfig,
    pub continua: ContinuaConfig,
    pub mobility: MobilityConfig,
    pub flow: FlowConfig,
    pub initial: InitialConfig,
    pub fine: FineConfig,
    pub coarse: CoarseConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Extents of the target domain.
    pub l1: f64,
    pub l2: f64,
    /// Fine cells of the target domain.
    pub nx: usize,
    pub ny: usize,
    pub coarse_nx: usize,
    pub coarse_ny: usize,
    /// "none", "two-sided" or "right".
    #[serde(default = "default_extension")]
    pub extension: String,
    #[serde(default)]
    pub margin: f64,
}

fn default_extension() -> String {
    "none".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuaConfig {
    /// Strictly decreasing thresholds; continuum 1 holds the highest values.
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityConfig {
    /// "constant", "contrast", "random" or "file".
    pub kind: String,
    #[serde(default = "one")]
    pub value: f64,
    /// Values per continuum for "contrast".
    #[serde(default)]
    pub values: Vec<f64>,
    /// Bounds and correlation of the "random" field.
    #[serde(default = "one")]
    pub min: f64,
    #[serde(default = "one")]
    pub max: f64,
    #[serde(default = "default_corr")]
    pub correlation: f64,
    #[serde(default)]
    pub seed: u64,
    /// Cell CSV (`i,j,value`) on the computational grid for "file".
    #[serde(default)]
    pub file: String,
}

fn one() -> f64 {
    1.0
}

fn default_corr() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default)]
    pub gravity: bool,
    /// Boundary conditions of the computational domain: "no-flow",
    /// "flux:<outward density>" or "pressure:<value>".
    #[serde(default = "no_flow")]
    pub left: String,
    #[serde(default = "no_flow")]
    pub right: String,
    #[serde(default = "no_flow")]
    pub bottom: String,
    #[serde(default = "no_flow")]
    pub top: String,
}

fn no_flow() -> String {
    "no-flow".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// "fingers", "wave", "uniform" or "file".
    pub kind: String,
    /// Plateau values, highest first.
    #[serde(default)]
    pub plateaus: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Fingers: number of stripes across the height.
    #[serde(default = "default_stripes")]
    pub stripes: usize,
    /// Fingers: "interlocked" (plateaus fill the target, tips in the
    /// margins) or "injected" (fingers grow from the left side).
    #[serde(default = "default_layout")]
    pub layout: String,
    /// Fingers: mean finger length as a fraction of the target length.
    #[serde(default = "default_reach")]
    pub reach: f64,
    /// Wave: mean interface position as a fraction of the height, amplitude
    /// (absolute) and number of periods over the length.
    #[serde(default = "half")]
    pub position: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "one_usize")]
    pub periods: usize,
    /// Uniform value.
    #[serde(default)]
    pub value: f64,
    #[serde(default)]
    pub file: String,
}

fn default_stripes() -> usize {
    6
}

fn default_layout() -> String {
    "interlocked".into()
}

fn default_reach() -> f64 {
    0.9
}

fn half() -> f64 {
    0.5
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineConfig {
    pub tau: f64,
    pub steps: usize,
    /// Steps run before the coarse model starts.
    #[serde(default)]
    pub pre_steps: usize,
    /// "upwind" or "particles".
    #[serde(default = "default_transport")]
    pub transport: String,
    #[serde(default = "default_per_cell")]
    pub per_cell: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_transport() -> String {
    "upwind".into()
}

fn default_per_cell() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseConfig {
    pub tau: f64,
    pub steps: usize,
    /// "mixed" or "galerkin".
    pub model: String,
    /// Mixed: "single" or "per-continuum".
    #[serde(default = "default_pressure")]
    pub pressure: String,
    /// Mixed: "uniform" or "continuum".
    #[serde(default = "default_source")]
    pub source: String,
    #[serde(default)]
    pub interface: bool,
    /// Galerkin: refinement of the flow grid, oversampling layers and
    /// treatment of the sides ("truncate", "periodic", "reflect").
    #[serde(default = "one_usize")]
    pub refine: usize,
    #[serde(default)]
    pub layers: usize,
    #[serde(default = "default_rule")]
    pub left_rule: String,
    #[serde(default = "default_rule")]
    pub right_rule: String,
    /// Galerkin gradient directions ("x", "y").
    #[serde(default = "default_dirs")]
    pub dirs: Vec<String>,
}

fn default_pressure() -> String {
    "single".into()
}

fn default_source() -> String {
    "continuum".into()
}

fn default_rule() -> String {
    "truncate".into()
}

fn default_dirs() -> Vec<String> {
    vec!["x".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// "direct" or "pcg".
    #[serde(default = "default_linear")]
    pub linear: String,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_constraint_tol")]
    pub constraint_tol: f64,
    #[serde(default = "default_conservation_tol")]
    pub conservation_tol: f64,
}

fn default_linear() -> String {
    "direct".into()
}

fn default_tol() -> f64 {
    1e-10
}

fn default_constraint_tol() -> f64 {
    1e-9
}

fn default_conservation_tol() -> f64 {
    1e-12
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            linear: default_linear(),
            tol: default_tol(),
            constraint_tol: default_constraint_tol(),
            conservation_tol: default_conservation_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Write every fine snapshot used by the coarse model ("all") or only
    /// the first and last ("ends").
    #[serde(default = "default_snapshots")]
    pub snapshots: String,
    /// Also write PGM images of the concentration snapshots.
    #[serde(default)]
    pub pgm: bool,
}

fn default_snapshots() -> String {
    "ends".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { snapshots: default_snapshots(), pgm: false }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `text` after applying `key=value` overrides.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Canonical serialization used for hashing.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// Sets a dotted key such as `fine.steps=10`. The value is read as TOML
/// (numbers, booleans, arrays) and falls back to a plain string.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{assignment}' is not key=value")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut table = doc;
    for p in path {
        table = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{p}' in '{key}' is not a section")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

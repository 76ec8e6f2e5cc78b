//! Run configuration: a TOML document with one section per concern, plus
//! dotted `section.key=value` overrides.

use serde::{Deserialize, Serialize};
use uvm::analysis::Window;
use uvm::montecarlo::Control;
use uvm::{GridSpec, ModelParams, PayoffSpec, SolverConfig};

use crate::error::CliError;

/// The preset shipped with the binary, used when no `--config` is given.
pub const PAPER_PRESET: &str = include_str!("../presets/paper.cfg");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub payoff: PayoffSpec,
    pub sweep: SweepSection,
    pub compare: CompareSection,
    pub mc: McSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub deltas: Vec<f64>,
    pub window: Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub x_min: f64,
    pub x_max: f64,
    /// Dominance is flagged when `P0 >= max(BS) - tolerance`.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub seed: u64,
    pub n_steps: usize,
    /// Paths per `delta` in the coupling-rate study.
    pub n_paths: usize,
    /// Paths exported by `simulate-bounds`.
    pub bounds_paths: usize,
    pub rate_deltas: Vec<f64>,
    pub controls: Vec<ControlSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControlSpec {
    Constant { q: f64 },
    Switching { level: f64, below: f64, above: f64 },
}

impl ControlSpec {
    pub fn to_control(self) -> Control {
        match self {
            ControlSpec::Constant { q } => Control::Constant(q),
            ControlSpec::Switching { level, below, above } => {
                Control::Switching { level, below, above }
            }
        }
    }
}

impl RunConfig {
    pub fn paper() -> Self {
        Self::parse(PAPER_PRESET).expect("the bundled preset is valid")
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("cannot parse config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// Applies `section.key=value` overrides. Every key must already exist
    /// in the document; values are read as TOML literals and fall back to
    /// plain strings (so `solver.optimizer=paper-exact` works without quotes).
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, CliError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc: toml::Table = toml::from_str(&self.to_toml())
            .map_err(|e| CliError::Config(format!("internal config round-trip failed: {e}")))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override {item:?} is not key=value")))?;
            let slot = lookup(&mut doc, key.trim())?;
            *slot = parse_literal(raw.trim());
        }
        let text = toml::to_string(&doc)
            .map_err(|e| CliError::Config(format!("cannot serialize overridden config: {e}")))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("invalid override: {e}")))
    }
}

fn lookup<'a>(doc: &'a mut toml::Table, key: &str) -> Result<&'a mut toml::Value, CliError> {
    let unknown = || CliError::Config(format!("override key {key:?} does not exist in the config"));
    let mut parts = key.split('.');
    let first = parts.next().filter(|p| !p.is_empty()).ok_or_else(unknown)?;
    let mut slot = doc.get_mut(first).ok_or_else(unknown)?;
    for part in parts {
        slot = match slot {
            toml::Value::Table(t) => t.get_mut(part).ok_or_else(unknown)?,
            toml::Value::Array(a) => part
                .parse::<usize>()
                .ok()
                .and_then(|i| a.get_mut(i))
                .ok_or_else(unknown)?,
            _ => return Err(unknown()),
        };
    }
    Ok(slot)
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

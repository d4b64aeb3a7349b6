use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use dfstransfer_core::dynamics::SimulationConfig;

/// On-disk run description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// CSV destination; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Only recorded; simulations are deterministic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub simulation: SimulationConfig,
}

const TOP_LEVEL: [&str; 4] = ["name", "output", "seed", "simulation"];

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Set `path` (dot separated, numeric parts index arrays) inside `doc`.
fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = path.split('.').collect();
    let mut cur = doc;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().with_context(|| format!("'{part}' in '{path}' is not an index"))?;
                let len = items.len();
                let Some(slot) = items.get_mut(idx) else {
                    bail!("index {idx} out of range in '{path}' (length {len})");
                };
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => bail!("cannot descend into '{part}' of '{path}'"),
        };
    }
    Ok(())
}

pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let Some((key, raw)) = o.split_once('=') else {
            bail!("override '{o}' is not KEY=VALUE");
        };
        let head = key.split('.').next().unwrap_or_default();
        let key = if TOP_LEVEL.contains(&head) {
            key.to_string()
        } else {
            format!("simulation.{key}")
        };
        set_path(doc, &key, parse_value(raw))?;
    }
    Ok(())
}

impl RunConfig {
    fn from_value(doc: Value) -> Result<Self> {
        let rc: RunConfig = serde_json::from_value(doc).context("invalid run configuration")?;
        rc.simulation.validate()?;
        Ok(rc)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        apply_overrides(&mut doc, overrides)?;
        Self::from_value(doc)
    }

    pub fn from_simulation(sim: SimulationConfig, overrides: &[String]) -> Result<Self> {
        let mut doc = serde_json::json!({ "simulation": sim });
        apply_overrides(&mut doc, overrides)?;
        Self::from_value(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reach_nested_fields() {
        let sim = SimulationConfig::new(2, "psi1");
        let rc = RunConfig::from_simulation(sim, &["baths.0.strength=0".into(), "cycle=optimal".into(), "seed=3".into()]).unwrap();
        assert_eq!(rc.simulation.baths[0].strength, 0.0);
        assert_eq!(rc.seed, Some(3));
        assert!(RunConfig::from_simulation(SimulationConfig::new(2, "psi1"), &["baths.4.strength=0".into()]).is_err());
        assert!(RunConfig::from_simulation(SimulationConfig::new(2, "psi1"), &["bogus=1".into()]).is_err());
        assert!(RunConfig::from_simulation(SimulationConfig::new(2, "psi1"), &["tau".into()]).is_err());
    }
}

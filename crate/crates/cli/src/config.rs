//! Config file loading: one JSON object with a section per module, plus
//! per-key `--set` overrides.

use std::path::Path;

use agentask_core::pipeline::ExperimentConfig;
use agentask_gateway::GatewayConfig;
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

#[derive(Clone, Debug)]
pub struct Loaded {
    pub experiment: ExperimentConfig,
    pub gateway: GatewayConfig,
}

/// Reads `path` (or the defaults), applies `KEY=VALUE` overrides, then the seed.
pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Loaded> {
    let mut root = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str::<Value>(&text)
                .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", p.display())))?
        }
        None => Value::Object(Map::new()),
    };
    if !root.is_object() {
        return Err(CliError::Usage("config file must hold a JSON object".into()));
    }
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let obj = root.as_object_mut().expect("checked above");
    let gateway = match obj.remove("gateway") {
        Some(v) => {
            let mut g: GatewayConfig =
                serde_json::from_value(v).map_err(|e| CliError::Usage(format!("gateway section: {e}")))?;
            // secrets stay in the environment
            g.api_key = std::env::var("AGENTASK_GATEWAY_API_KEY").ok();
            g
        }
        None => GatewayConfig::from_env(),
    };
    let mut experiment: ExperimentConfig =
        serde_json::from_value(root).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    if let Some(s) = seed {
        experiment = experiment.with_seed(s);
    }
    Ok(Loaded { experiment, gateway })
}

/// `section.key=value`; the value is parsed as JSON and falls back to a string.
fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{spec}` is not KEY=VALUE")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Usage(format!("override key `{key}` has an empty segment")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Usage(format!("override key `{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split yields at least one segment")
}

//! Resolved command-line configuration: defaults, then the JSON config
//! file, then flags, then `--set key=value` overrides. Every field is
//! addressed by a dotted key such as `train.beta` or `system.kind`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dynsys::{SystemKind, SystemSpec};
use crate::error::{Error, Result};
use crate::render::DatasetConfig;
use crate::train::{SimulationConfig, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub system: SystemSpec,
    pub simulation: SimulationConfig,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::SinglePendulum.default_spec(),
            simulation: SimulationConfig::default(),
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn config_error(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        msg: msg.into(),
    }
}

/// Leaf `(dotted key, value)` pairs of a JSON object.
pub fn flatten(value: &Value) -> Vec<(String, Value)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
        match v {
            Value::Object(m) if !m.is_empty() => {
                for (k, child) in m {
                    let key = if prefix.is_empty() {
                        k.clone()
                    } else {
                        format!("{prefix}.{k}")
                    };
                    walk(&key, child, out);
                }
            }
            _ => out.push((prefix.to_string(), v.clone())),
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

/// Interprets a command-line value as JSON, falling back to a string.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl CliConfig {
    /// Every dotted key the current configuration accepts.
    pub fn keys(&self) -> Vec<String> {
        let v = serde_json::to_value(self).expect("config serializes");
        flatten(&v).into_iter().map(|(k, _)| k).collect()
    }

    /// Applies `(dotted key, value)` pairs, then re-validates the whole
    /// configuration. Tag changes (`…kind`) are applied first and reset their
    /// section, so `system.kind` brings in that system's default parameters.
    pub fn apply(&mut self, mut leaves: Vec<(String, Value)>) -> Result<()> {
        leaves.sort_by_key(|(k, _)| !(k == "kind" || k.ends_with(".kind")));
        let mut root = serde_json::to_value(&*self)?;
        for (key, value) in leaves {
            set_value(&mut root, &key, value)?;
        }
        *self = serde_path_to_error::deserialize(root).map_err(|e| {
            let path = e.path().to_string();
            config_error(&path, e.into_inner().to_string())
        })?;
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: Value) -> Result<()> {
        self.apply(vec![(key.to_string(), value)])
    }

    /// Applies every leaf of a (partial) JSON document.
    pub fn merge(&mut self, doc: &Value) -> Result<()> {
        if !doc.is_object() {
            return Err(config_error("<root>", "config must be a JSON object"));
        }
        self.apply(flatten(doc))
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)?;
        let doc: Value =
            serde_json::from_str(&text).map_err(|e| config_error("<file>", format!("{}: {e}", path.display())))?;
        self.merge(&doc)
    }

    /// Applies `key=value` strings.
    pub fn apply_sets(&mut self, sets: &[String]) -> Result<()> {
        let mut pairs = Vec::with_capacity(sets.len());
        for s in sets {
            let (k, v) = s.split_once('=').ok_or_else(|| config_error(s, "expected key=value"))?;
            pairs.push((k.trim().to_string(), parse_value(v.trim())));
        }
        self.apply(pairs)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.simulation.validate()?;
        self.dataset.validate()?;
        self.train.validate()
    }
}

fn set_value(root: &mut Value, key: &str, value: Value) -> Result<()> {
    if key == "system.kind" {
        let kind: SystemKind = value
            .as_str()
            .ok_or_else(|| config_error(key, "expected a system name"))?
            .parse()?;
        if root["system"]["kind"] != value {
            root["system"] = serde_json::to_value(kind.default_spec())?;
        }
        return Ok(());
    }
    let parts: Vec<&str> = key.split('.').collect();
    let (leaf, parents) = parts.split_last().expect("split yields one part");
    let mut node = root;
    for part in parents {
        node = node
            .as_object_mut()
            .and_then(|m| m.get_mut(*part))
            .ok_or_else(|| config_error(key, "unknown key"))?;
        if node.is_null() {
            *node = Value::Object(Map::new());
        }
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| config_error(key, "not a configuration section"))?;
    let tagged = obj.contains_key("kind");
    if *leaf == "kind" && tagged {
        if obj["kind"] != value {
            obj.clear();
            obj.insert("kind".into(), value);
        }
        return Ok(());
    }
    match obj.get(*leaf) {
        Some(Value::Object(m)) if !m.is_empty() && !value.is_object() => {
            return Err(config_error(key, "is a section; set one of its keys"));
        }
        Some(_) => {}
        // Fields of a freshly switched variant are checked on deserialization.
        None if tagged => {}
        None => return Err(config_error(key, "unknown key")),
    }
    obj.insert(leaf.to_string(), value);
    Ok(())
}

//! JSON config resolution: defaults, then the config file, then `--set` overrides.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Resolve a command config from its defaults, an optional JSON document and
/// dotted `key=value` overrides.
///
/// Keys absent from the defaults are collected over the whole document and
/// rejected together. Overrides parse their value as JSON and fall back to a
/// plain string, so `--set circuit.lv_nH.2=inf` works.
pub fn resolve<T: Serialize + DeserializeOwned>(
    defaults: &T,
    document: Option<Value>,
    overrides: &[(String, String)],
) -> Result<(T, Value), CliError> {
    let mut value = serde_json::to_value(defaults).expect("defaults serialize");
    if let Some(doc) = document {
        let mut unknown = Vec::new();
        unknown_keys(&doc, &value, "", &mut unknown);
        if !unknown.is_empty() {
            return Err(CliError::Validation(format!("unknown config keys: {}", unknown.join(", "))));
        }
        merge(&mut value, doc);
    }
    for (path, raw) in overrides {
        let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        set_path(&mut value, path, parsed)?;
    }
    let config = serde_json::from_value(value.clone()).map_err(|e| CliError::Validation(format!("config: {e}")))?;
    // round trip so the echoed config shows normalized values
    let resolved = serde_json::to_value(&config).expect("config serializes");
    Ok((config, resolved))
}

/// Paths of object keys in `doc` that `reference` does not have. Objects
/// under a null default are left to the typed deserializer.
fn unknown_keys(doc: &Value, reference: &Value, prefix: &str, out: &mut Vec<String>) {
    if let (Value::Object(d), Value::Object(r)) = (doc, reference) {
        for (k, v) in d {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match r.get(k) {
                Some(rv) => unknown_keys(v, rv, &path, out),
                None => out.push(path),
            }
        }
    }
}

/// Objects merge key by key; everything else is replaced.
fn merge(base: &mut Value, doc: Value) {
    match (base, doc) {
        (Value::Object(b), Value::Object(d)) => {
            for (k, v) in d {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, doc) => *slot = doc,
    }
}

fn set_path(root: &mut Value, path: &str, new: Value) -> Result<(), CliError> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Validation(format!("malformed override path {path:?}")));
    }
    for (depth, part) in parts.iter().enumerate() {
        let last = depth + 1 == parts.len();
        let here = parts[..=depth].join(".");
        // an unset optional section becomes an object on first write
        if node.is_null() {
            *node = Value::Object(Map::new());
        }
        node = match node {
            Value::Object(map) => {
                if !map.contains_key(*part) {
                    return Err(CliError::Validation(format!("unknown config key {here:?}")));
                }
                map.get_mut(*part).expect("checked")
            }
            Value::Array(items) => {
                let len = items.len();
                let idx: usize = part
                    .parse()
                    .map_err(|_| CliError::Validation(format!("{here:?}: expected a list index")))?;
                items
                    .get_mut(idx)
                    .ok_or_else(|| CliError::Validation(format!("{here:?}: index out of range (length {len})")))?
            }
            _ => return Err(CliError::Validation(format!("{here:?}: cannot index into a scalar"))),
        };
        if last {
            *node = new;
            return Ok(());
        }
    }
    unreachable!("paths have at least one segment")
}

/// Split `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}

//! Plain-text `key = value` configuration over any serde type.
//!
//! Keys are dotted paths into the serialized form (`optim.base_lr`,
//! `model.patch.patch_sizes`). Values are JSON literals; anything that does
//! not parse as JSON is taken as a bare string. `#` starts a comment.

use crate::error::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Overlay `key = value` lines on `base`. Unknown keys are errors.
pub fn apply_kv<T: Serialize + DeserializeOwned>(base: &T, text: &str, source: &str) -> Result<T> {
    let mut root = serde_json::to_value(base)?;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| perr(format!("expected `key = value`, got {line:?}")))?;
        let key = key.trim();
        let value = value.trim();
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        set_path(&mut root, key, parsed).map_err(perr)?;
    }
    serde_json::from_value(root).map_err(|e| Error::Config(format!("{source}: {e}")))
}

/// Replace the leaf at a dotted path.
pub fn set_path(root: &mut Value, key: &str, value: Value) -> std::result::Result<(), String> {
    let slot = key
        .split('.')
        .try_fold(root, |node, part| node.get_mut(part))
        .ok_or_else(|| format!("unknown key {key}"))?;
    if slot.is_object() {
        return Err(format!("{key} is a section, not a value"));
    }
    *slot = value;
    Ok(())
}

/// Every leaf as `key = value`, sorted by key; parses back to `value`.
pub fn to_kv<T: Serialize>(value: &T) -> Result<String> {
    let mut lines = Vec::new();
    flatten(&serde_json::to_value(value)?, String::new(), &mut lines);
    lines.sort();
    Ok(lines.into_iter().map(|l| l + "\n").collect())
}

fn flatten(v: &Value, prefix: String, out: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(child, key, out);
            }
        }
        leaf => out.push(format!("{prefix} = {leaf}")),
    }
}

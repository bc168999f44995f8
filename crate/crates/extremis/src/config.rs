//! Loading environment models and simulator presets from names or JSON
//! files, with errors that name the offending field.

use std::path::{Path, PathBuf};

use extremis_core::env::{EnvError, EnvModel};
use extremis_core::presets;
use extremis_core::response::{SimError, SimPreset};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}: invalid `{field}`: {message}")]
    Field { origin: String, field: String, message: String },
    #[error("`{0}` is neither a preset name ({names}) nor a readable file", names = presets::PRESET_NAMES.join(", "))]
    UnknownPreset(String),
}

impl ConfigError {
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Field { field, .. } => Some(field),
            _ => None,
        }
    }
}

/// Deserialises `text`, reporting the JSON path of the first bad field.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let message = e.into_inner().to_string();
        let field = refine_path(text, &path, &message);
        ConfigError::Field { origin: origin.to_string(), field, message }
    })
}

/// Tagged enums are buffered before deserialising, so the reported path stops
/// at the enclosing object. Recover the key from the message where possible.
fn refine_path(text: &str, path: &str, message: &str) -> String {
    let join = |key: &str| if path == "." || path.is_empty() { key.to_string() } else { format!("{path}.{key}") };
    let quoted = |prefix: &str| message.strip_prefix(prefix).and_then(|r| r.split('`').next()).map(str::to_string);
    if let Some(k) = quoted("missing field `").or_else(|| quoted("unknown field `")) {
        return join(&k);
    }
    let Ok(root) = serde_json::from_str::<serde_json::Value>(text) else { return path.to_string() };
    let pointer = if path == "." { String::new() } else { format!("/{}", path.replace('.', "/")) };
    let Some(serde_json::Value::Object(obj)) = root.pointer(&pointer) else { return path.to_string() };
    // "invalid type: string \"two\", expected f64"
    let shown = message.split_once(": ").map(|(_, r)| r.split(", expected").next().unwrap_or(r)).unwrap_or("");
    let hits: Vec<&String> = obj
        .iter()
        .filter(|(_, v)| match v {
            serde_json::Value::String(s) => shown.ends_with(&format!("\"{s}\"")),
            serde_json::Value::Number(n) => shown.ends_with(&format!(" {n}")) || shown.ends_with(&format!("`{n}`")),
            serde_json::Value::Bool(b) => shown == format!("boolean `{b}`"),
            serde_json::Value::Null => shown == "null",
            _ => false,
        })
        .map(|(k, _)| k)
        .collect();
    match hits.as_slice() {
        [k] => join(k),
        _ => path.to_string(),
    }
}

pub fn read_text(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    parse_json(&read_text(path)?, &path.display().to_string())
}

pub fn parse_env(text: &str, origin: &str) -> Result<EnvModel, ConfigError> {
    let env: EnvModel = parse_json(text, origin)?;
    env.validate().map_err(|e| match e {
        EnvError::Validation { path, message } => ConfigError::Field { origin: origin.to_string(), field: path, message },
        other => ConfigError::Field { origin: origin.to_string(), field: ".".into(), message: other.to_string() },
    })?;
    Ok(env)
}

pub fn load_env_config(path: &Path) -> Result<EnvModel, ConfigError> {
    parse_env(&read_text(path)?, &path.display().to_string())
}

/// A preset name selects the preset's environment; anything else is a path.
pub fn resolve_env(spec: &str) -> Result<EnvModel, ConfigError> {
    if let Some(p) = presets::preset(spec) {
        return Ok(p.env);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(ConfigError::UnknownPreset(spec.to_string()));
    }
    load_env_config(path)
}

pub fn resolve_sim(spec: &str) -> Result<SimPreset, ConfigError> {
    if let Some(p) = presets::preset(spec) {
        return Ok(p.sim);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(ConfigError::UnknownPreset(spec.to_string()));
    }
    let sim: SimPreset = load_json(path)?;
    sim.validate().map_err(|e| match e {
        SimError::InvalidPreset { field, message } => ConfigError::Field { origin: spec.to_string(), field: field.to_string(), message },
        other => ConfigError::Field { origin: spec.to_string(), field: ".".into(), message: other.to_string() },
    })?;
    Ok(sim)
}

/// SHA-256 of the canonical JSON form (object keys sorted).
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let canonical = serde_json::to_value(value).and_then(|v| serde_json::to_string(&v)).expect("config serialises");
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_field_is_named() {
        let text = r#"{"marginal_u": {"kind": "weibull", "shape": "two", "scale": 10.0},
                       "conditional_sigma": {"kind": "lognormal_given_u", "mu_coeffs": [0.0], "sigma_coeffs": [1.0]}}"#;
        let err = parse_env(text, "inline").unwrap_err();
        assert_eq!(err.field(), Some("marginal_u.shape"));
    }

    #[test]
    fn validation_errors_carry_paths() {
        let text = r#"{"marginal_u": {"kind": "weibull", "shape": -2.0, "scale": 10.0},
                       "conditional_sigma": {"kind": "lognormal_given_u", "mu_coeffs": [0.0], "sigma_coeffs": [1.0]}}"#;
        let err = parse_env(text, "inline").unwrap_err();
        assert_eq!(err.field(), Some("marginal_u.shape"));
    }

    #[test]
    fn hash_ignores_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"a": 1, "b": [1, 2]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"b": [1, 2], "a": 1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn presets_resolve_by_name() {
        assert!(resolve_env("site-a-like").is_ok());
        assert!(resolve_sim("brittany-like").is_ok());
        assert!(matches!(resolve_sim("nowhere-like"), Err(ConfigError::UnknownPreset(_))));
    }
}

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Resource(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Failure(_) => 1,
            CliError::Resource(_) => 2,
        }
    }
}

impl From<sparse_mcmc::Error> for CliError {
    fn from(e: sparse_mcmc::Error) -> Self {
        use sparse_mcmc::Error as E;
        match e {
            E::Resource(_) => CliError::Resource(e.to_string()),
            E::InvalidParameter(_) | E::InvalidInput(_) | E::Degenerate(_) => CliError::Config(e.to_string()),
            _ => CliError::Failure(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(format!("i/o error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failure(format!("serialization error: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Configuration layers, lowest precedence first: defaults, `RUN_SEED`, the JSON file,
/// `--set key=value`, then dedicated flags.
#[derive(Debug, Default)]
pub struct Layers {
    pub file: Map<String, Value>,
    pub sets: Vec<(String, Value)>,
    pub flags: Vec<(String, Value)>,
    pub env_seed: Option<u64>,
}

/// Parses a command-line value as JSON, falling back to a plain string (`pca`, `inf`).
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl Layers {
    pub fn new(config: Option<&Path>, sets: &[String], flags: Vec<(String, Value)>) -> CliResult<Self> {
        let file = match config {
            None => Map::new(),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                match serde_json::from_str(&text) {
                    Ok(Value::Object(map)) => map,
                    Ok(_) => return Err(CliError::Config(format!("{} must hold a JSON object", path.display()))),
                    Err(e) => return Err(CliError::Config(format!("{}: {e}", path.display()))),
                }
            }
        };
        let sets = sets
            .iter()
            .map(|s| match s.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), parse_value(v.trim()))),
                _ => Err(CliError::Config(format!("--set expects key=value, got `{s}`"))),
            })
            .collect::<CliResult<Vec<_>>>()?;
        let env_seed = match std::env::var("RUN_SEED") {
            Ok(raw) => Some(
                raw.trim().parse().map_err(|_| CliError::Config(format!("RUN_SEED: expected an integer, got `{raw}`")))?,
            ),
            Err(_) => None,
        };
        Ok(Layers { file, sets, flags, env_seed })
    }

    /// The highest-precedence value given for `key`, if any.
    pub fn peek(&self, key: &str) -> Option<&Value> {
        fn last<'a>(layer: &'a [(String, Value)], key: &str) -> Option<&'a Value> {
            layer.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v)
        }
        last(&self.flags, key).or_else(|| last(&self.sets, key)).or_else(|| self.file.get(key))
    }

    /// Merges every layer over `base` and deserializes. Unknown keys and ill-typed values are
    /// reported by name.
    pub fn resolve<T: Serialize + DeserializeOwned>(&self, base: &T) -> CliResult<T> {
        let Value::Object(defaults) = serde_json::to_value(base)? else {
            return Err(CliError::Failure("configuration must serialize to an object".into()));
        };
        let mut merged = defaults.clone();
        if let (Some(seed), true) = (self.env_seed, defaults.contains_key("seed")) {
            merged.insert("seed".into(), seed.into());
        }
        let layered = self.file.iter().chain(self.sets.iter().chain(&self.flags).map(|(k, v)| (k, v)));
        for (key, value) in layered {
            if !defaults.contains_key(key) {
                let mut known: Vec<&str> = defaults.keys().map(String::as_str).collect();
                known.sort_unstable();
                return Err(CliError::Config(format!("unknown key `{key}` (expected one of: {})", known.join(", "))));
            }
            merged.insert(key.clone(), value.clone());
        }
        match serde_json::from_value(Value::Object(merged.clone())) {
            Ok(v) => Ok(v),
            Err(err) => {
                for (key, value) in &merged {
                    if defaults.get(key) == Some(value) {
                        continue;
                    }
                    let mut probe = defaults.clone();
                    probe.insert(key.clone(), value.clone());
                    if let Err(e) = serde_json::from_value::<T>(Value::Object(probe)) {
                        return Err(CliError::Config(format!("{key}: {e}")));
                    }
                }
                Err(CliError::Config(err.to_string()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(default)]
    struct Toy {
        p: u32,
        seed: u64,
        name: String,
    }

    fn layers(file: Value, sets: &[(&str, &str)], flags: &[(&str, Value)]) -> Layers {
        Layers {
            file: file.as_object().cloned().unwrap_or_default(),
            sets: sets.iter().map(|(k, v)| (k.to_string(), parse_value(v))).collect(),
            flags: flags.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            env_seed: None,
        }
    }

    #[test]
    fn precedence() {
        let l = layers(serde_json::json!({"p": 1, "seed": 5}), &[("p", "2")], &[]);
        assert_eq!(l.resolve(&Toy::default()).unwrap(), Toy { p: 2, seed: 5, name: String::new() });
        let l = layers(serde_json::json!({"p": 1}), &[("p", "2")], &[("p", 3.into())]);
        assert_eq!(l.resolve(&Toy::default()).unwrap().p, 3);
        let mut l = layers(serde_json::json!({}), &[("name", "abc")], &[]);
        l.env_seed = Some(9);
        assert_eq!(l.resolve(&Toy::default()).unwrap(), Toy { p: 0, seed: 9, name: "abc".into() });
        let mut l = layers(serde_json::json!({"seed": 4}), &[], &[]);
        l.env_seed = Some(9);
        assert_eq!(l.resolve(&Toy::default()).unwrap().seed, 4);
    }

    #[test]
    fn errors_name_the_key() {
        let err = layers(serde_json::json!({"q": 1}), &[], &[]).resolve(&Toy::default()).unwrap_err();
        assert!(err.to_string().contains("`q`"));
        let err = layers(serde_json::json!({}), &[("p", "many")], &[]).resolve(&Toy::default()).unwrap_err();
        assert!(err.to_string().contains("p:"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }
}

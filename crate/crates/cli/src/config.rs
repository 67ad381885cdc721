//! Flag and config-file merging.
//!
//! A config file is a JSON object with one section per subcommand, keyed by
//! the subcommand name. Section keys are the long flag names in snake case:
//!
//! ```json
//! { "train": { "epochs": 120, "batch_size": 16 }, "eval": { "runs": 5 } }
//! ```
//!
//! Explicit flags win over the file, and the file wins over built-in
//! defaults.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

/// Overlays the non-null fields of `flags` on the `section` object of the
/// config file and deserializes the result.
pub fn resolve<T>(flags: &T, config: Option<&Path>, section: &str) -> Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let mut merged = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            let root: Value = serde_json::from_str(&text)
                .with_context(|| format!("config file {} is not valid JSON", path.display()))?;
            let Value::Object(mut root) = root else {
                bail!("config file {} must hold a JSON object", path.display());
            };
            match root.remove(section) {
                Some(Value::Object(m)) => m,
                Some(_) => bail!("config section {section:?} must be an object"),
                None => Default::default(),
            }
        }
        None => Default::default(),
    };
    let Value::Object(flags) = serde_json::to_value(flags)? else {
        unreachable!("flag structs serialize to objects");
    };
    for (k, v) in flags {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged))
        .with_context(|| format!("invalid settings in config section {section:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Default, PartialEq, Serialize, Deserialize)]
    #[serde(default, deny_unknown_fields)]
    struct Opts {
        epochs: Option<usize>,
        seed: Option<u64>,
        name: Option<String>,
    }

    #[test]
    fn flags_beat_file_beats_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"train": {"epochs": 7, "seed": 3}, "eval": {"seed": 9}}"#).unwrap();
        let flags = Opts {
            seed: Some(1),
            ..Opts::default()
        };
        let got = resolve(&flags, Some(&path), "train").unwrap();
        assert_eq!(
            got,
            Opts {
                epochs: Some(7),
                seed: Some(1),
                name: None
            }
        );
        assert_eq!(resolve(&Opts::default(), None, "train").unwrap(), Opts::default());
    }

    #[test]
    fn unknown_keys_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"train": {"epoch": 7}}"#).unwrap();
        let err = resolve(&Opts::default(), Some(&path), "train").unwrap_err();
        assert!(format!("{err:#}").contains("epoch"));
    }
}

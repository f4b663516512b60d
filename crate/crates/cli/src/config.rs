//! JSON run configuration. Command-line flags override every field.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use inferbias::{ObjectScope, ProbeKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub workers: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub probe: Option<ProbeKind>,
    pub object_scope: Option<ObjectScope>,
    pub dedupe_polarity: Option<bool>,
    pub limit_premise: Option<usize>,
    pub limit_verbs: Option<usize>,
    pub limit_objects: Option<usize>,
    pub taus: Option<Vec<f64>>,
    pub strict_fraction: Option<bool>,
    pub builtin_a: Option<f64>,
    pub builtin_t: Option<f64>,
    pub builtin_neutral_weight: Option<f64>,
    pub batch_size: Option<usize>,
    pub timeout_secs: Option<f64>,
    pub seeds: Option<usize>,
    pub seed_base: Option<u64>,
    pub decimals: Option<usize>,
    pub top_k: Option<usize>,
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Flag, else config, else default.
pub fn pick<T>(flag: Option<T>, config: Option<T>, default: T) -> T {
    flag.or(config).unwrap_or(default)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<Config>(r#"{"tau": [0.5]}"#).is_err());
        let c: Config = serde_json::from_str(r#"{"taus": [0.5], "probe": "religion"}"#).unwrap();
        assert_eq!(c.probe, Some(ProbeKind::Religion));
    }

    #[test]
    fn flags_win_over_config() {
        assert_eq!(pick(Some(3), Some(4), 5), 3);
        assert_eq!(pick(None, Some(4), 5), 4);
        assert_eq!(pick(None, None, 5), 5);
    }

    #[test]
    fn schema_lists_every_field() {
        let schema: serde_json::Value = serde_json::from_str(include_str!("../config.schema.json")).unwrap();
        let mut props: Vec<&str> = schema["properties"].as_object().unwrap().keys().map(String::as_str).collect();
        props.sort_unstable();
        let full = Config {
            workers: Some(1),
            data_dir: Some("d".into()),
            probe: Some(ProbeKind::Gender),
            object_scope: Some(ObjectScope::Full),
            dedupe_polarity: Some(false),
            limit_premise: Some(1),
            limit_verbs: Some(1),
            limit_objects: Some(1),
            taus: Some(vec![0.5]),
            strict_fraction: Some(false),
            builtin_a: Some(5.0),
            builtin_t: Some(0.5),
            builtin_neutral_weight: Some(1.0),
            batch_size: Some(64),
            timeout_secs: Some(1.0),
            seeds: Some(8),
            seed_base: Some(0),
            decimals: Some(6),
            top_k: Some(3),
        };
        let value = serde_json::to_value(&full).unwrap();
        let mut fields: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
        fields.sort_unstable();
        assert_eq!(props, fields);
        assert_eq!(serde_json::from_value::<Config>(value).unwrap(), full);
    }
}

//! Per-repository detection settings.
//!
//! The on-disk form is a flat JSON object whose keys are exactly the field
//! names of [`RepoConfig`]. Absent keys take their defaults.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// How the RCE builder decides that a file was concurrently edited.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RceConcurrency {
    /// A file is concurrent only if it appears in two time-overlapping PRs.
    #[default]
    File,
    /// Every file of a PR that time-overlaps any other PR is concurrent.
    PullRequest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepoConfig {
    /// Minimum extent of overlap, in percent, for the EOO branch of the threshold.
    pub eoo_min: f64,
    /// Minimum number of shared RCE files for the RCE branch of the threshold.
    pub rce_min: u32,
    /// Minimum number of overlapping files required alongside `eoo_min`.
    pub min_overlap_files: u32,
    pub max_pr_age_days: u32,
    pub max_files_per_pr: u32,
    /// Lowercase extensions including the leading dot, e.g. `.cs`.
    pub allow_list: BTreeSet<String>,
    /// Merges within a trailing 30-day window at which a file counts as hot.
    pub hot_file_edit_limit: u32,
    pub rce_window_days: u32,
    pub rce_refresh_days: u32,
    /// Persist notifications without emitting them.
    pub shadow_mode: bool,
    /// Skip pairs where both PRs share an author.
    pub exclude_same_author: bool,
    pub rce_concurrency: RceConcurrency,
}

pub const DEFAULT_ALLOW_LIST: [&str; 8] = [".cs", ".c", ".cpp", ".ts", ".py", ".java", ".js", ".sql"];

impl Default for RepoConfig {
    fn default() -> Self {
        Self {
            eoo_min: 50.0,
            rce_min: 2,
            min_overlap_files: 2,
            max_pr_age_days: 30,
            max_files_per_pr: 50,
            allow_list: DEFAULT_ALLOW_LIST.iter().map(|s| s.to_string()).collect(),
            hot_file_edit_limit: 20,
            rce_window_days: 90,
            rce_refresh_days: 7,
            shadow_mode: false,
            exclude_same_author: true,
            rce_concurrency: RceConcurrency::File,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
}

impl ConfigError {
    fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    /// The offending key, for validation errors.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { key, .. } | ConfigError::UnknownKey(key) => Some(key),
            ConfigError::Parse { .. } => None,
        }
    }
}

/// Parses a flat JSON config document. Blank input yields the defaults.
pub fn parse_config(text: &str) -> Result<RepoConfig, ConfigError> {
    if text.trim().is_empty() {
        return Ok(RepoConfig::default());
    }
    let value: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let Value::Object(map) = value else {
        return Err(ConfigError::Parse {
            line: 1,
            column: 1,
            message: "expected a JSON object".into(),
        });
    };
    config_from_map(&map)
}

fn config_from_map(map: &Map<String, Value>) -> Result<RepoConfig, ConfigError> {
    let mut cfg = RepoConfig::default();
    for (key, value) in map {
        match key.as_str() {
            "eoo_min" => {
                let v = value
                    .as_f64()
                    .ok_or_else(|| ConfigError::invalid(key, "expected a number"))?;
                cfg.eoo_min = v;
            }
            "rce_min" => cfg.rce_min = count(key, value)?,
            "min_overlap_files" => cfg.min_overlap_files = count(key, value)?,
            "max_pr_age_days" => cfg.max_pr_age_days = count(key, value)?,
            "max_files_per_pr" => cfg.max_files_per_pr = count(key, value)?,
            "hot_file_edit_limit" => cfg.hot_file_edit_limit = count(key, value)?,
            "rce_window_days" => cfg.rce_window_days = count(key, value)?,
            "rce_refresh_days" => cfg.rce_refresh_days = count(key, value)?,
            "shadow_mode" => cfg.shadow_mode = boolean(key, value)?,
            "exclude_same_author" => cfg.exclude_same_author = boolean(key, value)?,
            "allow_list" => {
                let items = value
                    .as_array()
                    .ok_or_else(|| ConfigError::invalid(key, "expected an array of extensions"))?;
                let mut set = BTreeSet::new();
                for item in items {
                    let ext = item
                        .as_str()
                        .ok_or_else(|| ConfigError::invalid(key, "extensions must be strings"))?;
                    set.insert(normalize_extension(ext).ok_or_else(|| {
                        ConfigError::invalid(key, format!("`{ext}` is not a file extension"))
                    })?);
                }
                cfg.allow_list = set;
            }
            "rce_concurrency" => {
                cfg.rce_concurrency = serde_json::from_value(value.clone()).map_err(|_| {
                    ConfigError::invalid(key, "expected \"file\" or \"pull_request\"")
                })?;
            }
            _ => return Err(ConfigError::UnknownKey(key.clone())),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn count(key: &str, value: &Value) -> Result<u32, ConfigError> {
    value
        .as_u64()
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| ConfigError::invalid(key, "expected a non-negative integer"))
}

fn boolean(key: &str, value: &Value) -> Result<bool, ConfigError> {
    value
        .as_bool()
        .ok_or_else(|| ConfigError::invalid(key, "expected true or false"))
}

/// `"CS"`, `"cs"` and `".cs"` all normalize to `".cs"`.
pub fn normalize_extension(ext: &str) -> Option<String> {
    let trimmed = ext.trim().trim_start_matches('.');
    if trimmed.is_empty() || trimmed.contains(['/', '\\', '.']) {
        return None;
    }
    Some(format!(".{}", trimmed.to_lowercase()))
}

impl RepoConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.eoo_min.is_finite() || !(0.0..=100.0).contains(&self.eoo_min) {
            return Err(ConfigError::invalid("eoo_min", "must be within [0, 100]"));
        }
        for (key, days) in [
            ("max_pr_age_days", self.max_pr_age_days),
            ("rce_window_days", self.rce_window_days),
            ("rce_refresh_days", self.rce_refresh_days),
        ] {
            if days == 0 {
                return Err(ConfigError::invalid(key, "day spans must be positive"));
            }
        }
        if self.allow_list.is_empty() {
            return Err(ConfigError::invalid("allow_list", "must not be empty"));
        }
        if let Some(bad) = self
            .allow_list
            .iter()
            .find(|e| normalize_extension(e).as_deref() != Some(e.as_str()))
        {
            return Err(ConfigError::invalid(
                "allow_list",
                format!("`{bad}` is not a normalized extension"),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn max_pr_age(&self) -> chrono::Duration {
        chrono::Duration::days(i64::from(self.max_pr_age_days))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg.eoo_min, 50.0);
        assert_eq!(cfg.rce_min, 2);
        assert_eq!(cfg.min_overlap_files, 2);
        assert_eq!(cfg.max_pr_age_days, 30);
        assert_eq!(cfg.max_files_per_pr, 50);
        assert_eq!(cfg.hot_file_edit_limit, 20);
        assert_eq!(cfg.rce_window_days, 90);
        assert_eq!(cfg.rce_refresh_days, 7);
        assert!(!cfg.shadow_mode);
        assert_eq!(cfg.allow_list.len(), 8);
        assert_eq!(parse_config("{}").unwrap(), cfg);
    }

    #[test]
    fn zero_eoo_accepted() {
        let cfg = parse_config(r#"{"eoo_min": 0}"#).unwrap();
        assert_eq!(cfg.eoo_min, 0.0);
        assert_eq!(cfg.rce_min, 2);
    }

    #[test]
    fn out_of_range_names_key() {
        let err = parse_config(r#"{"eoo_min": 101}"#).unwrap_err();
        assert_eq!(err.key(), Some("eoo_min"));
        let err = parse_config(r#"{"eoo_min": 150}"#).unwrap_err();
        assert_eq!(err.key(), Some("eoo_min"));
        let err = parse_config(r#"{"rce_min": -1}"#).unwrap_err();
        assert_eq!(err.key(), Some("rce_min"));
        let err = parse_config(r#"{"rce_window_days": 0}"#).unwrap_err();
        assert_eq!(err.key(), Some("rce_window_days"));
        let err = parse_config(r#"{"allow_list": []}"#).unwrap_err();
        assert_eq!(err.key(), Some("allow_list"));
    }

    #[test]
    fn malformed_document_names_line() {
        let err = parse_config("{\n  \"eoo_min\": 10,\n  oops\n}").unwrap_err();
        match err {
            ConfigError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config(r#"{"eoo_minimum": 10}"#).unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("eoo_minimum".into()));
    }

    #[test]
    fn allow_list_is_normalized() {
        let cfg = parse_config(r#"{"allow_list": ["CS", ".Py"]}"#).unwrap();
        assert_eq!(
            cfg.allow_list,
            [".cs", ".py"].iter().map(|s| s.to_string()).collect()
        );
        assert!(parse_config(r#"{"allow_list": ["a/b"]}"#).is_err());
    }

    #[test]
    fn serialize_round_trip() {
        let cfg = RepoConfig {
            eoo_min: 37.5,
            shadow_mode: true,
            rce_concurrency: RceConcurrency::PullRequest,
            ..RepoConfig::default()
        };
        assert_eq!(parse_config(&cfg.to_json()).unwrap(), cfg);
    }
}

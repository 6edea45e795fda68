//! Plain-text `key = value` run configuration.

use std::fmt::Write as _;
use std::path::Path;

use expose_core::search::{EngineKind, SearchConfig};
use expose_core::{Config, ValueEstimator};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}: {text:?}")]
    Malformed {
        line: usize,
        text: String,
        message: String,
    },
    #[error("{key}: {message}")]
    BadOverride { key: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Search settings plus the evaluation protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub search: Config,
    /// Environment steps per episode; `None` uses the environment horizon.
    pub step_cap: Option<usize>,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            step_cap: None,
            workers: 1,
        }
    }
}

pub const KEYS: &[&str] = &[
    "engine",
    "iterations",
    "horizon",
    "c_explore",
    "alpha",
    "entropy_coef",
    "l2_coef",
    "gamma",
    "seed",
    "no_importance_sampling",
    "no_baseline",
    "value_net_baseline",
    "algorithm1_mode",
    "weight_clip",
    "value_estimator",
    "bootstrap_returns",
    "step_cap",
    "workers",
];

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn parse_optional<T: std::str::FromStr>(v: &str) -> Result<Option<T>, String> {
    if v == "none" {
        Ok(None)
    } else {
        parse_num(v).map(Some)
    }
}

fn show_optional<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

impl RunConfig {
    /// Sets one key. Unknown keys and unparsable values are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let s = &mut self.search;
        match key {
            "engine" => s.engine = value.parse::<EngineKind>()?,
            "iterations" => s.iterations = parse_num(value)?,
            "horizon" => s.horizon = parse_optional(value)?,
            "c_explore" => s.c_explore = parse_num(value)?,
            "alpha" => s.alpha = parse_num(value)?,
            "entropy_coef" => s.entropy_coef = parse_num(value)?,
            "l2_coef" => s.l2_coef = parse_num(value)?,
            "gamma" => s.gamma = parse_num(value)?,
            "seed" => s.seed = parse_num(value)?,
            "no_importance_sampling" => s.ablation.no_importance_sampling = parse_bool(value)?,
            "no_baseline" => s.ablation.no_baseline = parse_bool(value)?,
            "value_net_baseline" => s.ablation.value_net_baseline = parse_bool(value)?,
            "algorithm1_mode" => s.ablation.algorithm1_mode = parse_bool(value)?,
            "weight_clip" => s.weight_clip = parse_optional(value)?,
            "value_estimator" => s.value_estimator = value.parse::<ValueEstimator>()?,
            "bootstrap_returns" => s.bootstrap_returns = parse_bool(value)?,
            "step_cap" => self.step_cap = parse_optional(value)?,
            "workers" => self.workers = parse_num::<usize>(value)?.max(1),
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.search;
        let ab = s.ablation;
        Some(match key {
            "engine" => s.engine.to_string(),
            "iterations" => s.iterations.to_string(),
            "horizon" => show_optional(&s.horizon),
            "c_explore" => s.c_explore.to_string(),
            "alpha" => s.alpha.to_string(),
            "entropy_coef" => s.entropy_coef.to_string(),
            "l2_coef" => s.l2_coef.to_string(),
            "gamma" => s.gamma.to_string(),
            "seed" => s.seed.to_string(),
            "no_importance_sampling" => ab.no_importance_sampling.to_string(),
            "no_baseline" => ab.no_baseline.to_string(),
            "value_net_baseline" => ab.value_net_baseline.to_string(),
            "algorithm1_mode" => ab.algorithm1_mode.to_string(),
            "weight_clip" => show_optional(&s.weight_clip),
            "value_estimator" => s.value_estimator.name().to_string(),
            "bootstrap_returns" => s.bootstrap_returns.to_string(),
            "step_cap" => show_optional(&self.step_cap),
            "workers" => self.workers.to_string(),
            _ => return None,
        })
    }

    /// Applies the lines of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let malformed = |message: String| ConfigError::Malformed {
                line: i + 1,
                text: raw.to_string(),
                message,
            };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| malformed("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(malformed("empty key or value".into()));
            }
            self.set(key, value).map_err(malformed)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key=value` overrides given on the command line.
    pub fn apply_overrides(&mut self, pairs: &[String]) -> Result<(), ConfigError> {
        for pair in pairs {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| ConfigError::BadOverride {
                    key: pair.clone(),
                    message: "expected key=value".into(),
                })?;
            self.set(key.trim(), value.trim())
                .map_err(|message| ConfigError::BadOverride {
                    key: key.trim().to_string(),
                    message,
                })?;
        }
        Ok(())
    }

    /// Every key in file syntax; parses back to an identical config.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("engine", "pgs").unwrap();
        cfg.set("weight_clip", "none").unwrap();
        cfg.set("c_explore", "2.5").unwrap();
        cfg.set("step_cap", "17").unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&cfg.render()).unwrap();
        assert_eq!(back, cfg);
        let mut defaults = RunConfig::default();
        defaults.apply_text(&RunConfig::default().render()).unwrap();
        assert_eq!(defaults, RunConfig::default());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# header\n\niterations = 7   # trailing\n  alpha=0.5\n")
            .unwrap();
        assert_eq!(cfg.search.iterations, 7);
        assert_eq!(cfg.search.alpha, 0.5);
    }

    #[test]
    fn malformed_lines_report_their_number() {
        let mut cfg = RunConfig::default();
        let err = cfg
            .apply_text("iterations = 3\nthis is wrong\n")
            .unwrap_err();
        assert!(matches!(err, ConfigError::Malformed { line: 2, .. }));
        let err = cfg.apply_text("colour = blue").unwrap_err();
        assert!(err.to_string().contains("unknown key"));
        let err = cfg.apply_text("iterations = many").unwrap_err();
        assert!(matches!(err, ConfigError::Malformed { line: 1, .. }));
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("iterations = 3").unwrap();
        cfg.apply_overrides(&["iterations=9".to_string()]).unwrap();
        assert_eq!(cfg.search.iterations, 9);
        assert!(cfg.apply_overrides(&["iterations".to_string()]).is_err());
    }
}

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use dialeval_core::eventlog::SessionMode;
use dialeval_core::qc::DEFAULT_ALPHA;
use dialeval_core::types::{SystemKind, SystemUnderTest, GENUINE_PER_HIT};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn default_port() -> u16 {
    8080
}

fn default_log_path() -> PathBuf {
    PathBuf::from("events.jsonl")
}

fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}

fn default_timeout_ms() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub systems: Vec<SystemUnderTest>,
    #[serde(default = "default_mode")]
    pub mode: SessionMode,
    /// Ice-breaker statements for systems without a persona.
    #[serde(default)]
    pub persona_pool: Vec<String>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    /// Response corpus for the built-in bots; the bundled corpus when absent.
    #[serde(default)]
    pub corpus_path: Option<PathBuf>,
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default = "default_log_path")]
    pub log_path: PathBuf,
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    #[serde(default = "default_timeout_ms")]
    pub adapter_timeout_ms: u64,
}

fn default_mode() -> SessionMode {
    SessionMode::FreeTopic
}

impl HarnessConfig {
    pub fn new(systems: Vec<SystemUnderTest>) -> Self {
        Self {
            systems,
            mode: default_mode(),
            persona_pool: Vec::new(),
            alpha: default_alpha(),
            seed: 0,
            corpus_path: None,
            port: default_port(),
            log_path: default_log_path(),
            static_dir: None,
            adapter_timeout_ms: default_timeout_ms(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: Self = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        // relative paths are resolved against the config file's directory
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut config.log_path);
        if let Some(p) = config.corpus_path.as_mut() {
            resolve(p);
        }
        if let Some(p) = config.static_dir.as_mut() {
            resolve(p);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let mut ids = BTreeSet::new();
        for s in &self.systems {
            if s.system_id.as_str().trim().is_empty() {
                return bad("system with empty id".into());
            }
            if !ids.insert(&s.system_id) {
                return bad(format!("duplicate system id {}", s.system_id));
            }
            if let Some(p) = &s.persona {
                if p.is_empty() || p.iter().any(|l| l.trim().is_empty()) {
                    return bad(format!("system {}: persona must be a non-empty list of statements", s.system_id));
                }
            }
            if let SystemKind::Adapter { endpoint } = &s.kind {
                // the adapter client is built without TLS; put a proxy in front of https models
                if !endpoint.starts_with("http://") {
                    return bad(format!("system {}: adapter endpoint must be an http:// url", s.system_id));
                }
            }
        }
        let degraded = self.systems.iter().filter(|s| s.is_degraded()).count();
        if degraded != 1 {
            return bad(format!("exactly one builtin_degraded system is required, found {degraded}"));
        }
        let genuine = self.systems.len() - degraded;
        if genuine < GENUINE_PER_HIT {
            return bad(format!("insufficient systems: {genuine} genuine, at least {GENUINE_PER_HIT} required"));
        }
        if self.mode == SessionMode::IceBreaker
            && self.persona_pool.is_empty()
            && self.systems.iter().any(|s| s.persona.is_none())
        {
            return bad("ice-breaker mode needs a persona_pool for systems without a persona".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if self.adapter_timeout_ms == 0 {
            return bad("adapter_timeout_ms must be positive".into());
        }
        Ok(())
    }

    pub fn system(&self, id: &dialeval_core::SystemId) -> Option<&SystemUnderTest> {
        self.systems.iter().find(|s| &s.system_id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn systems(genuine: usize) -> Vec<SystemUnderTest> {
        let mut v: Vec<SystemUnderTest> = (0..genuine)
            .map(|i| SystemUnderTest {
                system_id: format!("g{i}").into(),
                display_name: format!("G{i}"),
                persona: None,
                kind: SystemKind::BuiltinRetrieval,
            })
            .collect();
        v.push(SystemUnderTest {
            system_id: "qc".into(),
            display_name: "QC".into(),
            persona: None,
            kind: SystemKind::BuiltinDegraded,
        });
        v
    }

    #[test]
    fn minimal_json_gets_defaults() {
        let json = serde_json::json!({ "systems": systems(5) });
        let c: HarnessConfig = serde_json::from_value(json).unwrap();
        assert_eq!(c.port, 8080);
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.mode, SessionMode::FreeTopic);
        c.validate().unwrap();
    }

    #[test]
    fn too_few_systems() {
        let err = HarnessConfig::new(systems(4)).validate().unwrap_err();
        assert!(err.to_string().contains("insufficient systems"), "{err}");
    }

    #[test]
    fn ice_breaker_without_pool() {
        let mut c = HarnessConfig::new(systems(5));
        c.mode = SessionMode::IceBreaker;
        assert!(c.validate().is_err());
        c.persona_pool = vec!["i like tea .".into()];
        c.validate().unwrap();
    }

    #[test]
    fn empty_persona_rejected() {
        let mut s = systems(5);
        s[0].persona = Some(vec![]);
        assert!(HarnessConfig::new(s).validate().is_err());
    }

    #[test]
    fn adapter_endpoint_must_be_plain_http() {
        let mut s = systems(5);
        for (endpoint, ok) in [("http://127.0.0.1:9000", true), ("https://models.example", false), ("127.0.0.1:9000", false)] {
            s[0].kind = SystemKind::Adapter { endpoint: endpoint.into() };
            assert_eq!(HarnessConfig::new(s.clone()).validate().is_ok(), ok, "{endpoint}");
        }
    }
}

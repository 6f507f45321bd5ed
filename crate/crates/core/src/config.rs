//! Experiment configuration files (TOML).
//!
//! Every key has a default, unknown keys are rejected, and validation errors
//! carry the dotted key path (`agent.gamma`). Relative paths inside a file are
//! resolved against the file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::kpi::{KpiComposer, KpiManifest, RewardBounds, RewardMode};
use crate::ransim::{
    default_profiles, fit_traffic_profiles, read_traffic_records, SchedulerOption, SimConfig, UeProfile,
};
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; episode seeds derive from it.
    pub seed: u64,
    /// Training episodes.
    pub episodes: usize,
    pub steps_demand: usize,
    pub steps_rest: usize,
    pub reward_mode: RewardMode,
    /// Reference constant policy; the best of the baseline suite when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_action: Option<SchedulerOption>,
    pub baseline_episodes: usize,
    pub checkpoint_every: usize,
    /// Historical experiences loaded into the replay buffer before training.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preload: Option<PathBuf>,
    pub sim: SimConfig,
    pub agent: AgentConfig,
    pub kpi: KpiSettings,
    /// When set, UE profiles are fitted from session records instead of `ue_profiles`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub traffic: Option<TrafficFit>,
    pub ue_profiles: Vec<UeProfile>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KpiSettings {
    /// Manifest CSV; the built-in default layout when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Required digest of the manifest in use.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficFit {
    pub records: PathBuf,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_k() -> usize {
    4
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            episodes: 300,
            steps_demand: 80,
            steps_rest: 10,
            reward_mode: RewardMode::CellThroughput,
            baseline_action: None,
            baseline_episodes: 10,
            checkpoint_every: 10,
            preload: None,
            sim: SimConfig::default(),
            agent: AgentConfig::default(),
            kpi: KpiSettings::default(),
            traffic: None,
            ue_profiles: default_profiles(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    /// Parses, resolves relative paths against `base_dir`, and validates.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let de = toml::de::Deserializer::parse(text).map_err(|e| Error::config("<file>", e.message()))?;
        let mut cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let key = if path == "." { "<file>".to_string() } else { path };
            Error::config(key, e.into_inner().message())
        })?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        if let Some(p) = cfg.preload.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.kpi.manifest.as_mut() {
            resolve(p);
        }
        if let Some(t) = cfg.traffic.as_mut() {
            resolve(&mut t.records);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// The fully resolved configuration; feeding it back reproduces the run.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.sim
            .validate()
            .map_err(|(k, r)| Error::config(format!("sim.{k}"), r))?;
        self.agent
            .validate()
            .map_err(|(k, r)| Error::config(format!("agent.{k}"), r))?;
        if self.steps_demand == 0 {
            return Err(Error::config("steps_demand", "must be positive"));
        }
        if self.baseline_episodes < 10 {
            return Err(Error::config(
                "baseline_episodes",
                format!("must be at least 10, got {}", self.baseline_episodes),
            ));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::config("checkpoint_every", "must be positive"));
        }
        if self.ue_profiles.is_empty() {
            return Err(Error::config("ue_profiles", "at least one UE is required"));
        }
        for (i, p) in self.ue_profiles.iter().enumerate() {
            p.validate()
                .map_err(|r| Error::config(format!("ue_profiles[{i}]"), r))?;
        }
        if let Some(t) = &self.traffic {
            if t.k == 0 {
                return Err(Error::config("traffic.k", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn steps_per_episode(&self) -> usize {
        self.steps_demand + self.steps_rest
    }

    /// UE profiles in effect: fitted from `traffic.records` when configured.
    pub fn resolve_profiles(&self) -> Result<Vec<UeProfile>> {
        match &self.traffic {
            Some(t) => {
                let records = read_traffic_records(&t.records)?;
                fit_traffic_profiles(&records, t.k, seed::derive(self.seed, 0x7AFF))
            }
            None => Ok(self.ue_profiles.clone()),
        }
    }

    /// KPI composer for `num_ues` UEs, enforcing the configured manifest digest.
    pub fn kpi_composer(&self, num_ues: usize) -> Result<KpiComposer> {
        let expected = self.kpi.manifest_sha256.as_deref();
        let manifest = match &self.kpi.manifest {
            Some(path) => KpiManifest::load(path, expected)?,
            None => {
                let m = KpiManifest::default_for(&self.sim, num_ues, self.steps_per_episode());
                if let Some(expected) = expected {
                    let actual = m.sha256();
                    if !actual.eq_ignore_ascii_case(expected.trim()) {
                        return Err(Error::Manifest(format!(
                            "built-in manifest has sha256 {actual}, config expects {expected}"
                        )));
                    }
                }
                m
            }
        };
        Ok(KpiComposer::new(manifest, self.steps_demand))
    }

    pub fn reward_bounds(&self) -> RewardBounds {
        RewardBounds::for_sim(&self.sim)
    }
}

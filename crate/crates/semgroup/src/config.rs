//! Run configuration: one strict JSON document per experiment batch.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use semgroup_core::grouping::GroupingConfig;
use semgroup_core::learner::WarmupConfig;
use semgroup_core::metrics::ForgettingMode;
use semgroup_core::models::{Policy, TuningConfig};
use semgroup_core::pipeline::ExperimentConfig;
use semgroup_core::scenarios::ScenarioConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    /// Directory for reports and CSVs.
    pub dir: PathBuf,
    /// Stream file written by `generate`, relative to `dir` unless absolute.
    pub stream: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), stream: PathBuf::from("stream.jsonl") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub grouping: GroupingConfig,
    pub warmup: WarmupConfig,
    pub tuning: TuningConfig,
    pub forgetting: ForgettingMode,
    pub repository_cap: Option<usize>,
    pub objective_alpha: f64,
    pub policies: Vec<Policy>,
    /// Run seeds. Seed `s` also shifts the scenario seed by `s`, so every
    /// seed sees its own stream unless `stream` is given.
    pub seeds: Vec<u64>,
    /// Run every seed on this stream file instead of generating streams.
    pub stream: Option<PathBuf>,
    pub outputs: OutputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            grouping: GroupingConfig::default(),
            warmup: WarmupConfig::default(),
            tuning: TuningConfig::default(),
            forgetting: ForgettingMode::default(),
            repository_cap: None,
            objective_alpha: 1.0,
            policies: vec![Policy::Universal, Policy::Specific, Policy::NoRefine, Policy::AvgMerge, Policy::Adaptive],
            seeds: vec![0, 1, 2, 3, 4],
            stream: None,
            outputs: OutputPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        // Relative paths inside the config are relative to the config file.
        if let Some(base) = path.parent() {
            if let Some(s) = &cfg.stream {
                if s.is_relative() {
                    cfg.stream = Some(base.join(s));
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.scenario.validate().context("scenario")?;
        self.experiment().validate().context("experiment")?;
        if self.policies.is_empty() {
            bail!("policies must not be empty");
        }
        if self.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        let mut p = self.policies.clone();
        p.sort();
        p.dedup();
        if p.len() != self.policies.len() {
            bail!("policies contain duplicates");
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            bail!("seeds contain duplicates");
        }
        Ok(())
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            grouping: self.grouping.clone(),
            warmup: self.warmup.clone(),
            tuning: self.tuning.clone(),
            forgetting: self.forgetting,
            repository_cap: self.repository_cap,
            objective_alpha: self.objective_alpha,
        }
    }

    /// Scenario for run seed `seed`.
    pub fn scenario_for(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig { seed: self.scenario.seed.wrapping_add(seed), ..self.scenario.clone() }
    }

    pub fn stream_path(&self) -> PathBuf {
        if self.outputs.stream.is_absolute() {
            self.outputs.stream.clone()
        } else {
            self.outputs.dir.join(&self.outputs.stream)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_all_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let e = RunConfig::from_json(r#"{"grouping": {"radus": 0.4}}"#).unwrap_err();
        assert!(format!("{e:#}").contains("radus"), "{e:#}");
        assert!(RunConfig::from_json(r#"{"extra": 1}"#).is_err());
    }

    #[test]
    fn semantic_checks_run_after_parsing() {
        assert!(RunConfig::from_json(r#"{"grouping": {"gamma": 0.5}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"policies": []}"#).is_err());
        assert!(RunConfig::from_json(r#"{"seeds": [1, 1]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"policies": ["adaptive", "oracle"]}"#).is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig { seeds: vec![3], policies: vec![Policy::NoRefine], ..RunConfig::default() };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }
}

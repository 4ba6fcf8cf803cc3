//! Benchmark configuration and its TOML file format.
//!
//! The shipped defaults live in `assets/benchmark.toml`; that file documents
//! every key.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::trial_store::{ConditionId, DatasetDescriptor, DatasetKind, TextureSource, Vocabulary, VocabularyError};

pub const DEFAULT_CONFIG_ASSET: &str = include_str!("../assets/benchmark.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionMode {
    #[default]
    Explicit,
    RuleDerived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaPolicy {
    /// Missed trials are wrong answers.
    #[default]
    Incorrect,
    /// Missed trials are dropped from every denominator.
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyDifferenceForm {
    #[default]
    Squared,
    Absolute,
}

/// Knobs that change how individual metric cells are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MetricOptions {
    pub na_policy: NaPolicy,
    pub accuracy_difference_form: AccuracyDifferenceForm,
    pub exclude_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub datasets: Vec<DatasetDescriptor>,
    /// Explicit per-dataset exclusion lists, used in [`ExclusionMode::Explicit`].
    pub excluded_conditions: BTreeMap<String, BTreeSet<ConditionId>>,
    /// Dropped in every mode.
    pub also_excluded: BTreeMap<String, BTreeSet<ConditionId>>,
    pub exclusion_mode: ExclusionMode,
    pub human_accuracy_floor: f64,
    pub exclude_easiest: bool,
    pub metrics: MetricOptions,
    pub categories: Option<Vec<String>>,
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: dataset {dataset}: {reason}")]
    Invalid { dataset: String, reason: String },
    #[error("config: {0}")]
    Vocabulary(#[from] VocabularyError),
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    exclusion_mode: ExclusionMode,
    #[serde(default = "default_true")]
    exclude_easiest: bool,
    #[serde(default = "default_floor")]
    human_accuracy_floor: f64,
    #[serde(default)]
    na_policy: NaPolicy,
    #[serde(default)]
    accuracy_difference_form: AccuracyDifferenceForm,
    #[serde(default)]
    exclude_degenerate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mapping: Option<PathBuf>,
    #[serde(default)]
    datasets: Vec<DatasetEntry>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct DatasetEntry {
    id: String,
    kind: DatasetKind,
    conditions: Vec<ConditionId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    humans: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    texture: Option<TextureSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    excluded: Option<Vec<ConditionId>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    also_excluded: Vec<ConditionId>,
}

fn default_true() -> bool {
    true
}

fn default_floor() -> f64 {
    0.2
}

impl Default for BenchmarkConfig {
    /// The shipped 17-dataset configuration.
    fn default() -> Self {
        BenchmarkConfig::from_toml_str(DEFAULT_CONFIG_ASSET).expect("shipped config is valid")
    }
}

impl BenchmarkConfig {
    pub fn empty() -> Self {
        BenchmarkConfig {
            datasets: Vec::new(),
            excluded_conditions: BTreeMap::new(),
            also_excluded: BTreeMap::new(),
            exclusion_mode: ExclusionMode::Explicit,
            human_accuracy_floor: 0.2,
            exclude_easiest: true,
            metrics: MetricOptions::default(),
            categories: None,
            mapping: None,
        }
    }

    pub fn with_datasets(datasets: Vec<DatasetDescriptor>) -> Self {
        BenchmarkConfig { datasets, ..Self::empty() }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text)?;
        let mut cfg = BenchmarkConfig {
            exclusion_mode: file.exclusion_mode,
            exclude_easiest: file.exclude_easiest,
            human_accuracy_floor: file.human_accuracy_floor,
            metrics: MetricOptions {
                na_policy: file.na_policy,
                accuracy_difference_form: file.accuracy_difference_form,
                exclude_degenerate: file.exclude_degenerate,
            },
            categories: file.categories,
            mapping: file.mapping,
            ..Self::empty()
        };
        for entry in file.datasets {
            if let Some(list) = entry.excluded {
                cfg.excluded_conditions.insert(entry.id.clone(), list.into_iter().collect());
            }
            if !entry.also_excluded.is_empty() {
                cfg.also_excluded.insert(entry.id.clone(), entry.also_excluded.into_iter().collect());
            }
            cfg.datasets.push(DatasetDescriptor {
                dataset_id: entry.id,
                kind: entry.kind,
                conditions: entry.conditions,
                human_decider_ids: entry.humans,
                texture: entry.texture,
            });
        }
        cfg.check()?;
        Ok(cfg)
    }

    /// Loads a config file. A relative `mapping` path resolves against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(m), Some(dir)) = (cfg.mapping.as_mut(), path.parent()) {
            if m.is_relative() {
                *m = dir.join(&*m);
            }
        }
        for d in &mut cfg.datasets {
            if let (Some(TextureSource::Sidecar { path: p }), Some(dir)) = (d.texture.as_mut(), path.parent()) {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        let file = ConfigFile {
            exclusion_mode: self.exclusion_mode,
            exclude_easiest: self.exclude_easiest,
            human_accuracy_floor: self.human_accuracy_floor,
            na_policy: self.metrics.na_policy,
            accuracy_difference_form: self.metrics.accuracy_difference_form,
            exclude_degenerate: self.metrics.exclude_degenerate,
            categories: self.categories.clone(),
            mapping: self.mapping.clone(),
            datasets: self
                .datasets
                .iter()
                .map(|d| DatasetEntry {
                    id: d.dataset_id.clone(),
                    kind: d.kind,
                    conditions: d.conditions.clone(),
                    humans: d.human_decider_ids.clone(),
                    texture: d.texture.clone(),
                    excluded: self.excluded_conditions.get(&d.dataset_id).map(|s| s.iter().cloned().collect()),
                    also_excluded: self
                        .also_excluded
                        .get(&d.dataset_id)
                        .map(|s| s.iter().cloned().collect())
                        .unwrap_or_default(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("config serialises")
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.human_accuracy_floor) {
            return Err(ConfigError::Invalid {
                dataset: "*".into(),
                reason: format!("human_accuracy_floor {} outside [0, 1]", self.human_accuracy_floor),
            });
        }
        let mut ids = BTreeSet::new();
        for d in &self.datasets {
            d.check().map_err(|e| ConfigError::Invalid { dataset: d.dataset_id.clone(), reason: e.to_string() })?;
            if !ids.insert(d.dataset_id.as_str()) {
                return Err(ConfigError::Invalid { dataset: d.dataset_id.clone(), reason: "defined twice".into() });
            }
        }
        for (which, map) in [("excluded", &self.excluded_conditions), ("also_excluded", &self.also_excluded)] {
            for (ds, conds) in map {
                let Some(d) = self.dataset(ds) else {
                    return Err(ConfigError::Invalid {
                        dataset: ds.clone(),
                        reason: format!("{which} list for unknown dataset"),
                    });
                };
                if let Some(c) = conds.iter().find(|c| !d.has_condition(c.as_str())) {
                    return Err(ConfigError::Invalid {
                        dataset: ds.clone(),
                        reason: format!("{which} condition {c:?} is not one of the dataset's conditions"),
                    });
                }
            }
        }
        if let Some(names) = &self.categories {
            Vocabulary::new(names.iter().cloned())?;
        }
        Ok(())
    }

    pub fn dataset(&self, id: &str) -> Option<&DatasetDescriptor> {
        self.datasets.iter().find(|d| d.dataset_id == id)
    }

    pub fn vocabulary(&self) -> Result<Arc<Vocabulary>, ConfigError> {
        Ok(Arc::new(match &self.categories {
            Some(names) => Vocabulary::new(names.iter().cloned())?,
            None => Vocabulary::default(),
        }))
    }
}

//! Loaded benchmark data and the evaluations that run over it.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use crate::config::{BenchmarkConfig, ConfigError};
use crate::matrix::{build_matrix, pairwise_report, ConsistencyMatrix, DatasetDeciders, MatrixError, PairwiseReport};
use crate::metrics::{
    condition_accuracy, human_baseline, scores, shape_bias, texture_from_image_name, CellSet, ConditionAccuracy,
    DatasetSlice, HumanBaseline, HumanPool, MetricError, ShapeBias,
};
use crate::par::Exec;
use crate::ranker::{
    ood_accuracy, rank_models, rank_ood, retained_conditions, LeaderboardRow, ModelScores, OodRow, RankError,
};
use crate::trial_store::{
    load_dataset_dir, CategoryLabel, ConditionId, DatasetDescriptor, DecisionTable, StoreError, TextureSource,
    Vocabulary,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("unknown decider {0}")]
    UnknownDecider(String),
    #[error("model {model} has no decisions for dataset {dataset}")]
    MissingDataset { model: String, dataset: String },
    #[error("unknown dataset {0}")]
    UnknownDataset(String),
    #[error("no datasets found under {0}")]
    NoData(String),
    #[error("dataset {dataset}: {reason}")]
    Texture { dataset: String, reason: String },
}

/// Mean-rank rows, OOD rows, and the models that failed to evaluate.
pub type Leaderboards = (Vec<LeaderboardRow>, Vec<OodRow>, Vec<(String, EvalError)>);

pub type TextureLookup = Box<dyn Fn(&str) -> Option<CategoryLabel> + Send + Sync>;

/// Everything known about one dataset.
#[derive(Debug, Clone)]
pub struct DatasetData {
    pub descriptor: DatasetDescriptor,
    pub humans: Vec<DecisionTable>,
    pub models: BTreeMap<String, DecisionTable>,
    pub retained: Vec<ConditionId>,
}

impl DatasetData {
    pub fn human_refs(&self) -> Vec<&DecisionTable> {
        self.humans.iter().collect()
    }

    pub fn human_ids(&self) -> Vec<String> {
        self.humans.iter().map(|h| h.decider_id().to_owned()).collect()
    }

    pub fn decider(&self, id: &str) -> Option<&DecisionTable> {
        self.models.get(id).or_else(|| self.humans.iter().find(|h| h.decider_id() == id))
    }

    /// Humans first (sorted by id), then models (sorted by id).
    pub fn all_deciders(&self) -> Vec<&DecisionTable> {
        self.humans.iter().chain(self.models.values()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub config: BenchmarkConfig,
    pub vocab: Arc<Vocabulary>,
    pub datasets: Vec<DatasetData>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub dataset_id: String,
    pub retained_conditions: Vec<ConditionId>,
    pub humans: Vec<String>,
}

/// Scores of one model against the human pool.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub model_id: String,
    pub accuracy_difference: f64,
    pub observed_consistency: f64,
    pub error_consistency: f64,
    pub ood_accuracy: f64,
    pub datasets: Vec<DatasetSummary>,
    /// Model accuracy on every condition, retained or not.
    pub accuracies: Vec<ConditionAccuracy>,
    /// One entry per retained (dataset, condition, human).
    pub cells: Vec<CellSet>,
}

impl Benchmark {
    /// Groups already-loaded tables by dataset. Datasets of the config without
    /// tables are skipped.
    pub fn from_tables(
        config: BenchmarkConfig,
        vocab: Arc<Vocabulary>,
        tables: BTreeMap<String, Vec<DecisionTable>>,
    ) -> Result<Self, EvalError> {
        let mut datasets = Vec::new();
        for descriptor in &config.datasets {
            let Some(list) = tables.get(&descriptor.dataset_id) else { continue };
            let mut humans = Vec::new();
            let mut models = BTreeMap::new();
            for t in list {
                if descriptor.is_human(t.decider_id()) {
                    humans.push(t.clone());
                } else {
                    models.insert(t.decider_id().to_owned(), t.clone());
                }
            }
            humans.sort_by(|a, b| a.decider_id().cmp(b.decider_id()));
            let refs: Vec<&DecisionTable> = humans.iter().collect();
            let retained = retained_conditions(descriptor, &refs, &config)?;
            datasets.push(DatasetData { descriptor: descriptor.clone(), humans, models, retained });
        }
        if let Some(unknown) = tables.keys().find(|k| config.dataset(k).is_none()) {
            return Err(EvalError::UnknownDataset(unknown.clone()));
        }
        Ok(Benchmark { config, vocab, datasets })
    }

    /// Reads `<data_dir>/<dataset id>/*.csv` for every configured dataset.
    /// Missing dataset directories are skipped with a warning.
    pub fn load(config: BenchmarkConfig, data_dir: &Path, exec: Exec) -> Result<Self, EvalError> {
        let vocab = config.vocabulary()?;
        let present: Vec<&DatasetDescriptor> =
            config.datasets.iter().filter(|d| data_dir.join(&d.dataset_id).is_dir()).collect();
        for d in config.datasets.iter().filter(|d| !data_dir.join(&d.dataset_id).is_dir()) {
            log::warn!("no decision directory for dataset {}", d.dataset_id);
        }
        if present.is_empty() {
            return Err(EvalError::NoData(data_dir.display().to_string()));
        }
        let loaded =
            exec.map(&present, |d| load_dataset_dir(&data_dir.join(&d.dataset_id), d, &vocab, Exec::Sequential));
        let mut tables = BTreeMap::new();
        for (d, r) in present.iter().zip(loaded) {
            tables.insert(d.dataset_id.clone(), r?);
        }
        Self::from_tables(config, vocab, tables)
    }

    pub fn dataset(&self, id: &str) -> Option<&DatasetData> {
        self.datasets.iter().find(|d| d.descriptor.dataset_id == id)
    }

    /// Every non-human decider seen on any dataset, sorted.
    pub fn model_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.datasets.iter().flat_map(|d| d.models.keys().cloned()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn evaluate_model(&self, model_id: &str) -> Result<MetricReport, EvalError> {
        let mut pools = Vec::with_capacity(self.datasets.len());
        let mut candidates = Vec::with_capacity(self.datasets.len());
        for d in &self.datasets {
            let m = d.models.get(model_id).ok_or_else(|| EvalError::MissingDataset {
                model: model_id.into(),
                dataset: d.descriptor.dataset_id.clone(),
            })?;
            candidates.push(m);
            pools.push(d.human_refs());
        }
        if candidates.is_empty() {
            return Err(EvalError::UnknownDecider(model_id.into()));
        }
        let slices: Vec<DatasetSlice<'_>> = self
            .datasets
            .iter()
            .zip(&candidates)
            .zip(&pools)
            .map(|((d, m), pool)| DatasetSlice { candidate: m, humans: pool, conditions: &d.retained })
            .collect();
        let (cells, [a, o, e]) = scores(&slices, self.config.metrics)?;
        let ood_input: Vec<(&DecisionTable, &[ConditionId])> =
            self.datasets.iter().zip(&candidates).map(|(d, m)| (*m, d.retained.as_slice())).collect();
        let ood = ood_accuracy(&ood_input, &self.config)?;
        let mut accuracies = Vec::new();
        for (d, m) in self.datasets.iter().zip(&candidates) {
            for c in &d.descriptor.conditions {
                if m.has_condition(c.as_str()) {
                    accuracies.push(condition_accuracy(m, c.as_str(), self.config.metrics.na_policy)?);
                }
            }
        }
        Ok(MetricReport {
            model_id: model_id.into(),
            accuracy_difference: a,
            observed_consistency: o,
            error_consistency: e,
            ood_accuracy: ood,
            datasets: self
                .datasets
                .iter()
                .map(|d| DatasetSummary {
                    dataset_id: d.descriptor.dataset_id.clone(),
                    retained_conditions: d.retained.clone(),
                    humans: d.human_ids(),
                })
                .collect(),
            accuracies,
            cells,
        })
    }

    /// Evaluates each model independently; one model's failure does not
    /// affect the others. Output follows the order of `ids`.
    pub fn evaluate_models(&self, ids: &[String], exec: Exec) -> Vec<Result<MetricReport, EvalError>> {
        exec.map(ids, |id| self.evaluate_model(id))
    }

    pub fn human_baselines(&self) -> Result<Vec<HumanBaseline>, EvalError> {
        let refs: Vec<Vec<&DecisionTable>> = self.datasets.iter().map(|d| d.human_refs()).collect();
        let pools: Vec<HumanPool<'_>> =
            self.datasets.iter().zip(&refs).map(|(d, r)| HumanPool { humans: r, conditions: &d.retained }).collect();
        Ok(human_baseline(&pools, self.config.metrics)?)
    }

    /// Mean-rank and OOD leaderboards over `ids`. Models that fail to evaluate
    /// are returned separately and left out of the ranking.
    pub fn leaderboards(&self, ids: &[String], exec: Exec) -> Result<Leaderboards, EvalError> {
        let mut ok = Vec::new();
        let mut failed = Vec::new();
        for (id, r) in ids.iter().zip(self.evaluate_models(ids, exec)) {
            match r {
                Ok(rep) => ok.push(ModelScores {
                    model_id: rep.model_id,
                    accuracy_difference: Some(rep.accuracy_difference),
                    observed_consistency: Some(rep.observed_consistency),
                    error_consistency: Some(rep.error_consistency),
                    ood_accuracy: Some(rep.ood_accuracy),
                }),
                Err(e) => failed.push((id.clone(), e)),
            }
        }
        if ok.is_empty() {
            return Ok((Vec::new(), Vec::new(), failed));
        }
        Ok((rank_models(&ok)?, rank_ood(&ok)?, failed))
    }

    /// Error-consistency matrix over every decider of `dataset_id`.
    pub fn matrix(&self, dataset_id: &str, exec: Exec) -> Result<ConsistencyMatrix, EvalError> {
        let d = self.dataset(dataset_id).ok_or_else(|| EvalError::UnknownDataset(dataset_id.into()))?;
        Ok(build_matrix(&d.all_deciders(), &d.retained, self.config.metrics, exec)?)
    }

    pub fn pairwise(&self, pairs: &[(String, String)], dataset_ids: &[String]) -> Result<PairwiseReport, EvalError> {
        let mut ds = Vec::new();
        for id in dataset_ids {
            let d = self.dataset(id).ok_or_else(|| EvalError::UnknownDataset(id.clone()))?;
            ds.push(DatasetDeciders {
                dataset_id: &d.descriptor.dataset_id,
                tables: d.all_deciders().into_iter().map(|t| (t.decider_id(), t)).collect(),
                conditions: &d.retained,
            });
        }
        Ok(pairwise_report(pairs, &ds, self.config.metrics)?)
    }

    /// Shape bias of every decider on a cue-conflict dataset.
    pub fn shape_biases(&self, dataset_id: &str) -> Result<Vec<ShapeBias>, EvalError> {
        let d = self.dataset(dataset_id).ok_or_else(|| EvalError::UnknownDataset(dataset_id.into()))?;
        let lookup = texture_lookup(&d.descriptor, &self.vocab)?;
        let mut out = Vec::new();
        for t in d.all_deciders() {
            out.push(shape_bias(t, |img| lookup(img))?);
        }
        Ok(out)
    }
}

/// Image id → texture category for a cue-conflict descriptor.
pub fn texture_lookup(descriptor: &DatasetDescriptor, vocab: &Arc<Vocabulary>) -> Result<TextureLookup, EvalError> {
    let err = |reason: String| EvalError::Texture { dataset: descriptor.dataset_id.clone(), reason };
    match &descriptor.texture {
        None => Err(err("no texture source configured".into())),
        Some(TextureSource::ImageName) => {
            let v = vocab.clone();
            Ok(Box::new(move |img| texture_from_image_name(img, &v)))
        }
        Some(TextureSource::Sidecar { path }) => {
            let mut rdr = csv::Reader::from_path(path).map_err(|e| err(format!("{}: {e}", path.display())))?;
            let mut map = BTreeMap::new();
            for rec in rdr.records() {
                let rec = rec.map_err(|e| err(e.to_string()))?;
                let (Some(img), Some(tex)) = (rec.get(0), rec.get(1)) else {
                    return Err(err("texture sidecar rows need image_id,texture".into()));
                };
                let label = vocab.get(tex.trim()).ok_or_else(|| err(format!("unknown texture category {tex:?}")))?;
                map.insert(img.trim().to_owned(), label);
            }
            Ok(Box::new(move |img| map.get(img).copied()))
        }
    }
}

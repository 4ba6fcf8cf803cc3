//! Condition exclusion and the two leaderboards: mean rank over the three
//! alignment metrics, and OOD accuracy.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::config::{BenchmarkConfig, ExclusionMode};
use crate::metrics::{condition_accuracy, MetricError};
use crate::stats::{fractional_ranks, mean};
use crate::trial_store::{ConditionId, DatasetDescriptor, DatasetKind, DecisionTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RankError {
    #[error("every condition of dataset {0} is excluded")]
    AllExcluded(String),
    #[error("dataset {0} has no human data to derive exclusions from")]
    NoHumanData(String),
    #[error("model {model} has no {metric} score")]
    MissingMetric { model: String, metric: &'static str },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

fn mean_human_accuracy(humans: &[&DecisionTable], condition: &str, cfg: &BenchmarkConfig) -> Option<f64> {
    mean(humans.iter().filter_map(|h| condition_accuracy(h, condition, cfg.metrics.na_policy).ok()).map(|a| a.accuracy))
}

/// Conditions of `descriptor` that enter the benchmark scores, in descriptor
/// order. Depends only on the humans and the config.
pub fn retained_conditions(
    descriptor: &DatasetDescriptor,
    humans: &[&DecisionTable],
    cfg: &BenchmarkConfig,
) -> Result<Vec<ConditionId>, RankError> {
    let id = descriptor.dataset_id.as_str();
    let mut dropped: BTreeSet<&str> = BTreeSet::new();
    let explicit = match cfg.exclusion_mode {
        ExclusionMode::Explicit => cfg.excluded_conditions.get(id),
        ExclusionMode::RuleDerived => None,
    };
    match (descriptor.kind, explicit) {
        (DatasetKind::Nonparametric, _) => {}
        (DatasetKind::Parametric, Some(list)) => dropped.extend(list.iter().map(ConditionId::as_str)),
        (DatasetKind::Parametric, None) => {
            if cfg.exclude_easiest {
                if let Some(c) = descriptor.easiest() {
                    dropped.insert(c.as_str());
                }
            }
            if humans.is_empty() {
                return Err(RankError::NoHumanData(id.into()));
            }
            for c in &descriptor.conditions {
                match mean_human_accuracy(humans, c.as_str(), cfg) {
                    Some(acc) if acc >= cfg.human_accuracy_floor => {}
                    _ => {
                        dropped.insert(c.as_str());
                    }
                }
            }
        }
    }
    if let Some(extra) = cfg.also_excluded.get(id) {
        dropped.extend(extra.iter().map(ConditionId::as_str));
    }
    let retained: Vec<ConditionId> =
        descriptor.conditions.iter().filter(|c| !dropped.contains(c.as_str())).cloned().collect();
    if retained.is_empty() {
        return Err(RankError::AllExcluded(id.into()));
    }
    Ok(retained)
}

/// The complement of [`retained_conditions`], in descriptor order.
pub fn excluded_conditions(descriptor: &DatasetDescriptor, retained: &[ConditionId]) -> Vec<ConditionId> {
    descriptor.conditions.iter().filter(|c| !retained.contains(c)).cloned().collect()
}

/// Mean over datasets of the mean accuracy over retained conditions.
/// `per_dataset` pairs each model table with that dataset's retained conditions.
pub fn ood_accuracy(per_dataset: &[(&DecisionTable, &[ConditionId])], cfg: &BenchmarkConfig) -> Result<f64, RankError> {
    let mut ds = Vec::with_capacity(per_dataset.len());
    for (table, conds) in per_dataset {
        if conds.is_empty() {
            return Err(RankError::AllExcluded(table.dataset_id().into()));
        }
        let accs = conds
            .iter()
            .map(|c| condition_accuracy(table, c.as_str(), cfg.metrics.na_policy).map(|a| a.accuracy))
            .collect::<Result<Vec<_>, _>>()?;
        ds.push(mean(accs).expect("non-empty"));
    }
    mean(ds).ok_or(RankError::Metric(MetricError::NoCells))
}

/// Input to [`rank_models`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelScores {
    pub model_id: String,
    pub accuracy_difference: Option<f64>,
    pub observed_consistency: Option<f64>,
    pub error_consistency: Option<f64>,
    pub ood_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderboardRow {
    pub model_id: String,
    pub accuracy_difference: f64,
    pub observed_consistency: f64,
    pub error_consistency: f64,
    pub rank_accuracy_difference: f64,
    pub rank_observed_consistency: f64,
    pub rank_error_consistency: f64,
    pub mean_rank: f64,
    pub ood_accuracy: Option<f64>,
}

fn require(v: Option<f64>, model: &str, metric: &'static str) -> Result<f64, RankError> {
    v.filter(|x| x.is_finite()).ok_or_else(|| RankError::MissingMetric { model: model.into(), metric })
}

/// Ranks models per metric (lowest accuracy difference, highest observed and
/// error consistency first; ties share the mean of their positions) and
/// orders them by mean rank, then accuracy difference, then id.
pub fn rank_models(models: &[ModelScores]) -> Result<Vec<LeaderboardRow>, RankError> {
    let mut a = Vec::with_capacity(models.len());
    let mut o = Vec::with_capacity(models.len());
    let mut e = Vec::with_capacity(models.len());
    for m in models {
        a.push(require(m.accuracy_difference, &m.model_id, "accuracy_difference")?);
        o.push(require(m.observed_consistency, &m.model_id, "observed_consistency")?);
        e.push(require(m.error_consistency, &m.model_id, "error_consistency")?);
    }
    let (ra, ro, re) = (fractional_ranks(&a, true), fractional_ranks(&o, false), fractional_ranks(&e, false));
    let mut rows: Vec<LeaderboardRow> = models
        .iter()
        .enumerate()
        .map(|(i, m)| LeaderboardRow {
            model_id: m.model_id.clone(),
            accuracy_difference: a[i],
            observed_consistency: o[i],
            error_consistency: e[i],
            rank_accuracy_difference: ra[i],
            rank_observed_consistency: ro[i],
            rank_error_consistency: re[i],
            mean_rank: (ra[i] + ro[i] + re[i]) / 3.0,
            ood_accuracy: m.ood_accuracy,
        })
        .collect();
    rows.sort_by(|x, y| {
        x.mean_rank
            .total_cmp(&y.mean_rank)
            .then(x.accuracy_difference.total_cmp(&y.accuracy_difference))
            .then_with(|| x.model_id.cmp(&y.model_id))
    });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OodRow {
    pub model_id: String,
    pub ood_accuracy: f64,
    pub rank: f64,
}

/// Highest OOD accuracy first.
pub fn rank_ood(models: &[ModelScores]) -> Result<Vec<OodRow>, RankError> {
    let acc =
        models.iter().map(|m| require(m.ood_accuracy, &m.model_id, "ood_accuracy")).collect::<Result<Vec<_>, _>>()?;
    let ranks = fractional_ranks(&acc, false);
    let mut rows: Vec<OodRow> = models
        .iter()
        .enumerate()
        .map(|(i, m)| OodRow { model_id: m.model_id.clone(), ood_accuracy: acc[i], rank: ranks[i] })
        .collect();
    rows.sort_by(|x, y| x.rank.total_cmp(&y.rank).then_with(|| x.model_id.cmp(&y.model_id)));
    Ok(rows)
}

pub fn leaderboard_csv(rows: &[LeaderboardRow]) -> String {
    let mut s = String::from(
        "model,accuracy_difference,observed_consistency,error_consistency,rank_accuracy_difference,rank_observed_consistency,rank_error_consistency,mean_rank,ood_accuracy\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            crate::report::csv_field(&r.model_id),
            r.accuracy_difference,
            r.observed_consistency,
            r.error_consistency,
            r.rank_accuracy_difference,
            r.rank_observed_consistency,
            r.rank_error_consistency,
            r.mean_rank,
            r.ood_accuracy.map_or_else(|| "NA".to_owned(), |v| v.to_string())
        );
    }
    s
}

pub fn ood_csv(rows: &[OodRow]) -> String {
    let mut s = String::from("model,ood_accuracy,rank\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", crate::report::csv_field(&r.model_id), r.ood_accuracy, r.rank);
    }
    s
}

/// Aligned text table in the layout `model | accuracy diff. | obs. consistency | error consistency | mean rank`.
pub fn leaderboard_text(rows: &[LeaderboardRow]) -> String {
    let header = ["model", "accuracy diff. ↓", "obs. consistency ↑", "error consistency ↑", "mean rank ↓"];
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.model_id.clone(),
                format!("{:.3}", r.accuracy_difference),
                format!("{:.3}", r.observed_consistency),
                format!("{:.3}", r.error_consistency),
                format!("{:.3}", r.mean_rank),
            ]
        })
        .collect();
    aligned(&header, &body)
}

/// Aligned text table in the layout `model | OOD accuracy | rank`.
pub fn ood_text(rows: &[OodRow]) -> String {
    let header = ["model", "OOD accuracy ↑", "rank ↓"];
    let body: Vec<[String; 3]> =
        rows.iter().map(|r| [r.model_id.clone(), format!("{:.2}", r.ood_accuracy), format!("{:.2}", r.rank)]).collect();
    aligned(&header, &body)
}

fn aligned<const N: usize>(header: &[&str; N], body: &[[String; N]]) -> String {
    let mut width = [0usize; N];
    for (i, h) in header.iter().enumerate() {
        width[i] = h.chars().count();
    }
    for row in body {
        for (i, c) in row.iter().enumerate() {
            width[i] = width[i].max(c.chars().count());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, cells: &[&str]| {
        for (i, c) in cells.iter().enumerate() {
            let pad = width[i] - c.chars().count();
            if i == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str(" | ");
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.push('\n');
    };
    line(&mut s, header);
    let total: usize = width.iter().sum::<usize>() + 3 * (N - 1);
    s.push_str(&"-".repeat(total));
    s.push('\n');
    for row in body {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&mut s, &cells);
    }
    s
}

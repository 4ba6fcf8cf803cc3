//! Accuracy, observed consistency and error consistency (Cohen's kappa on
//! correct/incorrect outcomes), plus the nested averaging that turns cells
//! into benchmark scores and the cue-conflict shape bias.
//!
//! Cell values are computed from integer counts and divided once, so a
//! fixture such as 6 agreements out of 10 with both accuracies at 8/10
//! yields kappa = -8/32 = -0.25 exactly.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::{AccuracyDifferenceForm, MetricOptions, NaPolicy};
use crate::stats::mean;
use crate::trial_store::{join_on_images, CategoryLabel, ConditionId, DecisionTable, JoinedTrial};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("{decider} has no trials for condition {condition} of {dataset}")]
    MissingCondition { dataset: String, decider: String, condition: String },
    #[error("{decider} has no scorable trials for condition {condition} of {dataset}")]
    NoSamples { dataset: String, decider: String, condition: String },
    #[error("{a} and {b} share no images under condition {condition} of {dataset}")]
    EmptyIntersection { dataset: String, a: String, b: String, condition: String },
    #[error("no retained conditions for dataset {0}")]
    NoRetainedConditions(String),
    #[error("missing cell for dataset {dataset}, human {human}, condition {condition}")]
    MissingCell { dataset: String, human: String, condition: String },
    #[error("nothing to aggregate")]
    NoCells,
    #[error("dataset {0} has fewer than two human observers")]
    SingleObserver(String),
    #[error("no cue-conflict trial was answered with either its shape or its texture category")]
    NoQualifyingTrials,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionAccuracy {
    pub dataset_id: String,
    pub condition: ConditionId,
    pub decider_id: String,
    pub correct: u64,
    pub n: u64,
    pub accuracy: f64,
}

pub fn condition_accuracy(
    table: &DecisionTable,
    condition: &str,
    na: NaPolicy,
) -> Result<ConditionAccuracy, MetricError> {
    if !table.has_condition(condition) {
        return Err(MetricError::MissingCondition {
            dataset: table.dataset_id().into(),
            decider: table.decider_id().into(),
            condition: condition.into(),
        });
    }
    let (mut correct, mut n) = (0u64, 0u64);
    for r in table.condition_records(condition) {
        if r.response.is_none() && na == NaPolicy::Exclude {
            continue;
        }
        n += 1;
        correct += r.is_correct() as u64;
    }
    if n == 0 {
        return Err(MetricError::NoSamples {
            dataset: table.dataset_id().into(),
            decider: table.decider_id().into(),
            condition: condition.into(),
        });
    }
    Ok(ConditionAccuracy {
        dataset_id: table.dataset_id().into(),
        condition: ConditionId::new(condition),
        decider_id: table.decider_id().into(),
        correct,
        n,
        accuracy: correct as f64 / n as f64,
    })
}

/// Per-cell accuracy gap between two deciders, from exact counts.
pub fn accuracy_gap(h: &ConditionAccuracy, m: &ConditionAccuracy, form: AccuracyDifferenceForm) -> f64 {
    // acc_h - acc_m = (k_h n_m - k_m n_h) / (n_h n_m)
    let num = h.correct as i128 * m.n as i128 - m.correct as i128 * h.n as i128;
    let den = h.n as i128 * m.n as i128;
    match form {
        AccuracyDifferenceForm::Squared => (num * num) as f64 / (den * den) as f64,
        AccuracyDifferenceForm::Absolute => num.abs() as f64 / den as f64,
    }
}

/// Agreement probability of two independent deciders with accuracies `p_a`, `p_b`.
pub fn expected_consistency(p_a: f64, p_b: f64) -> f64 {
    p_a * p_b + (1.0 - p_a) * (1.0 - p_b)
}

/// 2x2 correctness contingency counts over a joint image set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConsistencyCounts {
    pub both_correct: u64,
    pub only_a: u64,
    pub only_b: u64,
    pub both_wrong: u64,
}

impl ConsistencyCounts {
    pub fn from_outcomes<I: IntoIterator<Item = (bool, bool)>>(outcomes: I) -> Self {
        let mut c = ConsistencyCounts::default();
        for (a, b) in outcomes {
            match (a, b) {
                (true, true) => c.both_correct += 1,
                (true, false) => c.only_a += 1,
                (false, true) => c.only_b += 1,
                (false, false) => c.both_wrong += 1,
            }
        }
        c
    }

    pub fn from_join(rows: &[JoinedTrial<'_>], na: NaPolicy) -> Self {
        Self::from_outcomes(
            rows.iter()
                .filter(|r| na == NaPolicy::Incorrect || (r.response_a.is_some() && r.response_b.is_some()))
                .map(|r| (r.correct_a(), r.correct_b())),
        )
    }

    pub fn n(&self) -> u64 {
        self.both_correct + self.only_a + self.only_b + self.both_wrong
    }

    pub fn correct_a(&self) -> u64 {
        self.both_correct + self.only_a
    }

    pub fn correct_b(&self) -> u64 {
        self.both_correct + self.only_b
    }

    // n^2 * expected consistency
    fn expected_scaled(&self) -> u128 {
        let (n, a, b) = (self.n() as u128, self.correct_a() as u128, self.correct_b() as u128);
        a * b + (n - a) * (n - b)
    }

    pub fn observed(&self) -> f64 {
        (self.both_correct + self.both_wrong) as f64 / self.n() as f64
    }

    pub fn expected(&self) -> f64 {
        let n = self.n() as u128;
        self.expected_scaled() as f64 / (n * n) as f64
    }

    /// `(kappa, degenerate)`. Degenerate cells (expected consistency 1, i.e.
    /// both deciders always right or always wrong) report kappa 0.
    pub fn kappa(&self) -> (f64, bool) {
        let n = self.n() as u128;
        let e = self.expected_scaled();
        let k = (self.both_correct + self.both_wrong) as u128;
        let den = n * n - e;
        if den == 0 {
            return (0.0, true);
        }
        let num = (k * n) as i128 - e as i128;
        (num as f64 / den as f64, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseConsistency {
    pub dataset_id: String,
    pub condition: ConditionId,
    pub decider_a: String,
    pub decider_b: String,
    pub n_joint: u64,
    pub counts: ConsistencyCounts,
    pub c_obs: f64,
    pub c_exp: f64,
    pub kappa: f64,
    pub degenerate: bool,
}

impl PairwiseConsistency {
    pub fn from_counts(
        dataset_id: &str,
        condition: &str,
        decider_a: &str,
        decider_b: &str,
        counts: ConsistencyCounts,
    ) -> Self {
        let (kappa, degenerate) = counts.kappa();
        PairwiseConsistency {
            dataset_id: dataset_id.into(),
            condition: ConditionId::new(condition),
            decider_a: decider_a.into(),
            decider_b: decider_b.into(),
            n_joint: counts.n(),
            counts,
            c_obs: counts.observed(),
            c_exp: counts.expected(),
            kappa,
            degenerate,
        }
    }
}

/// Observed consistency, expected consistency and kappa of `a` and `b` over
/// the images both saw under `condition`.
pub fn consistency_cell(
    a: &DecisionTable,
    b: &DecisionTable,
    condition: &str,
    na: NaPolicy,
) -> Result<PairwiseConsistency, MetricError> {
    let rows = join_on_images(a, b, condition);
    let counts = ConsistencyCounts::from_join(&rows, na);
    if counts.n() == 0 {
        return Err(MetricError::EmptyIntersection {
            dataset: a.dataset_id().into(),
            a: a.decider_id().into(),
            b: b.decider_id().into(),
            condition: condition.into(),
        });
    }
    Ok(PairwiseConsistency::from_counts(a.dataset_id(), condition, a.decider_id(), b.decider_id(), counts))
}

/// Which of the three alignment metrics to read from a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    AccuracyDifference,
    ObservedConsistency,
    ErrorConsistency,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::AccuracyDifference, Metric::ObservedConsistency, Metric::ErrorConsistency];

    pub fn lower_is_better(self) -> bool {
        self == Metric::AccuracyDifference
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub dataset: String,
    pub human: String,
    pub condition: ConditionId,
}

impl CellKey {
    pub fn new(dataset: &str, human: &str, condition: &str) -> Self {
        CellKey { dataset: dataset.into(), human: human.into(), condition: ConditionId::new(condition) }
    }
}

/// The (dataset, humans, retained conditions) grid a score averages over.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregationPlan {
    pub datasets: BTreeMap<String, PlanEntry>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanEntry {
    pub humans: Vec<String>,
    pub conditions: Vec<ConditionId>,
}

/// A metric cell: `None` marks a cell that exists but is left out of the
/// mean (a degenerate kappa under `exclude_degenerate`).
pub type CellValues = BTreeMap<CellKey, Option<f64>>;

/// Nested unweighted means: conditions within each human, humans within each
/// dataset, then datasets. Every planned cell must be present.
pub fn aggregate_metric(cells: &CellValues, plan: &AggregationPlan) -> Result<f64, MetricError> {
    let mut per_dataset = Vec::new();
    for (dataset, entry) in &plan.datasets {
        if entry.conditions.is_empty() {
            return Err(MetricError::NoRetainedConditions(dataset.clone()));
        }
        let mut per_human = Vec::new();
        for human in &entry.humans {
            let mut per_condition = Vec::new();
            for c in &entry.conditions {
                let key = CellKey::new(dataset, human, c.as_str());
                match cells.get(&key) {
                    Some(Some(v)) => per_condition.push(*v),
                    Some(None) => {}
                    None => {
                        return Err(MetricError::MissingCell {
                            dataset: dataset.clone(),
                            human: human.clone(),
                            condition: c.to_string(),
                        })
                    }
                }
            }
            if let Some(m) = mean(per_condition) {
                per_human.push(m);
            }
        }
        if let Some(m) = mean(per_human) {
            per_dataset.push(m);
        }
    }
    mean(per_dataset).ok_or(MetricError::NoCells)
}

/// All three metric cells of one (candidate, human) pair on one condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSet {
    pub human: ConditionAccuracy,
    pub candidate: ConditionAccuracy,
    pub accuracy_gap: f64,
    pub consistency: PairwiseConsistency,
}

/// Computes every cell of `candidate` against each table in `pool` over
/// `conditions`.
pub fn cells_against_pool(
    candidate: &DecisionTable,
    pool: &[&DecisionTable],
    conditions: &[ConditionId],
    opts: MetricOptions,
) -> Result<Vec<CellSet>, MetricError> {
    let mut out = Vec::with_capacity(pool.len() * conditions.len());
    let mut cand_acc = BTreeMap::new();
    for c in conditions {
        cand_acc.insert(c.clone(), condition_accuracy(candidate, c.as_str(), opts.na_policy)?);
    }
    for h in pool {
        for c in conditions {
            let human = condition_accuracy(h, c.as_str(), opts.na_policy)?;
            let cand = cand_acc[c].clone();
            let consistency = consistency_cell(h, candidate, c.as_str(), opts.na_policy)?;
            out.push(CellSet {
                accuracy_gap: accuracy_gap(&human, &cand, opts.accuracy_difference_form),
                human,
                candidate: cand,
                consistency,
            });
        }
    }
    Ok(out)
}

/// Projects cell sets onto one metric, keyed by (dataset, human, condition).
pub fn metric_cells<'a, I: IntoIterator<Item = &'a CellSet>>(
    sets: I,
    metric: Metric,
    opts: MetricOptions,
) -> CellValues {
    sets.into_iter()
        .map(|s| {
            let key = CellKey::new(&s.human.dataset_id, &s.human.decider_id, s.human.condition.as_str());
            let v = match metric {
                Metric::AccuracyDifference => Some(s.accuracy_gap),
                Metric::ObservedConsistency => Some(s.consistency.c_obs),
                Metric::ErrorConsistency => {
                    if s.consistency.degenerate && opts.exclude_degenerate {
                        None
                    } else {
                        Some(s.consistency.kappa)
                    }
                }
            };
            (key, v)
        })
        .collect()
}

/// Accuracy difference of `model` against the human pool of each dataset.
/// `data` pairs each dataset's model table with its human tables and
/// retained conditions.
pub fn accuracy_difference(data: &[DatasetSlice<'_>], opts: MetricOptions) -> Result<f64, MetricError> {
    score(data, Metric::AccuracyDifference, opts)
}

pub fn observed_consistency(data: &[DatasetSlice<'_>], opts: MetricOptions) -> Result<f64, MetricError> {
    score(data, Metric::ObservedConsistency, opts)
}

pub fn error_consistency(data: &[DatasetSlice<'_>], opts: MetricOptions) -> Result<f64, MetricError> {
    score(data, Metric::ErrorConsistency, opts)
}

/// One dataset's view for scoring a single candidate.
#[derive(Debug, Clone, Copy)]
pub struct DatasetSlice<'a> {
    pub candidate: &'a DecisionTable,
    pub humans: &'a [&'a DecisionTable],
    pub conditions: &'a [ConditionId],
}

fn plan_for(data: &[DatasetSlice<'_>]) -> AggregationPlan {
    let mut plan = AggregationPlan::default();
    for d in data {
        plan.datasets.insert(
            d.candidate.dataset_id().to_owned(),
            PlanEntry {
                humans: d.humans.iter().map(|h| h.decider_id().to_owned()).collect(),
                conditions: d.conditions.to_vec(),
            },
        );
    }
    plan
}

/// All three aggregate scores at once.
pub fn scores(data: &[DatasetSlice<'_>], opts: MetricOptions) -> Result<(Vec<CellSet>, [f64; 3]), MetricError> {
    let mut sets = Vec::new();
    for d in data {
        if d.conditions.is_empty() {
            return Err(MetricError::NoRetainedConditions(d.candidate.dataset_id().into()));
        }
        sets.extend(cells_against_pool(d.candidate, d.humans, d.conditions, opts)?);
    }
    let plan = plan_for(data);
    let mut out = [0.0; 3];
    for (slot, metric) in out.iter_mut().zip(Metric::ALL) {
        *slot = aggregate_metric(&metric_cells(&sets, metric, opts), &plan)?;
    }
    Ok((sets, out))
}

fn score(data: &[DatasetSlice<'_>], metric: Metric, opts: MetricOptions) -> Result<f64, MetricError> {
    let (_, values) = scores(data, opts)?;
    Ok(values[Metric::ALL.iter().position(|&m| m == metric).expect("known metric")])
}

/// One dataset's human pool, for leave-one-out baselines.
#[derive(Debug, Clone, Copy)]
pub struct HumanPool<'a> {
    pub humans: &'a [&'a DecisionTable],
    pub conditions: &'a [ConditionId],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HumanBaseline {
    pub decider_id: String,
    pub accuracy_difference: f64,
    pub observed_consistency: f64,
    pub error_consistency: f64,
    pub datasets: Vec<String>,
}

impl HumanBaseline {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::AccuracyDifference => self.accuracy_difference,
            Metric::ObservedConsistency => self.observed_consistency,
            Metric::ErrorConsistency => self.error_consistency,
        }
    }
}

/// Scores every human against the other humans of each dataset they took
/// part in. Output is sorted by decider id.
pub fn human_baseline(pools: &[HumanPool<'_>], opts: MetricOptions) -> Result<Vec<HumanBaseline>, MetricError> {
    let mut membership: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in pools.iter().enumerate() {
        if p.humans.len() < 2 {
            let ds = p.humans.first().map(|h| h.dataset_id().to_owned()).unwrap_or_default();
            return Err(MetricError::SingleObserver(ds));
        }
        for h in p.humans {
            membership.entry(h.decider_id()).or_default().push(i);
        }
    }
    let mut out = Vec::new();
    for (id, idx) in membership {
        let others: Vec<Vec<&DecisionTable>> =
            idx.iter().map(|&i| pools[i].humans.iter().copied().filter(|h| h.decider_id() != id).collect()).collect();
        let slices: Vec<DatasetSlice<'_>> = idx
            .iter()
            .zip(&others)
            .map(|(&i, rest)| DatasetSlice {
                candidate: pools[i].humans.iter().copied().find(|h| h.decider_id() == id).expect("member"),
                humans: rest,
                conditions: pools[i].conditions,
            })
            .collect();
        let (_, [a, o, e]) = scores(&slices, opts)?;
        out.push(HumanBaseline {
            decider_id: id.to_owned(),
            accuracy_difference: a,
            observed_consistency: o,
            error_consistency: e,
            datasets: slices.iter().map(|s| s.candidate.dataset_id().to_owned()).collect(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryBias {
    pub category: String,
    pub shape_decisions: u64,
    pub texture_decisions: u64,
    pub shape_bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeBias {
    pub decider_id: String,
    pub shape_decisions: u64,
    pub texture_decisions: u64,
    pub shape_bias: f64,
    pub texture_bias: f64,
    /// Keyed by the shape category of the stimulus.
    pub per_category: Vec<CategoryBias>,
}

/// Fraction of shape-consistent answers among trials answered with either the
/// shape (true) or the texture category. Trials whose two cues coincide, or
/// whose texture is unknown, are skipped.
pub fn shape_bias<F>(table: &DecisionTable, texture_of: F) -> Result<ShapeBias, MetricError>
where
    F: Fn(&str) -> Option<CategoryLabel>,
{
    let vocab = table.vocabulary();
    let mut per: Vec<(u64, u64)> = vec![(0, 0); vocab.len()];
    for r in table.records() {
        let Some(texture) = texture_of(&r.image_id) else { continue };
        if texture == r.true_category {
            continue;
        }
        match r.response {
            Some(resp) if resp == r.true_category => per[r.true_category.index()].0 += 1,
            Some(resp) if resp == texture => per[r.true_category.index()].1 += 1,
            _ => {}
        }
    }
    let shape: u64 = per.iter().map(|p| p.0).sum();
    let texture: u64 = per.iter().map(|p| p.1).sum();
    if shape + texture == 0 {
        return Err(MetricError::NoQualifyingTrials);
    }
    let per_category = vocab
        .labels()
        .map(|l| {
            let (s, t) = per[l.index()];
            CategoryBias {
                category: vocab.name(l).to_owned(),
                shape_decisions: s,
                texture_decisions: t,
                shape_bias: (s + t > 0).then(|| s as f64 / (s + t) as f64),
            }
        })
        .collect();
    Ok(ShapeBias {
        decider_id: table.decider_id().to_owned(),
        shape_decisions: shape,
        texture_decisions: texture,
        shape_bias: shape as f64 / (shape + texture) as f64,
        texture_bias: texture as f64 / (shape + texture) as f64,
        per_category,
    })
}

/// Texture category from an image name ending in `<shape><n>-<texture><n>.<ext>`,
/// e.g. `airplane1-bicycle2.png`.
pub fn texture_from_image_name(name: &str, vocab: &crate::trial_store::Vocabulary) -> Option<CategoryLabel> {
    let stem = name.rsplit_once('.').map_or(name, |(s, _)| s);
    let last = stem.rsplit('_').next()?;
    let (_, texture) = last.split_once('-')?;
    vocab.get(texture.trim_end_matches(|c: char| c.is_ascii_digit()))
}

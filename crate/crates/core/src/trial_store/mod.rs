//! Per-trial decision records for human observers and models.
//!
//! A [`DecisionTable`] holds every trial of one decider on one dataset. Tables
//! are validated on construction and immutable afterwards; the canonical CSV
//! layout lives in [`wire`].

mod vocab;
pub mod wire;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::par::Exec;

pub use vocab::{CategoryLabel, Vocabulary, VocabularyError, DEFAULT_CATEGORIES};
pub use wire::{load_decisions, read_decisions, write_decisions, WIRE_HEADER};

/// Opaque condition token ("c50", "0.35", "colour", ...). Ordering of
/// conditions comes from the [`DatasetDescriptor`], never from parsing.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConditionId(String);

impl ConditionId {
    pub fn new(token: impl Into<String>) -> Self {
        ConditionId(token.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ConditionId {
    fn from(s: &str) -> Self {
        ConditionId(s.to_owned())
    }
}

impl std::borrow::Borrow<str> for ConditionId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// One decision event.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub decider_id: String,
    pub session: u32,
    pub trial_index: u32,
    /// Seconds; `None` for models and missing values.
    pub response_time: Option<f64>,
    /// `None` for a missed trial.
    pub response: Option<CategoryLabel>,
    pub true_category: CategoryLabel,
    pub condition: ConditionId,
    pub image_id: String,
}

impl TrialRecord {
    /// Missed trials count as incorrect.
    pub fn is_correct(&self) -> bool {
        self.response == Some(self.true_category)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Parametric,
    Nonparametric,
}

/// Where a cue-conflict dataset gets the texture category of each image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from", rename_all = "snake_case")]
pub enum TextureSource {
    /// Image names end in `<shape><n>-<texture><n>.<ext>`.
    ImageName,
    /// CSV with header `image_id,texture`.
    Sidecar { path: PathBuf },
}

/// Human observer ids used when a descriptor does not list them explicitly.
pub const DEFAULT_HUMAN_PREFIX: &str = "subject-";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    #[serde(rename = "id")]
    pub dataset_id: String,
    pub kind: DatasetKind,
    /// Easiest first.
    pub conditions: Vec<ConditionId>,
    #[serde(default, rename = "humans")]
    pub human_decider_ids: Vec<String>,
    #[serde(default)]
    pub texture: Option<TextureSource>,
}

impl DatasetDescriptor {
    pub fn new(
        dataset_id: impl Into<String>,
        kind: DatasetKind,
        conditions: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        DatasetDescriptor {
            dataset_id: dataset_id.into(),
            kind,
            conditions: conditions.into_iter().map(|c| ConditionId::new(c)).collect(),
            human_decider_ids: Vec::new(),
            texture: None,
        }
    }

    pub fn with_humans(mut self, ids: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.human_decider_ids = ids.into_iter().map(Into::into).collect();
        self
    }

    pub fn has_condition(&self, c: &str) -> bool {
        self.conditions.iter().any(|x| x.as_str() == c)
    }

    pub fn easiest(&self) -> Option<&ConditionId> {
        self.conditions.first()
    }

    /// Explicit id list if present, otherwise the `subject-` naming convention.
    pub fn is_human(&self, decider_id: &str) -> bool {
        if self.human_decider_ids.is_empty() {
            decider_id.starts_with(DEFAULT_HUMAN_PREFIX)
        } else {
            self.human_decider_ids.iter().any(|h| h == decider_id)
        }
    }

    pub fn check(&self) -> Result<(), StoreError> {
        if self.conditions.is_empty() {
            return Err(StoreError::InvalidDescriptor {
                dataset: self.dataset_id.clone(),
                reason: "no conditions".into(),
            });
        }
        let mut seen = HashSet::new();
        for c in &self.conditions {
            if !seen.insert(c.as_str()) {
                return Err(StoreError::InvalidDescriptor {
                    dataset: self.dataset_id.clone(),
                    reason: format!("condition {c:?} listed twice"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: empty file")]
    EmptyFile { path: PathBuf },
    #[error("{path}: row {row}: {reason}")]
    MalformedRow { path: PathBuf, row: u64, reason: String },
    #[error("{path}: row {row}: unknown category {value:?}")]
    UnknownCategory { path: PathBuf, row: u64, value: String },
    #[error("{path}: row {row}: condition {value:?} not defined for dataset {dataset}")]
    UnknownCondition { path: PathBuf, row: u64, value: String, dataset: String },
    #[error("{path}: row {row}: duplicate trial (decider {decider}, session {session}, trial {trial})")]
    DuplicateTrial { path: PathBuf, row: u64, decider: String, session: u32, trial: u32 },
    #[error("{path}: row {row}: image {image_id:?} seen twice by {decider} under condition {condition}")]
    DuplicateImage { path: PathBuf, row: u64, decider: String, condition: String, image_id: String },
    #[error("{path}: row {row}: decider {found:?} differs from {expected:?} earlier in the file")]
    MixedDeciders { path: PathBuf, row: u64, expected: String, found: String },
    #[error("dataset {dataset}: {reason}")]
    InvalidDescriptor { dataset: String, reason: String },
    #[error("cannot merge tables of {a} and {b}")]
    MergeMismatch { a: String, b: String },
    #[error("{0}: no decision files found")]
    NoDecisionFiles(PathBuf),
}

/// Validated decisions of one decider on one dataset.
#[derive(Debug, Clone)]
pub struct DecisionTable {
    dataset_id: String,
    decider_id: String,
    vocab: Arc<Vocabulary>,
    records: Vec<TrialRecord>,
    // condition -> image_id -> index into `records`
    index: BTreeMap<ConditionId, BTreeMap<String, usize>>,
}

impl PartialEq for DecisionTable {
    fn eq(&self, other: &Self) -> bool {
        self.dataset_id == other.dataset_id
            && self.decider_id == other.decider_id
            && self.vocab == other.vocab
            && self.records == other.records
    }
}

/// A row of [`join_on_images`].
#[derive(Debug, Clone, PartialEq)]
pub struct JoinedTrial<'a> {
    pub image_id: &'a str,
    pub response_a: Option<CategoryLabel>,
    pub response_b: Option<CategoryLabel>,
    pub true_category: CategoryLabel,
}

impl JoinedTrial<'_> {
    pub fn correct_a(&self) -> bool {
        self.response_a == Some(self.true_category)
    }

    pub fn correct_b(&self) -> bool {
        self.response_b == Some(self.true_category)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BalanceViolation {
    pub condition: ConditionId,
    pub category: String,
    pub count: usize,
    pub max_count: usize,
}

impl DecisionTable {
    /// Builds a table from records, checking every invariant. `path` is only
    /// used in error messages; `rows[i]` is the source line of `records[i]`.
    pub(crate) fn build(
        path: &Path,
        descriptor: &DatasetDescriptor,
        vocab: Arc<Vocabulary>,
        records: Vec<TrialRecord>,
        rows: &[u64],
    ) -> Result<Self, StoreError> {
        let Some(first) = records.first() else {
            return Err(StoreError::EmptyFile { path: path.to_owned() });
        };
        let decider_id = first.decider_id.clone();
        let mut trials = HashSet::new();
        let mut index: BTreeMap<ConditionId, BTreeMap<String, usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            let row = rows.get(i).copied().unwrap_or(i as u64 + 2);
            if r.decider_id != decider_id {
                return Err(StoreError::MixedDeciders {
                    path: path.to_owned(),
                    row,
                    expected: decider_id,
                    found: r.decider_id.clone(),
                });
            }
            if !descriptor.has_condition(r.condition.as_str()) {
                return Err(StoreError::UnknownCondition {
                    path: path.to_owned(),
                    row,
                    value: r.condition.to_string(),
                    dataset: descriptor.dataset_id.clone(),
                });
            }
            if !trials.insert((r.session, r.trial_index)) {
                return Err(StoreError::DuplicateTrial {
                    path: path.to_owned(),
                    row,
                    decider: decider_id,
                    session: r.session,
                    trial: r.trial_index,
                });
            }
            let images = index.entry(r.condition.clone()).or_default();
            if images.insert(r.image_id.clone(), i).is_some() {
                return Err(StoreError::DuplicateImage {
                    path: path.to_owned(),
                    row,
                    decider: decider_id,
                    condition: r.condition.to_string(),
                    image_id: r.image_id.clone(),
                });
            }
        }
        Ok(DecisionTable { dataset_id: descriptor.dataset_id.clone(), decider_id, vocab, records, index })
    }

    /// Builds a table from in-memory records.
    pub fn from_records(
        descriptor: &DatasetDescriptor,
        vocab: Arc<Vocabulary>,
        records: Vec<TrialRecord>,
    ) -> Result<Self, StoreError> {
        let rows: Vec<u64> = (0..records.len() as u64).map(|i| i + 2).collect();
        Self::build(Path::new("<memory>"), descriptor, vocab, records, &rows)
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn decider_id(&self) -> &str {
        &self.decider_id
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn conditions(&self) -> impl Iterator<Item = &ConditionId> {
        self.index.keys()
    }

    pub fn has_condition(&self, condition: &str) -> bool {
        self.index.contains_key(condition)
    }

    /// Records of one condition in ascending image id order.
    pub fn condition_records<'a>(&'a self, condition: &str) -> impl Iterator<Item = &'a TrialRecord> + 'a {
        self.index.get(condition).into_iter().flat_map(move |m| m.values().map(move |&i| &self.records[i]))
    }

    pub fn image_ids(&self, condition: &str) -> BTreeSet<&str> {
        self.index.get(condition).map(|m| m.keys().map(String::as_str).collect()).unwrap_or_default()
    }

    pub fn lookup(&self, condition: &str, image_id: &str) -> Option<&TrialRecord> {
        self.index.get(condition)?.get(image_id).map(|&i| &self.records[i])
    }

    /// Combines two tables of the same decider (e.g. separate session files).
    pub fn merge(self, other: DecisionTable, descriptor: &DatasetDescriptor) -> Result<Self, StoreError> {
        if self.decider_id != other.decider_id || self.dataset_id != other.dataset_id || self.vocab != other.vocab {
            return Err(StoreError::MergeMismatch {
                a: format!("{}/{}", self.dataset_id, self.decider_id),
                b: format!("{}/{}", other.dataset_id, other.decider_id),
            });
        }
        let mut records = self.records;
        records.extend(other.records);
        Self::from_records(descriptor, self.vocab, records)
    }
}

/// Reports categories whose image count under a condition falls more than
/// `slack` below the largest count for that condition. Every vocabulary
/// category participates, so an absent category counts as zero.
pub fn validate_balance(table: &DecisionTable, slack: usize) -> Vec<BalanceViolation> {
    let mut out = Vec::new();
    for condition in table.index.keys() {
        let mut counts = vec![0usize; table.vocab.len()];
        for r in table.condition_records(condition.as_str()) {
            counts[r.true_category.index()] += 1;
        }
        let max = counts.iter().copied().max().unwrap_or(0);
        for (i, &c) in counts.iter().enumerate() {
            if c + slack < max {
                out.push(BalanceViolation {
                    condition: condition.clone(),
                    category: table.vocab.name(CategoryLabel::from_index(i)).to_owned(),
                    count: c,
                    max_count: max,
                });
            }
        }
    }
    out
}

/// Inner join of two tables on image id within one condition, in ascending
/// image id order. Missed trials are kept as `None` responses.
pub fn join_on_images<'a>(a: &'a DecisionTable, b: &'a DecisionTable, condition: &str) -> Vec<JoinedTrial<'a>> {
    let (Some(ia), Some(ib)) = (a.index.get(condition), b.index.get(condition)) else {
        log::warn!("empty intersection: {} and {} share no images under {condition}", a.decider_id, b.decider_id);
        return Vec::new();
    };
    let mut rows = Vec::new();
    // both maps are sorted by image id: merge walk
    let mut ita = ia.iter().peekable();
    let mut itb = ib.iter().peekable();
    while let (Some((ka, &ra)), Some((kb, &rb))) = (ita.peek(), itb.peek()) {
        match ka.cmp(kb) {
            std::cmp::Ordering::Less => {
                ita.next();
            }
            std::cmp::Ordering::Greater => {
                itb.next();
            }
            std::cmp::Ordering::Equal => {
                let (rec_a, rec_b) = (&a.records[ra], &b.records[rb]);
                if rec_a.true_category != rec_b.true_category {
                    log::warn!(
                        "image {ka} has category {} for {} but {} for {}",
                        a.vocab.name(rec_a.true_category),
                        a.decider_id,
                        b.vocab.name(rec_b.true_category),
                        b.decider_id
                    );
                }
                rows.push(JoinedTrial {
                    image_id: ka.as_str(),
                    response_a: rec_a.response,
                    response_b: rec_b.response,
                    true_category: rec_a.true_category,
                });
                ita.next();
                itb.next();
            }
        }
    }
    if rows.is_empty() {
        log::warn!("empty intersection: {} and {} share no images under {condition}", a.decider_id, b.decider_id);
    }
    rows
}

/// Loads every `*.csv` under `dir` (non-recursive) and merges tables per
/// decider. Output is sorted by decider id.
pub fn load_dataset_dir(
    dir: &Path,
    descriptor: &DatasetDescriptor,
    vocab: &Arc<Vocabulary>,
    exec: Exec,
) -> Result<Vec<DecisionTable>, StoreError> {
    let files = csv_files(dir)?;
    if files.is_empty() {
        return Err(StoreError::NoDecisionFiles(dir.to_owned()));
    }
    let loaded = exec.map(&files, |f| load_decisions(f, descriptor, vocab));
    let mut by_decider: BTreeMap<String, DecisionTable> = BTreeMap::new();
    for table in loaded {
        let table = table?;
        match by_decider.remove(table.decider_id()) {
            Some(prev) => {
                let merged = prev.merge(table, descriptor)?;
                by_decider.insert(merged.decider_id.clone(), merged);
            }
            None => {
                by_decider.insert(table.decider_id.clone(), table);
            }
        }
    }
    Ok(by_decider.into_values().collect())
}

/// Sorted list of `*.csv` files directly inside `dir`.
pub fn csv_files(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let rd = std::fs::read_dir(dir).map_err(|source| StoreError::Io { path: dir.to_owned(), source })?;
    let mut files = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|source| StoreError::Io { path: dir.to_owned(), source })?;
        let p = entry.path();
        if p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

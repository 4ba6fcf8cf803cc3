//! Mapping 1000-way ImageNet posteriors onto the 16 entry-level categories.
//!
//! A category's score is the mean posterior over its leaf set; the decision
//! is the highest-scoring category. Scores are compared as-is: mass on
//! unmapped leaves is not renormalised away.

use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use crate::par::Exec;
use crate::stats::compensated_sum;
use crate::trial_store::{CategoryLabel, Vocabulary};

pub const NUM_LEAVES: usize = 1000;

/// Shipped leaf sets for the default vocabulary.
pub const DEFAULT_MAPPING_ASSET: &str = include_str!("../assets/imagenet16_mapping.txt");

#[derive(Debug, thiserror::Error)]
pub enum MapperError {
    #[error("probability vector has {0} entries, expected {NUM_LEAVES}")]
    WrongLength(usize),
    #[error("probability entry {index} is {value}, expected a finite non-negative number")]
    InvalidProbability { index: usize, value: f64 },
    #[error("probability vector sums to zero")]
    ZeroMass,
    #[error("every category scores zero")]
    AllZero,
    #[error("mapping line {line}: {reason}")]
    MappingSyntax { line: usize, reason: String },
    #[error("mapping has no leaf set for category {0:?}")]
    MissingCategory(String),
    #[error("leaf {leaf} assigned to both {first:?} and {second:?}")]
    OverlappingLeaf { leaf: usize, first: String, second: String },
    #[error("posterior file row {row}: {reason}")]
    Sidecar { row: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Non-negative scores over the 1000 ImageNet leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self, MapperError> {
        if values.len() != NUM_LEAVES {
            return Err(MapperError::WrongLength(values.len()));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(MapperError::InvalidProbability { index, value });
        }
        Ok(ProbabilityVector(values))
    }

    pub fn uniform() -> Self {
        ProbabilityVector(vec![1.0 / NUM_LEAVES as f64; NUM_LEAVES])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        compensated_sum(self.0.iter().copied())
    }

    /// Rescaled copy summing to one.
    pub fn normalized(&self) -> Result<Self, MapperError> {
        let s = self.sum();
        if s <= 0.0 {
            return Err(MapperError::ZeroMass);
        }
        Ok(ProbabilityVector(self.0.iter().map(|v| v / s).collect()))
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.sum() - 1.0).abs() <= tol
    }
}

/// Disjoint leaf sets, one per vocabulary category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMapping {
    vocab: Arc<Vocabulary>,
    // indexed by CategoryLabel
    leaves: Vec<Vec<usize>>,
}

impl CategoryMapping {
    /// Parses the line format `category: idx,idx,...`; `#` starts a comment.
    pub fn parse(text: &str, vocab: Arc<Vocabulary>) -> Result<Self, MapperError> {
        let mut leaves: Vec<Option<Vec<usize>>> = vec![None; vocab.len()];
        let mut owner: Vec<Option<CategoryLabel>> = vec![None; NUM_LEAVES];
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |reason: String| MapperError::MappingSyntax { line: line_no, reason };
            let (name, list) = line.split_once(':').ok_or_else(|| syntax("missing ':'".into()))?;
            let name = name.trim();
            let label = vocab.get(name).ok_or_else(|| syntax(format!("unknown category {name:?}")))?;
            if leaves[label.index()].is_some() {
                return Err(syntax(format!("category {name:?} defined twice")));
            }
            let mut set = Vec::new();
            for tok in list.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                let leaf: usize = tok.parse().map_err(|_| syntax(format!("bad index {tok:?}")))?;
                if leaf >= NUM_LEAVES {
                    return Err(syntax(format!("index {leaf} outside [0, {NUM_LEAVES})")));
                }
                if let Some(prev) = owner[leaf] {
                    return Err(MapperError::OverlappingLeaf {
                        leaf,
                        first: vocab.name(prev).to_owned(),
                        second: name.to_owned(),
                    });
                }
                owner[leaf] = Some(label);
                set.push(leaf);
            }
            if set.is_empty() {
                return Err(syntax(format!("category {name:?} has an empty leaf set")));
            }
            leaves[label.index()] = Some(set);
        }
        let leaves = leaves
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.ok_or_else(|| MapperError::MissingCategory(vocab.name(CategoryLabel::from_index(i)).to_owned()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CategoryMapping { vocab, leaves })
    }

    pub fn load(path: &Path, vocab: Arc<Vocabulary>) -> Result<Self, MapperError> {
        Self::parse(&std::fs::read_to_string(path)?, vocab)
    }

    /// The shipped asset; `vocab` must use the default category names.
    pub fn shipped(vocab: Arc<Vocabulary>) -> Result<Self, MapperError> {
        Self::parse(DEFAULT_MAPPING_ASSET, vocab)
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn leaves(&self, label: CategoryLabel) -> &[usize] {
        &self.leaves[label.index()]
    }

    /// Serialises back into the asset line format.
    pub fn to_asset_string(&self) -> String {
        let mut s = String::new();
        for label in self.vocab.labels() {
            let list: Vec<String> = self.leaves(label).iter().map(|l| l.to_string()).collect();
            s.push_str(&format!("{}: {}\n", self.vocab.name(label), list.join(",")));
        }
        s
    }
}

/// How leaf probabilities inside one category collapse to a score.
pub trait Aggregation: Sync {
    fn aggregate(&self, leaf_values: &mut [f64]) -> f64;
}

/// Mean over the leaf set.
#[derive(Debug, Clone, Copy, Default)]
pub struct Average;

impl Aggregation for Average {
    fn aggregate(&self, leaf_values: &mut [f64]) -> f64 {
        // sorted so that the result does not depend on leaf order
        leaf_values.sort_by(f64::total_cmp);
        compensated_sum(leaf_values.iter().copied()) / leaf_values.len() as f64
    }
}

/// Per-category scores, indexed by [`CategoryLabel`].
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryScores(pub Vec<f64>);

impl CategoryScores {
    pub fn get(&self, label: CategoryLabel) -> f64 {
        self.0[label.index()]
    }
}

pub fn aggregate_with<A: Aggregation>(p: &ProbabilityVector, m: &CategoryMapping, agg: &A) -> CategoryScores {
    let mut buf = Vec::new();
    let scores = m
        .leaves
        .iter()
        .map(|set| {
            buf.clear();
            buf.extend(set.iter().map(|&i| p.0[i]));
            agg.aggregate(&mut buf)
        })
        .collect();
    CategoryScores(scores)
}

pub fn aggregate_average(p: &ProbabilityVector, m: &CategoryMapping) -> CategoryScores {
    aggregate_with(p, m, &Average)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub category: CategoryLabel,
    pub score: f64,
    /// More than one category reached the top score.
    pub tie: bool,
}

/// Argmax over category scores. Ties go to the lexicographically smallest
/// category name.
pub fn decide_from_scores(scores: &CategoryScores, vocab: &Vocabulary) -> Result<Decision, MapperError> {
    let best = scores.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best <= 0.0 {
        return Err(MapperError::AllZero);
    }
    let tied: Vec<CategoryLabel> = vocab.labels().filter(|&l| scores.get(l) == best).collect();
    let category = *tied.iter().min_by_key(|&&l| vocab.name(l)).expect("at least one maximum");
    Ok(Decision { category, score: best, tie: tied.len() > 1 })
}

pub fn decide_entry_category(p: &ProbabilityVector, m: &CategoryMapping) -> Result<Decision, MapperError> {
    decide_from_scores(&aggregate_average(p, m), &m.vocab)
}

pub fn decide_batch(
    vectors: &[ProbabilityVector],
    m: &CategoryMapping,
    exec: Exec,
) -> Vec<Result<Decision, MapperError>> {
    exec.map(vectors, |p| decide_entry_category(p, m))
}

/// Reads a posterior sidecar: header `image_id,p0,...,p999`, one row per image.
pub fn read_posterior_sidecar<R: Read>(reader: R) -> Result<Vec<(String, ProbabilityVector)>, MapperError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let sidecar = |row: u64, reason: String| MapperError::Sidecar { row, reason };
    let headers = rdr.headers().map_err(|e| sidecar(1, e.to_string()))?.clone();
    let expected_ok = headers.len() == NUM_LEAVES + 1
        && headers.get(0) == Some("image_id")
        && headers.iter().skip(1).enumerate().all(|(i, h)| h == format!("p{i}"));
    if !expected_ok {
        return Err(sidecar(1, "expected header image_id,p0,...,p999".into()));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| sidecar(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let row = rec.position().map_or(0, |p| p.line());
        if rec.len() != NUM_LEAVES + 1 {
            return Err(sidecar(row, format!("expected {} columns, found {}", NUM_LEAVES + 1, rec.len())));
        }
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| sidecar(row, e.to_string()))?;
        let p = ProbabilityVector::new(values).map_err(|e| sidecar(row, e.to_string()))?;
        out.push((rec[0].to_owned(), p));
    }
    Ok(out)
}

//! Pairwise error-consistency matrices across humans and models.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::config::MetricOptions;
use crate::metrics::{consistency_cell, MetricError};
use crate::par::Exec;
use crate::stats::mean;
use crate::trial_store::{ConditionId, DecisionTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingMode {
    AsGiven,
    ByMeanHumanConsistency,
    Clustered,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatrixError {
    #[error("need at least two deciders, got {0}")]
    TooFewDeciders(usize),
    #[error("no human ids given")]
    NoHumans,
    #[error("unknown decider {0}")]
    UnknownDecider(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Symmetric matrix of kappa values. `None` marks pairs without shared images.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyMatrix {
    pub dataset_id: String,
    pub decider_ids: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
    pub ordering_mode: OrderingMode,
}

/// Kappa of `a` vs `b` averaged over `conditions`. `Ok(None)` when some
/// condition has no shared images.
pub fn pair_kappa(
    a: &DecisionTable,
    b: &DecisionTable,
    conditions: &[ConditionId],
    opts: MetricOptions,
) -> Result<Option<f64>, MetricError> {
    let mut vals = Vec::with_capacity(conditions.len());
    for c in conditions {
        match consistency_cell(a, b, c.as_str(), opts.na_policy) {
            Ok(cell) if cell.degenerate && opts.exclude_degenerate => {}
            Ok(cell) => vals.push(cell.kappa),
            Err(MetricError::EmptyIntersection { .. }) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    Ok(mean(vals))
}

/// Builds the matrix over `tables` (one per decider, same dataset) with the
/// given retained conditions. Pairs are computed through `exec`.
pub fn build_matrix(
    tables: &[&DecisionTable],
    conditions: &[ConditionId],
    opts: MetricOptions,
    exec: Exec,
) -> Result<ConsistencyMatrix, MatrixError> {
    let n = tables.len();
    if n < 2 {
        return Err(MatrixError::TooFewDeciders(n));
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let results = exec.map(&pairs, |&(i, j)| {
        // a decider lacking a retained condition gets NA rather than failing
        // the whole matrix
        let covered =
            conditions.iter().all(|c| tables[i].has_condition(c.as_str()) && tables[j].has_condition(c.as_str()));
        if !covered {
            return Ok(None);
        }
        pair_kappa(tables[i], tables[j], conditions, opts)
    });
    let mut values = vec![vec![None; n]; n];
    for (&(i, j), r) in pairs.iter().zip(results) {
        let v = r?;
        values[i][j] = v;
        values[j][i] = v;
    }
    Ok(ConsistencyMatrix {
        dataset_id: tables[0].dataset_id().to_owned(),
        decider_ids: tables.iter().map(|t| t.decider_id().to_owned()).collect(),
        values,
        ordering_mode: OrderingMode::AsGiven,
    })
}

impl ConsistencyMatrix {
    pub fn len(&self) -> usize {
        self.decider_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decider_ids.is_empty()
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.decider_ids.iter().position(|x| x == a)?;
        let j = self.decider_ids.iter().position(|x| x == b)?;
        self.values[i][j]
    }

    /// Applies the same permutation to rows and columns; `perm[k]` is the old
    /// index placed at position `k`.
    pub fn permuted(&self, perm: &[usize], mode: OrderingMode) -> ConsistencyMatrix {
        ConsistencyMatrix {
            dataset_id: self.dataset_id.clone(),
            decider_ids: perm.iter().map(|&i| self.decider_ids[i].clone()).collect(),
            values: perm.iter().map(|&i| perm.iter().map(|&j| self.values[i][j]).collect()).collect(),
            ordering_mode: mode,
        }
    }

    /// Mean kappa of each decider against the humans (excluding itself).
    pub fn mean_human_consistency(&self, human_ids: &[String]) -> Vec<Option<f64>> {
        let humans: Vec<usize> = (0..self.len()).filter(|&i| human_ids.contains(&self.decider_ids[i])).collect();
        (0..self.len()).map(|i| mean(humans.iter().filter(|&&h| h != i).filter_map(|&h| self.values[i][h]))).collect()
    }

    /// Humans first, then everyone else; within each group by descending mean
    /// kappa against the humans. Stable, and deciders without any value sort
    /// last in their group.
    pub fn order_by_mean_human_consistency(&self, human_ids: &[String]) -> Result<ConsistencyMatrix, MatrixError> {
        if human_ids.is_empty() {
            return Err(MatrixError::NoHumans);
        }
        if let Some(h) = human_ids.iter().find(|h| !self.decider_ids.contains(h)) {
            return Err(MatrixError::UnknownDecider(h.clone()));
        }
        let means = self.mean_human_consistency(human_ids);
        let mut perm: Vec<usize> = (0..self.len()).collect();
        perm.sort_by(|&a, &b| {
            let ha = human_ids.contains(&self.decider_ids[a]);
            let hb = human_ids.contains(&self.decider_ids[b]);
            hb.cmp(&ha).then_with(|| {
                let ma = means[a].unwrap_or(f64::NEG_INFINITY);
                let mb = means[b].unwrap_or(f64::NEG_INFINITY);
                mb.total_cmp(&ma)
            })
        });
        Ok(self.permuted(&perm, OrderingMode::ByMeanHumanConsistency))
    }

    /// Average-linkage agglomerative clustering on `1 - kappa` (NA pairs at
    /// the maximum distance 2), leaves read off left to right. When merging,
    /// the cluster holding the smaller original index goes left.
    pub fn clustered(&self) -> ConsistencyMatrix {
        let n = self.len();
        let dist = |i: usize, j: usize| self.values[i][j].map_or(2.0, |k| 1.0 - k);
        // each cluster: (members in display order, min original index)
        let mut clusters: Vec<(Vec<usize>, usize)> = (0..n).map(|i| (vec![i], i)).collect();
        while clusters.len() > 1 {
            let mut best: Option<(f64, usize, usize)> = None;
            for a in 0..clusters.len() {
                for b in a + 1..clusters.len() {
                    let ds: Vec<f64> = clusters[a]
                        .0
                        .iter()
                        .flat_map(|&i| clusters[b].0.iter().map(move |&j| (i, j)))
                        .map(|(i, j)| dist(i, j))
                        .collect();
                    let d = mean(ds).expect("non-empty clusters");
                    if best.is_none_or(|(bd, _, _)| d < bd) {
                        best = Some((d, a, b));
                    }
                }
            }
            let (_, a, b) = best.expect("at least two clusters");
            let right = clusters.remove(b);
            let left = clusters.remove(a);
            let (first, second) = if left.1 <= right.1 { (left, right) } else { (right, left) };
            let min = first.1.min(second.1);
            let mut members = first.0;
            members.extend(second.0);
            clusters.insert(a, (members, min));
        }
        let perm = clusters.pop().map(|c| c.0).unwrap_or_default();
        self.permuted(&perm, OrderingMode::Clustered)
    }

    pub fn ordered(&self, mode: OrderingMode, human_ids: &[String]) -> Result<ConsistencyMatrix, MatrixError> {
        match mode {
            OrderingMode::AsGiven => Ok(self.clone()),
            OrderingMode::ByMeanHumanConsistency => self.order_by_mean_human_consistency(human_ids),
            OrderingMode::Clustered => Ok(self.clustered()),
        }
    }

    /// Long-format CSV `row_id,col_id,kappa`; `NA` for pairs without shared images.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row_id,col_id,kappa\n");
        for (i, r) in self.decider_ids.iter().enumerate() {
            for (j, c) in self.decider_ids.iter().enumerate() {
                let v = self.values[i][j].map_or_else(|| "NA".to_owned(), |v| v.to_string());
                let _ = writeln!(s, "{},{},{}", crate::report::csv_field(r), crate::report::csv_field(c), v);
            }
        }
        s
    }
}

/// Kappa per dataset for selected decider pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseReport {
    pub datasets: Vec<String>,
    pub rows: Vec<PairwiseRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseRow {
    pub a: String,
    pub b: String,
    pub kappa: Vec<Option<f64>>,
}

/// A dataset's deciders plus its retained conditions.
pub struct DatasetDeciders<'a> {
    pub dataset_id: &'a str,
    pub tables: BTreeMap<&'a str, &'a DecisionTable>,
    pub conditions: &'a [ConditionId],
}

pub fn pairwise_report(
    pairs: &[(String, String)],
    datasets: &[DatasetDeciders<'_>],
    opts: MetricOptions,
) -> Result<PairwiseReport, MatrixError> {
    let mut rows = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let mut kappa = Vec::with_capacity(datasets.len());
        for d in datasets {
            let ta = d
                .tables
                .get(a.as_str())
                .ok_or_else(|| MatrixError::UnknownDecider(format!("{a} in {}", d.dataset_id)))?;
            let tb = d
                .tables
                .get(b.as_str())
                .ok_or_else(|| MatrixError::UnknownDecider(format!("{b} in {}", d.dataset_id)))?;
            kappa.push(pair_kappa(ta, tb, d.conditions, opts)?);
        }
        rows.push(PairwiseRow { a: a.clone(), b: b.clone(), kappa });
    }
    Ok(PairwiseReport { datasets: datasets.iter().map(|d| d.dataset_id.to_owned()).collect(), rows })
}

impl PairwiseReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("pair");
        for d in &self.datasets {
            s.push(',');
            s.push_str(&crate::report::csv_field(d));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&crate::report::csv_field(&format!("{} vs. {}", r.a, r.b)));
            for k in &r.kappa {
                s.push(',');
                s.push_str(&k.map_or_else(|| "NA".to_owned(), |v| v.to_string()));
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let labels: Vec<String> = self.rows.iter().map(|r| format!("{} vs. {}", r.a, r.b)).collect();
        let w0 = labels.iter().map(|l| l.chars().count()).max().unwrap_or(0).max(4);
        let widths: Vec<usize> = self.datasets.iter().map(|d| d.chars().count().max(4)).collect();
        let mut s = format!("{:w0$}", "");
        for (d, w) in self.datasets.iter().zip(&widths) {
            let _ = write!(s, " | {d:>w$}");
        }
        s.push('\n');
        for (l, r) in labels.iter().zip(&self.rows) {
            let _ = write!(s, "{l:w0$}");
            for (k, w) in r.kappa.iter().zip(&widths) {
                let v = k.map_or_else(|| "NA".to_owned(), |v| format!("{v:.2}"));
                let _ = write!(s, " | {v:>w$}");
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial_store::testutil::table_from_pattern;

    fn pat(bits: &str) -> Vec<bool> {
        bits.chars().map(|c| c == '1').collect()
    }

    fn conds() -> Vec<ConditionId> {
        vec!["c".into()]
    }

    #[test]
    fn identical_pair_gives_ones() {
        let a = table_from_pattern("a", "c", &pat("1101001011"));
        let b = table_from_pattern("b", "c", &pat("1101001011"));
        let m = build_matrix(&[&a, &b], &conds(), MetricOptions::default(), Exec::Sequential).unwrap();
        for row in &m.values {
            for v in row {
                assert_eq!(*v, Some(1.0));
            }
        }
    }

    fn sample() -> ConsistencyMatrix {
        let h1 = table_from_pattern("subject-01", "c", &pat("1111100000"));
        let h2 = table_from_pattern("subject-02", "c", &pat("1111000001"));
        let m1 = table_from_pattern("m1", "c", &pat("1010101010"));
        let m2 = table_from_pattern("m2", "c", &pat("1111100100"));
        build_matrix(&[&m1, &h1, &m2, &h2], &conds(), MetricOptions::default(), Exec::Parallel).unwrap()
    }

    #[test]
    fn symmetric_and_parallel_equals_sequential() {
        let m = sample();
        for i in 0..m.len() {
            for j in 0..m.len() {
                assert_eq!(m.values[i][j], m.values[j][i]);
            }
            assert_eq!(m.values[i][i], Some(1.0));
        }
        let h1 = table_from_pattern("subject-01", "c", &pat("1111100000"));
        let h2 = table_from_pattern("subject-02", "c", &pat("1111000001"));
        let m1 = table_from_pattern("m1", "c", &pat("1010101010"));
        let m2 = table_from_pattern("m2", "c", &pat("1111100100"));
        let s = build_matrix(&[&m1, &h1, &m2, &h2], &conds(), MetricOptions::default(), Exec::Sequential).unwrap();
        assert_eq!(s, m);
    }

    #[test]
    fn human_ordering() {
        let m = sample();
        let humans = vec!["subject-01".to_string(), "subject-02".to_string()];
        let o = m.order_by_mean_human_consistency(&humans).unwrap();
        assert_eq!(&o.decider_ids[..2], &["subject-01", "subject-02"]);
        // m2 agrees with the humans far more than alternating m1
        assert_eq!(&o.decider_ids[2..], &["m2", "m1"]);
        for i in 0..o.len() {
            for j in 0..o.len() {
                assert_eq!(o.values[i][j], m.get(&o.decider_ids[i], &o.decider_ids[j]));
            }
        }
        // already sorted input stays put
        let again = o.order_by_mean_human_consistency(&humans).unwrap();
        assert_eq!(again.decider_ids, o.decider_ids);
        assert!(matches!(m.order_by_mean_human_consistency(&[]), Err(MatrixError::NoHumans)));
        assert!(matches!(m.order_by_mean_human_consistency(&["ghost".into()]), Err(MatrixError::UnknownDecider(_))));
    }

    #[test]
    fn clustering_keeps_multiset() {
        let m = sample();
        let c = m.clustered();
        let mut before: Vec<f64> = m.values.iter().flatten().flatten().copied().collect();
        let mut after: Vec<f64> = c.values.iter().flatten().flatten().copied().collect();
        before.sort_by(f64::total_cmp);
        after.sort_by(f64::total_cmp);
        assert_eq!(before, after);
        assert_eq!(c.ordering_mode, OrderingMode::Clustered);
        let mut ids = c.decider_ids.clone();
        ids.sort();
        assert_eq!(ids, vec!["m1", "m2", "subject-01", "subject-02"]);
    }

    #[test]
    fn na_for_disjoint_deciders() {
        let a = table_from_pattern("a", "c", &pat("1100"));
        let b = table_from_pattern("b", "other", &pat("1100"));
        let m = build_matrix(&[&a, &b], &conds(), MetricOptions::default(), Exec::Sequential).unwrap();
        assert_eq!(m.values[0][1], None);
        assert!(m.to_csv().contains("a,b,NA"));
    }

    #[test]
    fn pairwise_rows() {
        let a = table_from_pattern("a", "c", &pat("1101001011"));
        let b = table_from_pattern("b", "c", &pat("1101001010"));
        let c = conds();
        let ds = DatasetDeciders {
            dataset_id: "test",
            tables: [("a", &a), ("b", &b)].into_iter().collect(),
            conditions: &c,
        };
        let r = pairwise_report(&[("a".into(), "a".into()), ("a".into(), "b".into())], &[ds], MetricOptions::default())
            .unwrap();
        assert_eq!(r.rows[0].kappa, vec![Some(1.0)]);
        assert!(r.rows[1].kappa[0].unwrap() < 1.0);
        assert!(r.to_text().contains("a vs. a"));
    }
}

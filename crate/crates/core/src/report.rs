//! Serialised outputs: metric reports, human baselines and plot series.
//!
//! Every CSV here is plain RFC 4180 with `\n` line endings; numbers are
//! printed with Rust's shortest round-trip formatting and `NA` marks a
//! missing value.

use std::fmt::Write as _;

use serde::Serialize;

use crate::benchmark::{Benchmark, EvalError, MetricReport};
use crate::matrix::pair_kappa;
use crate::metrics::{condition_accuracy, HumanBaseline, ShapeBias};
use crate::stats::mean;

/// Quotes a CSV field when needed.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |v| v.to_string())
}

pub fn report_json(report: &MetricReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialises")
}

pub const CELLS_HEADER: &str = "dataset,condition,human,model,human_correct,human_n,human_accuracy,model_correct,model_n,model_accuracy,accuracy_gap,n_joint,both_correct,only_human,only_model,both_wrong,c_obs,c_exp,kappa,degenerate";

/// One row per (dataset, condition, human) cell.
pub fn report_cells_csv(report: &MetricReport) -> String {
    let mut s = String::from(CELLS_HEADER);
    s.push('\n');
    for c in &report.cells {
        let k = &c.consistency;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&c.human.dataset_id),
            csv_field(c.human.condition.as_str()),
            csv_field(&c.human.decider_id),
            csv_field(&c.candidate.decider_id),
            c.human.correct,
            c.human.n,
            c.human.accuracy,
            c.candidate.correct,
            c.candidate.n,
            c.candidate.accuracy,
            c.accuracy_gap,
            k.n_joint,
            k.counts.both_correct,
            k.counts.only_a,
            k.counts.only_b,
            k.counts.both_wrong,
            k.c_obs,
            k.c_exp,
            k.kappa,
            k.degenerate
        );
    }
    s
}

pub fn summary_csv(reports: &[MetricReport]) -> String {
    let mut s = String::from("model,accuracy_difference,observed_consistency,error_consistency,ood_accuracy\n");
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            csv_field(&r.model_id),
            r.accuracy_difference,
            r.observed_consistency,
            r.error_consistency,
            r.ood_accuracy
        );
    }
    s
}

pub fn human_baselines_csv(b: &[HumanBaseline]) -> String {
    let mut s = String::from("human,accuracy_difference,observed_consistency,error_consistency,datasets\n");
    for h in b {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            csv_field(&h.decider_id),
            h.accuracy_difference,
            h.observed_consistency,
            h.error_consistency,
            csv_field(&h.datasets.join(";"))
        );
    }
    s
}

/// Point of an accuracy or kappa line series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub dataset: String,
    pub condition: String,
    pub decider: String,
    pub is_human: bool,
    pub retained: bool,
    pub value: Option<f64>,
}

/// Accuracy per (dataset, condition, decider), every condition of the descriptor.
pub fn accuracy_series(bench: &Benchmark, dataset: Option<&str>) -> Result<Vec<SeriesPoint>, EvalError> {
    let na = bench.config.metrics.na_policy;
    let mut out = Vec::new();
    for d in bench.datasets.iter().filter(|d| dataset.is_none_or(|x| x == d.descriptor.dataset_id)) {
        for c in &d.descriptor.conditions {
            for t in d.all_deciders() {
                let value = if t.has_condition(c.as_str()) {
                    Some(condition_accuracy(t, c.as_str(), na)?.accuracy)
                } else {
                    None
                };
                out.push(SeriesPoint {
                    dataset: d.descriptor.dataset_id.clone(),
                    condition: c.to_string(),
                    decider: t.decider_id().to_owned(),
                    is_human: d.descriptor.is_human(t.decider_id()),
                    retained: d.retained.contains(c),
                    value,
                });
            }
        }
    }
    Ok(out)
}

/// Mean kappa against the human pool (leave-one-out for humans) per
/// (dataset, condition, decider).
pub fn kappa_series(bench: &Benchmark, dataset: Option<&str>) -> Result<Vec<SeriesPoint>, EvalError> {
    let opts = bench.config.metrics;
    let mut out = Vec::new();
    for d in bench.datasets.iter().filter(|d| dataset.is_none_or(|x| x == d.descriptor.dataset_id)) {
        for c in &d.descriptor.conditions {
            let cond = std::slice::from_ref(c);
            for t in d.all_deciders() {
                let mut ks = Vec::new();
                if t.has_condition(c.as_str()) {
                    for h in d.humans.iter().filter(|h| h.decider_id() != t.decider_id() && h.has_condition(c.as_str()))
                    {
                        if let Some(k) = pair_kappa(h, t, cond, opts)? {
                            ks.push(k);
                        }
                    }
                }
                out.push(SeriesPoint {
                    dataset: d.descriptor.dataset_id.clone(),
                    condition: c.to_string(),
                    decider: t.decider_id().to_owned(),
                    is_human: d.descriptor.is_human(t.decider_id()),
                    retained: d.retained.contains(c),
                    value: mean(ks),
                });
            }
        }
    }
    Ok(out)
}

pub fn series_csv(points: &[SeriesPoint]) -> String {
    let mut s = String::from("dataset,condition,decider,is_human,retained,value\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            csv_field(&p.dataset),
            csv_field(&p.condition),
            csv_field(&p.decider),
            p.is_human,
            p.retained,
            opt(p.value)
        );
    }
    s
}

/// Error consistency against OOD accuracy, one point per model.
pub fn scatter_csv(reports: &[MetricReport]) -> String {
    let mut s = String::from("model,ood_accuracy,error_consistency\n");
    for r in reports {
        let _ = writeln!(s, "{},{},{}", csv_field(&r.model_id), r.ood_accuracy, r.error_consistency);
    }
    s
}

pub fn shape_bias_csv(biases: &[ShapeBias]) -> String {
    let mut s = String::from("decider,category,shape_decisions,texture_decisions,shape_bias\n");
    for b in biases {
        let _ = writeln!(
            s,
            "{},all,{},{},{}",
            csv_field(&b.decider_id),
            b.shape_decisions,
            b.texture_decisions,
            b.shape_bias
        );
        for c in &b.per_category {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                csv_field(&b.decider_id),
                csv_field(&c.category),
                c.shape_decisions,
                c.texture_decisions,
                opt(c.shape_bias)
            );
        }
    }
    s
}

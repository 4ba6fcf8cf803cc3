//! Acceptance report: one line per criterion, `[PASS]`, `[FAIL]` or
//! `[BLOCKED]`. Exits nonzero iff some criterion failed.
//!
//! Criteria that need the externally published decision files are BLOCKED
//! unless `OODGAP_PUBLISHED_DATA` points at a directory laid out as
//! `<dir>/<dataset>/*.csv`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use oodgap_core::class_mapper::{decide_entry_category, CategoryMapping, ProbabilityVector, NUM_LEAVES};
use oodgap_core::config::{AccuracyDifferenceForm, ExclusionMode, MetricOptions, NaPolicy};
use oodgap_core::metrics::{
    accuracy_difference, consistency_cell, expected_consistency, ConsistencyCounts, DatasetSlice,
};
use oodgap_core::ranker::excluded_conditions;
use oodgap_core::trial_store::{CategoryLabel, ConditionId, DatasetDescriptor, DatasetKind, Vocabulary};
use oodgap_core::{Benchmark, BenchmarkConfig, DecisionTable, Exec, TrialRecord};
use oodgap_distort::ops::{high_pass, low_pass};
use oodgap_distort::{apply_unclamped, AmplitudeSpectrum, ApplyOptions, DistortionKind, DistortionSpec, RasterImage};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and sizes, as stated by the criteria.
const KAPPA_ORACLE_MAX_N: usize = 4;
const KAPPA_ORACLE_BUDGET: Duration = Duration::from_secs(1);
const MC_PAIRS: usize = 10_000;
const MC_SAMPLES: usize = 100;
const MC_SIGMAS: f64 = 3.0;
const MC_SEED: u64 = 0x5eed_0001;
const TABLE1_TOL: f64 = 0.001;
const TABLE2_TOL: f64 = 0.005;
const TABLE3_TOL: f64 = 0.01;
const FULL_RUN_BUDGET: Duration = Duration::from_secs(300);
const IDENTITY_TOL: f64 = 1e-6;
const MAPPER_CASES: u32 = 10_000;

// Model ids as they appear in the published decision files.
const CLIP: &str = "clip";
const SQUEEZENET: &str = "squeezenet1_0";
const VIT_L: &str = "vit_large_patch16_224";
const RESNET50: &str = "resnet50";
const VGG16: &str = "vgg16_bn";
const BAGNET9: &str = "bagnet9";

type Criterion = (&'static str, fn() -> Outcome);

enum Outcome {
    Pass(String),
    Fail(String),
    Blocked(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn published_data() -> Result<PathBuf, Outcome> {
    match std::env::var_os("OODGAP_PUBLISHED_DATA") {
        Some(p) if Path::new(&p).is_dir() => Ok(PathBuf::from(p)),
        Some(p) => Err(Outcome::Blocked(format!("OODGAP_PUBLISHED_DATA={} is not a directory", p.to_string_lossy()))),
        None => Err(Outcome::Blocked("published decision files not available (set OODGAP_PUBLISHED_DATA)".into())),
    }
}

fn vocab() -> Arc<Vocabulary> {
    Arc::new(Vocabulary::default())
}

/// Table on condition "c" whose response to image i is correct iff `correct[i]`.
fn table(decider: &str, correct: &[bool]) -> DecisionTable {
    let d = DatasetDescriptor::new("fixture", DatasetKind::Parametric, ["c"]);
    let records = correct
        .iter()
        .enumerate()
        .map(|(i, &ok)| {
            let truth = CategoryLabel::from_index(i % 16);
            TrialRecord {
                decider_id: decider.into(),
                session: 1,
                trial_index: i as u32 + 1,
                response_time: None,
                response: Some(if ok { truth } else { CategoryLabel::from_index((i + 1) % 16) }),
                true_category: truth,
                condition: "c".into(),
                image_id: format!("img{i}"),
            }
        })
        .collect();
    DecisionTable::from_records(&d, vocab(), records).unwrap()
}

fn bits(mask: u32, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> i & 1 == 1).collect()
}

fn to_f64(r: Ratio<i64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn kappa_oracle() -> Outcome {
    let start = Instant::now();
    let mut cases = 0;
    let mut mismatches = Vec::new();
    for n in 1..=KAPPA_ORACLE_MAX_N {
        for ma in 0..1u32 << n {
            for mb in 0..1u32 << n {
                cases += 1;
                let (a, b) = (bits(ma, n), bits(mb, n));
                let cell = consistency_cell(&table("a", &a), &table("b", &b), "c", NaPolicy::Incorrect).unwrap();
                // Cohen's kappa from the 2x2 contingency table of correctness.
                let mut t = [[0i64; 2]; 2];
                for i in 0..n {
                    t[a[i] as usize][b[i] as usize] += 1;
                }
                let total = Ratio::from_integer(n as i64);
                let p_o = Ratio::from_integer(t[1][1] + t[0][0]) / total;
                let p_a = Ratio::from_integer(t[1][0] + t[1][1]) / total;
                let p_b = Ratio::from_integer(t[0][1] + t[1][1]) / total;
                let one = Ratio::from_integer(1);
                let p_e = p_a * p_b + (one - p_a) * (one - p_b);
                let ok = if p_e == one {
                    cell.degenerate && cell.kappa == 0.0
                } else {
                    !cell.degenerate
                        && cell.kappa == to_f64((p_o - p_e) / (one - p_e))
                        && cell.c_obs == to_f64(p_o)
                        && cell.c_exp == to_f64(p_e)
                };
                if !ok {
                    mismatches.push(format!("n={n} a={a:?} b={b:?}"));
                }
            }
        }
    }
    let took = start.elapsed();
    verdict(
        mismatches.is_empty() && took < KAPPA_ORACLE_BUDGET,
        format!(
            "{cases} patterns (n <= {KAPPA_ORACLE_MAX_N}), {} mismatches{}, {took:.2?} (budget {KAPPA_ORACLE_BUDGET:?})",
            mismatches.len(),
            mismatches.first().map_or(String::new(), |m| format!(", first {m}"))
        ),
    )
}

fn chance_agreement() -> Outcome {
    let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut worst = (0.0f64, 0.0, 0.0);
    let mut misses = 0;
    for (i, &pa) in grid.iter().enumerate() {
        for (j, &pb) in grid.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(MC_SEED + (i * 9 + j) as u64);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..MC_PAIRS {
                let c = ConsistencyCounts::from_outcomes(
                    (0..MC_SAMPLES).map(|_| (rng.random_bool(pa), rng.random_bool(pb))),
                );
                let obs = c.observed();
                sum += obs;
                sum_sq += obs * obs;
            }
            let n = MC_PAIRS as f64;
            let mean = sum / n;
            let var = (sum_sq - n * mean * mean) / (n - 1.0);
            let se = (var / n).sqrt();
            let z = (mean - expected_consistency(pa, pb)).abs() / se;
            if z > MC_SIGMAS {
                misses += 1;
            }
            if z > worst.0 {
                worst = (z, pa, pb);
            }
        }
    }
    verdict(
        misses == 0,
        format!(
            "81 (p_a, p_b) pairs x {MC_PAIRS} deciders x {MC_SAMPLES} samples, seed {MC_SEED:#x}: {misses} beyond {MC_SIGMAS} SE, worst {:.2} SE at ({}, {})",
            worst.0, worst.1, worst.2
        ),
    )
}

fn hand_fixtures() -> Outcome {
    // p_h = p_m = 0.8 over 10 images, 6 both right, 2 only-human, 2 only-model.
    let h: Vec<bool> = (0..10).map(|i| i < 8).collect();
    let m: Vec<bool> = (0..10).map(|i| !(6..8).contains(&i)).collect();
    let cell = consistency_cell(&table("subject-01", &h), &table("m", &m), "c", NaPolicy::Incorrect).unwrap();
    let kappa_ok = cell.kappa == -0.25 && cell.c_obs == 0.6;

    // One condition, human 8/10, model 6/10.
    let human = table("subject-01", &h);
    let model = table("m", &(0..10).map(|i| i < 6).collect::<Vec<_>>());
    let pool = [&human];
    let conds = [ConditionId::new("c")];
    let a = accuracy_difference(
        &[DatasetSlice { candidate: &model, humans: &pool, conditions: &conds }],
        MetricOptions::default(),
    )
    .unwrap();
    verdict(kappa_ok && a == 0.04, format!("kappa {} (c_obs {}), A {a}", cell.kappa, cell.c_obs))
}

fn load_published(config: BenchmarkConfig) -> Result<Benchmark, Outcome> {
    let dir = published_data()?;
    Benchmark::load(config, &dir, Exec::default()).map_err(|e| Outcome::Fail(format!("loading {}: {e}", dir.display())))
}

struct TableCheck {
    misses: Vec<String>,
}

impl TableCheck {
    fn near(&mut self, what: &str, got: Option<f64>, want: f64, tol: f64) {
        match got {
            Some(v) if (v - want).abs() <= tol => {}
            Some(v) => self.misses.push(format!("{what} {v:.4} vs {want}")),
            None => self.misses.push(format!("{what} missing")),
        }
    }
}

fn table_1_2_for(opts: MetricOptions) -> Result<(Vec<String>, Duration, usize), Outcome> {
    let cfg = BenchmarkConfig { metrics: opts, ..BenchmarkConfig::default() };
    let start = Instant::now();
    let bench = load_published(cfg)?;
    let ids = bench.model_ids();
    let (board, ood, failed) = bench.leaderboards(&ids, Exec::default()).map_err(|e| Outcome::Fail(e.to_string()))?;
    let took = start.elapsed();
    let row = |id: &str| board.iter().find(|r| r.model_id == id);
    let ood_of = |id: &str| ood.iter().find(|r| r.model_id == id).map(|r| r.ood_accuracy);
    let mut c = TableCheck { misses: failed.iter().map(|(id, e)| format!("{id}: {e}")).collect() };
    for (id, a, o, e) in [(CLIP, 0.023, 0.758, 0.281), (SQUEEZENET, 0.145, 0.574, 0.153)] {
        c.near(&format!("{id} A"), row(id).map(|r| r.accuracy_difference), a, TABLE1_TOL);
        c.near(&format!("{id} O"), row(id).map(|r| r.observed_consistency), o, TABLE1_TOL);
        c.near(&format!("{id} E"), row(id).map(|r| r.error_consistency), e, TABLE1_TOL);
    }
    c.near(&format!("{CLIP} mean rank"), row(CLIP).map(|r| r.mean_rank), 1.0, TABLE1_TOL);
    c.near(&format!("{VIT_L} OOD"), ood_of(VIT_L), 0.73, TABLE2_TOL);
    c.near(&format!("{SQUEEZENET} OOD"), ood_of(SQUEEZENET), 0.40, TABLE2_TOL);
    Ok((c.misses, took, ids.len()))
}

fn table_reproduction() -> Outcome {
    let default = MetricOptions::default();
    let (misses, took, n) = match table_1_2_for(default) {
        Ok(r) => r,
        Err(o) => return o,
    };
    let timing = format!("{n} models in {took:.1?} (budget {FULL_RUN_BUDGET:?})");
    if misses.is_empty() {
        return verdict(took < FULL_RUN_BUDGET, format!("default options; {timing}"));
    }
    // Sweep the documented alternatives before declaring failure.
    for na_policy in [NaPolicy::Incorrect, NaPolicy::Exclude] {
        for form in [AccuracyDifferenceForm::Squared, AccuracyDifferenceForm::Absolute] {
            let opts = MetricOptions { na_policy, accuracy_difference_form: form, ..default };
            if opts == default {
                continue;
            }
            if let Ok((m, _, _)) = table_1_2_for(opts) {
                if m.is_empty() {
                    return verdict(took < FULL_RUN_BUDGET, format!("matches with {na_policy:?}/{form:?}; {timing}"));
                }
            }
        }
    }
    Outcome::Fail(format!("no option combination matches; default misses: {}", misses.join("; ")))
}

fn pairwise_reproduction() -> Outcome {
    let bench = match load_published(BenchmarkConfig::default()) {
        Ok(b) => b,
        Err(o) => return o,
    };
    let mut c = TableCheck { misses: Vec::new() };
    for (a, b, ds, want) in [(RESNET50, VGG16, "sketch", 0.74), (RESNET50, BAGNET9, "silhouette", 0.14)] {
        let got = bench
            .pairwise(&[(a.to_owned(), b.to_owned())], &[ds.to_owned()])
            .ok()
            .and_then(|r| r.rows.first().and_then(|row| row.kappa[0]));
        c.near(&format!("{a}/{b} on {ds}"), got, want, TABLE3_TOL);
    }
    verdict(c.misses.is_empty(), if c.misses.is_empty() { "2 pairs".into() } else { c.misses.join("; ") })
}

fn exclusion_conformance() -> Outcome {
    let explicit = BenchmarkConfig::default();
    let mut rules = explicit.clone();
    rules.exclusion_mode = ExclusionMode::RuleDerived;
    let bench = match load_published(rules) {
        Ok(b) => b,
        Err(o) => return o,
    };
    let mut misses = Vec::new();
    let mut checked = 0;
    for d in &bench.datasets {
        let Some(list) = explicit.excluded_conditions.get(&d.descriptor.dataset_id) else { continue };
        checked += 1;
        let derived = excluded_conditions(&d.descriptor, &d.retained);
        let mut listed: Vec<ConditionId> = list.iter().cloned().collect();
        listed.extend(explicit.also_excluded.get(&d.descriptor.dataset_id).into_iter().flatten().cloned());
        listed.sort();
        listed.dedup();
        let mut derived_sorted = derived.clone();
        derived_sorted.sort();
        if derived_sorted != listed {
            misses.push(format!("{}: derived {derived:?}, listed {listed:?}", d.descriptor.dataset_id));
        }
    }
    verdict(
        misses.is_empty() && checked > 0,
        format!(
            "{checked} datasets; {}",
            if misses.is_empty() { "all lists reproduced".into() } else { misses.join("; ") }
        ),
    )
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> RasterImage {
    let data = (0..w * h * c).map(|_| rng.random::<f64>()).collect();
    RasterImage::new(w, h, c, data).unwrap()
}

fn apply(img: &RasterImage, kind: DistortionKind, level: f64, seed: u64) -> RasterImage {
    apply_unclamped(img, &DistortionSpec::new(kind, level, seed).unwrap(), &ApplyOptions::default(), None).unwrap()
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_owned(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn regeneration_identical() -> Result<usize, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for cat in Vocabulary::default().names() {
        for k in 0..2 {
            let img = random_image(&mut rng, 32, 32, 3);
            let p = tmp.path().join("src").join(cat).join(format!("{cat}_{k}.png"));
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            img.save_png(&p).map_err(|e| e.to_string())?;
        }
    }
    let mut images = 0;
    for dataset in ["uniform-noise", "phase-scrambling", "low-pass", "false-colour"] {
        let mut trees = Vec::new();
        for (run, jobs) in [("a", "1"), ("b", "1"), ("c", "4")] {
            let out = tmp.path().join(format!("{dataset}-{run}"));
            let o = Command::new(env!("CARGO_BIN_EXE_oodgap"))
                .env("SOURCE_DATE_EPOCH", "0")
                .args(["distort", "--dataset", dataset, "--seed", "42", "--jobs", jobs, "--source"])
                .arg(tmp.path().join("src"))
                .arg("--out")
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            if !o.status.success() {
                return Err(format!("{dataset}: {}", String::from_utf8_lossy(&o.stderr)));
            }
            trees.push(tree(&out));
        }
        if trees[0] != trees[1] || trees[0] != trees[2] {
            return Err(format!("{dataset}: outputs differ between runs"));
        }
        images += trees[0].len() - 2;
    }
    Ok(images)
}

fn distortion_laws() -> Outcome {
    use DistortionKind::*;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut record = |name: &'static str, v: f64| {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(v);
    };
    let mut shapes: Vec<(usize, usize, usize)> =
        (0..200).map(|i| (2 + i % 23, 2 + (i * 7) % 19, [1, 3][i % 2])).collect();
    shapes.push((224, 224, 3));
    for (w, h, c) in shapes {
        let img = random_image(&mut rng, w, h, c);
        let seed = rng.random();
        record("contrast c=1", apply(&img, Contrast, 1.0, seed).max_abs_diff(&img));
        record("phase noise w=0", apply(&img, PhaseNoise, 0.0, seed).max_abs_diff(&img));
        record("uniform noise w=0", apply(&img, UniformNoise, 0.0, seed).max_abs_diff(&img));
        let mut r = img.clone();
        for _ in 0..4 {
            r = apply(&r, Rotation, 90.0, seed);
        }
        record("rotation x4", r.max_abs_diff(&img));
        let sigma = rng.random_range(0.3..6.0);
        let (hp, lp) = (high_pass(&img, sigma), low_pass(&img, sigma));
        let recon = hp.data().iter().zip(lp.data()).zip(img.data()).map(|((a, b), x)| (a + b - 0.5 - x).abs());
        record("high+low reconstruction", recon.fold(0.0, f64::max));
        let noisy = apply(&img, PhaseNoise, rng.random_range(0.0..=180.0), seed);
        let (s0, s1) = (AmplitudeSpectrum::of_image(&img), AmplitudeSpectrum::of_image(&noisy));
        record(
            "phase-noise amplitudes",
            s0.values.iter().zip(&s1.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
        );
    }
    let laws_ok = worst.values().all(|&v| v <= IDENTITY_TOL);
    let summary: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    match regeneration_identical() {
        Ok(n) => verdict(
            laws_ok,
            format!(
                "201 images, max deviations: {}; {n} PNGs byte-identical over 3 runs (jobs 1, 1, 4)",
                summary.join(", ")
            ),
        ),
        Err(e) => Outcome::Fail(format!("{}; regeneration: {e}", summary.join(", "))),
    }
}

/// The failure reason without the (1000-entry) shrunk input.
fn brief<T>(r: Result<(), TestError<T>>) -> Result<(), String> {
    r.map_err(|e| match e {
        TestError::Fail(reason, _) => format!("falsified: {reason}"),
        TestError::Abort(reason) => format!("aborted: {reason}"),
    })
}

fn deterministic(config: &PropConfig) -> TestRunner {
    TestRunner::new_with_rng(config.clone(), TestRng::deterministic_rng(config.rng_algorithm))
}

fn mapper_properties() -> Outcome {
    let vocab = vocab();
    let mapping = CategoryMapping::shipped(vocab.clone()).unwrap();
    let config = PropConfig { cases: MAPPER_CASES, failure_persistence: None, ..PropConfig::default() };
    let posterior = || prop::collection::vec(0.0f64..1.0, NUM_LEAVES);
    let decide = |v: Vec<f64>| decide_entry_category(&ProbabilityVector::new(v).unwrap(), &mapping).unwrap();

    let mut runner = deterministic(&config);
    let scale = runner.run(&(posterior(), 1e-3f64..1e3), |(p, c)| {
        let base = decide(p.clone());
        let scaled = decide(p.iter().map(|v| v * c).collect());
        prop_assert!(base.tie || scaled.category == base.category);
        Ok(())
    });

    let mut runner = deterministic(&config);
    let permute = runner.run(&(posterior(), any::<u64>()), |(p, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut q = p.clone();
        for label in vocab.labels() {
            let leaves = mapping.leaves(label);
            let mut vals: Vec<f64> = leaves.iter().map(|&l| p[l]).collect();
            for i in (1..vals.len()).rev() {
                vals.swap(i, rng.random_range(0..=i));
            }
            for (&l, v) in leaves.iter().zip(vals) {
                q[l] = v;
            }
        }
        let base = decide(p);
        prop_assert!(base.tie || decide(q).category == base.category);
        Ok(())
    });

    let mut runner = deterministic(&config);
    let labels: Vec<CategoryLabel> = vocab.labels().collect();
    let single = runner.run(&(0..labels.len(), any::<prop::sample::Index>(), 1e-9f64..=1.0), |(k, pick, mass)| {
        let leaves = mapping.leaves(labels[k]);
        let mut p = vec![0.0; NUM_LEAVES];
        p[leaves[pick.index(leaves.len())]] = mass;
        let d = decide(p);
        prop_assert_eq!(d.category, labels[k]);
        prop_assert!(!d.tie);
        Ok(())
    });

    let results = [
        ("scale invariance", brief(scale)),
        ("within-category permutation", brief(permute)),
        ("single-leaf mass", brief(single)),
    ];
    let failures: Vec<String> =
        results.iter().filter_map(|(n, r)| r.as_ref().err().map(|e| format!("{n}: {e}"))).collect();
    verdict(
        failures.is_empty(),
        if failures.is_empty() {
            format!("{MAPPER_CASES} cases each: scale invariance, within-category permutation, single-leaf mass over {} categories", labels.len())
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("kappa oracle equivalence", kappa_oracle),
        ("chance-agreement Monte Carlo", chance_agreement),
        ("hand-fixture metrics", hand_fixtures),
        ("leaderboard and OOD table reproduction", table_reproduction),
        ("pairwise kappa reproduction", pairwise_reproduction),
        ("exclusion-list conformance", exclusion_conformance),
        ("distortion identity laws and regeneration", distortion_laws),
        ("class-mapper properties", mapper_properties),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let (tag, detail) = match check() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Blocked(d) => ("BLOCKED", d),
        };
        println!("[{tag}] {name}: {detail}");
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

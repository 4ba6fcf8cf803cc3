use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use oodgap_core::class_mapper::{decide_batch, read_posterior_sidecar, CategoryMapping};
use oodgap_core::config::BenchmarkConfig;
use oodgap_core::matrix::OrderingMode;
use oodgap_core::report::{self, csv_field, SeriesPoint};
use oodgap_core::trial_store::{
    csv_files, load_decisions, validate_balance, write_decisions, DatasetDescriptor, DecisionTable, StoreError,
    TrialRecord, Vocabulary,
};
use oodgap_core::{plot, ranker, Benchmark, Exec, MetricReport};
use oodgap_distort::generate::{generate_dataset, scan_sources, source_spectrum, GenerateJob, MANIFEST_FILE};
use oodgap_distort::{AmplitudeSpectrum, ApplyOptions, DistortionKind, FalseColourMode, NoisePolicy};
use serde::Serialize;

use crate::args::{
    Cli, Command, DistortArgs, FalseColourArg, Format, Global, MapArgs, MatrixArgs, ModelsArgs, NoisePolicyArg, Order,
    PairsArgs, PlotArgs, SpectrumArgs, ValidateArgs,
};
use crate::output::{hash_file, FileHash, Output};
use crate::CliError;

pub const SPECTRUM_FILE: &str = "mean_spectrum.amps";

struct Ctx {
    config: BenchmarkConfig,
    config_path: Option<PathBuf>,
    config_text: String,
    exec: Exec,
    global: Global,
}

impl Ctx {
    fn new(global: Global) -> Result<Self, CliError> {
        let (config, config_text) = match &global.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
                (BenchmarkConfig::load(p)?, text)
            }
            None => (BenchmarkConfig::default(), oodgap_core::config::DEFAULT_CONFIG_ASSET.to_owned()),
        };
        let exec = configure_threads(global.jobs)?;
        Ok(Ctx { config, config_path: global.config.clone(), config_text, exec, global })
    }

    fn vocab(&self) -> Result<Arc<Vocabulary>, CliError> {
        Ok(self.config.vocabulary()?)
    }

    fn load(&self) -> Result<(Benchmark, Vec<FileHash>), CliError> {
        let bench = Benchmark::load(self.config.clone(), &self.global.data, self.exec)?;
        let mut inputs = Vec::new();
        for d in &bench.datasets {
            let dir = self.global.data.join(&d.descriptor.dataset_id);
            for f in csv_files(&dir).map_err(|e| CliError::data(e.to_string()))? {
                inputs.push(hash_file(&f)?);
            }
        }
        Ok((bench, inputs))
    }

    fn finish(&self, out: Output, command: &str, inputs: Vec<FileHash>) -> Result<(), CliError> {
        out.finish(command, self.config_path.as_deref(), &self.config_text, self.global.seed, inputs)
    }
}

fn configure_threads(jobs: Option<usize>) -> Result<Exec, CliError> {
    match jobs {
        Some(0) => Err(CliError::config("--jobs must be at least 1")),
        Some(1) => Ok(Exec::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::internal(e.to_string()))?;
            Ok(Exec::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => {
            log::warn!("built without the parallel feature; running sequentially");
            Ok(Exec::Sequential)
        }
        None => Ok(Exec::default()),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Ctx::new(cli.global)?;
    match cli.command {
        Command::Validate(a) => validate(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Benchmark(a) => benchmark(&ctx, a),
        Command::Matrix(a) => matrix(&ctx, a),
        Command::Pairs(a) => pairs(&ctx, a),
        Command::Distort(a) => distort(&ctx, a),
        Command::Spectrum(a) => spectrum(&ctx, a),
        Command::Plotdata(a) => plotdata(&ctx, a),
        Command::MapPosteriors(a) => map_posteriors(&ctx, a),
    }
}

/// Model ids are used as file names; anything outside `[A-Za-z0-9._-]` becomes `_`.
fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect()
}

// ---- validate ----

#[derive(Debug, Serialize)]
struct Diagnostic {
    path: String,
    row: Option<u64>,
    kind: &'static str,
    message: String,
}

fn store_diagnostic(e: &StoreError) -> Diagnostic {
    let (path, row, kind) = match e {
        StoreError::Io { path, .. } => (path.display().to_string(), None, "io"),
        StoreError::EmptyFile { path } => (path.display().to_string(), None, "empty_file"),
        StoreError::MalformedRow { path, row, .. } => (path.display().to_string(), Some(*row), "malformed_row"),
        StoreError::UnknownCategory { path, row, .. } => (path.display().to_string(), Some(*row), "unknown_category"),
        StoreError::UnknownCondition { path, row, .. } => (path.display().to_string(), Some(*row), "unknown_condition"),
        StoreError::DuplicateTrial { path, row, .. } => (path.display().to_string(), Some(*row), "duplicate_trial"),
        StoreError::DuplicateImage { path, row, .. } => (path.display().to_string(), Some(*row), "duplicate_image"),
        StoreError::MixedDeciders { path, row, .. } => (path.display().to_string(), Some(*row), "mixed_deciders"),
        StoreError::InvalidDescriptor { .. } => (String::new(), None, "invalid_descriptor"),
        StoreError::MergeMismatch { .. } => (String::new(), None, "merge_mismatch"),
        StoreError::NoDecisionFiles(p) => (p.display().to_string(), None, "no_decision_files"),
    };
    Diagnostic { path, row, kind, message: e.to_string() }
}

/// Resolves validate arguments to (descriptor, files) groups. A directory
/// named after a configured dataset is one group; any other directory is a
/// data root whose dataset subdirectories are groups; a file belongs to the
/// dataset named by its parent directory.
fn validation_groups<'c>(
    config: &'c BenchmarkConfig,
    paths: &[PathBuf],
) -> Result<Vec<(&'c DatasetDescriptor, Vec<PathBuf>)>, CliError> {
    let dir_name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut groups: BTreeMap<String, (&DatasetDescriptor, Vec<PathBuf>)> = BTreeMap::new();
    let mut add = |d: &'c DatasetDescriptor, files: Vec<PathBuf>| {
        groups.entry(d.dataset_id.clone()).or_insert((d, Vec::new())).1.extend(files);
    };
    let list = |dir: &Path| csv_files(dir).map_err(|e| CliError::data(e.to_string()));
    for p in paths {
        if p.is_file() {
            let parent = p.parent().map(dir_name).unwrap_or_default();
            let d = config.dataset(&parent).ok_or_else(|| {
                CliError::data(format!("{}: parent directory is not a configured dataset", p.display()))
            })?;
            add(d, vec![p.clone()]);
        } else if p.is_dir() {
            if let Some(d) = config.dataset(&dir_name(p)) {
                add(d, list(p)?);
                continue;
            }
            for d in &config.datasets {
                let sub = p.join(&d.dataset_id);
                if sub.is_dir() {
                    add(d, list(&sub)?);
                }
            }
        } else {
            return Err(CliError::data(format!("{}: no such file or directory", p.display())));
        }
    }
    Ok(groups.into_values().filter(|(_, f)| !f.is_empty()).collect())
}

fn validate(ctx: &Ctx, a: ValidateArgs) -> Result<(), CliError> {
    let vocab = ctx.vocab()?;
    let paths = if a.paths.is_empty() { vec![ctx.global.data.clone()] } else { a.paths.clone() };
    let groups = validation_groups(&ctx.config, &paths)?;
    if groups.is_empty() {
        let shown: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
        return Err(CliError::data(format!("no datasets found in {}", shown.join(", "))));
    }
    let mut out = Output::new(&ctx.global.out)?;
    let mut inputs = Vec::new();
    let mut diags = Vec::new();
    let mut n_files = 0;
    for (d, files) in &groups {
        let mut by_decider: BTreeMap<String, DecisionTable> = BTreeMap::new();
        for f in files {
            n_files += 1;
            inputs.push(hash_file(f)?);
            let table = match load_decisions(f, d, &vocab) {
                Ok(t) => t,
                Err(e) => {
                    diags.push(store_diagnostic(&e));
                    continue;
                }
            };
            let id = table.decider_id().to_owned();
            let merged = match by_decider.remove(&id) {
                Some(prev) => prev.merge(table, d),
                None => Ok(table),
            };
            match merged {
                Ok(t) => {
                    by_decider.insert(id, t);
                }
                Err(e) => {
                    let mut diag = store_diagnostic(&e);
                    diag.path = f.display().to_string();
                    diag.message = format!("{}: against earlier files of {id}: {e}", f.display());
                    diags.push(diag);
                }
            }
        }
        if a.skip_balance {
            continue;
        }
        for t in by_decider.values() {
            for v in validate_balance(t, a.balance_slack) {
                diags.push(Diagnostic {
                    path: ctx.global.data.join(&d.dataset_id).display().to_string(),
                    row: None,
                    kind: "unbalanced",
                    message: format!(
                        "dataset {}: decider {}: condition {}: category {} has {} trials, expected at least {}",
                        d.dataset_id,
                        t.decider_id(),
                        v.condition,
                        v.category,
                        v.count,
                        v.max_count.saturating_sub(a.balance_slack)
                    ),
                });
            }
        }
    }
    match ctx.global.format {
        Format::Json => out.write_json("diagnostics.json", &diags)?,
        Format::Csv => {
            let mut s = String::from("path,row,kind,message\n");
            for d in &diags {
                let row = d.row.map_or_else(String::new, |r| r.to_string());
                let _ = writeln!(s, "{},{row},{},{}", csv_field(&d.path), d.kind, csv_field(&d.message));
            }
            out.write("diagnostics.csv", s)?;
        }
    }
    ctx.finish(out, "validate", inputs)?;
    for d in &diags {
        eprintln!("{}", d.message);
    }
    if diags.is_empty() {
        println!("{n_files} files in {} datasets: ok", groups.len());
        Ok(())
    } else {
        Err(CliError::data(format!("{} problems in {n_files} files", diags.len())))
    }
}

// ---- evaluate / benchmark ----

fn select_models(bench: &Benchmark, a: &ModelsArgs, default_all: bool) -> Result<Vec<String>, CliError> {
    if a.all_models || (default_all && a.models.is_empty()) {
        return Ok(bench.model_ids());
    }
    let known = bench.model_ids();
    if let Some(m) = a.models.iter().find(|m| !known.contains(m)) {
        return Err(CliError::config(format!("model {m} not found in {}", bench_root(bench))));
    }
    Ok(a.models.clone())
}

fn bench_root(bench: &Benchmark) -> String {
    let ids: Vec<&str> = bench.datasets.iter().map(|d| d.descriptor.dataset_id.as_str()).collect();
    format!("datasets [{}]", ids.join(", "))
}

fn evaluate(ctx: &Ctx, a: ModelsArgs) -> Result<(), CliError> {
    let (bench, inputs) = ctx.load()?;
    let models = select_models(&bench, &a, false)?;
    let mut out = Output::new(&ctx.global.out)?;
    let mut failures = Vec::new();
    let baselines = bench.human_baselines().unwrap_or_else(|e| {
        log::error!("human baselines: {e}");
        failures.push(format!("human baselines: {e}"));
        Vec::new()
    });
    let mut ok: Vec<MetricReport> = Vec::new();
    for (id, r) in models.iter().zip(bench.evaluate_models(&models, ctx.exec)) {
        match r {
            Ok(rep) => ok.push(rep),
            Err(e) => {
                log::error!("model {id}: {e}");
                failures.push(format!("model {id}: {e}"));
            }
        }
    }
    match ctx.global.format {
        Format::Csv => {
            out.write("human_baselines.csv", report::human_baselines_csv(&baselines))?;
            if !ok.is_empty() {
                out.write("summary.csv", report::summary_csv(&ok))?;
            }
            for rep in &ok {
                out.write(&format!("reports/{}.cells.csv", file_stem(&rep.model_id)), report::report_cells_csv(rep))?;
            }
        }
        Format::Json => {
            out.write_json("human_baselines.json", &baselines)?;
            for rep in &ok {
                out.write(&format!("reports/{}.json", file_stem(&rep.model_id)), report::report_json(rep))?;
            }
        }
    }
    ctx.finish(out, "evaluate", inputs)?;
    if models.is_empty() && failures.is_empty() {
        println!("no models requested; wrote human baselines for {} observers", baselines.len());
    } else {
        print!("{}", report::summary_csv(&ok));
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::data(failures.join("; ")))
    }
}

fn benchmark(ctx: &Ctx, a: ModelsArgs) -> Result<(), CliError> {
    let (bench, inputs) = ctx.load()?;
    let models = select_models(&bench, &a, true)?;
    let (board, ood, failed) = bench.leaderboards(&models, ctx.exec)?;
    let mut out = Output::new(&ctx.global.out)?;
    match ctx.global.format {
        Format::Csv => {
            out.write("leaderboard.csv", ranker::leaderboard_csv(&board))?;
            out.write("ood_leaderboard.csv", ranker::ood_csv(&ood))?;
        }
        Format::Json => {
            out.write_json("leaderboard.json", &board)?;
            out.write_json("ood_leaderboard.json", &ood)?;
        }
    }
    let text = ranker::leaderboard_text(&board);
    let ood_text = ranker::ood_text(&ood);
    out.write("leaderboard.txt", &text)?;
    out.write("ood_leaderboard.txt", &ood_text)?;
    ctx.finish(out, "benchmark", inputs)?;
    print!("{text}\n{ood_text}");
    if failed.is_empty() {
        return Ok(());
    }
    let msgs: Vec<String> = failed.iter().map(|(id, e)| format!("model {id}: {e}")).collect();
    for m in &msgs {
        log::error!("{m}");
    }
    Err(CliError::data(msgs.join("; ")))
}

// ---- matrix / pairs ----

fn matrix(ctx: &Ctx, a: MatrixArgs) -> Result<(), CliError> {
    let (bench, inputs) = ctx.load()?;
    let d = bench.dataset(&a.dataset).ok_or_else(|| CliError::config(format!("dataset {} not loaded", a.dataset)))?;
    let mode = match a.order {
        Order::AsGiven => OrderingMode::AsGiven,
        Order::Human => OrderingMode::ByMeanHumanConsistency,
        Order::Clustered => OrderingMode::Clustered,
    };
    let m = bench
        .matrix(&a.dataset, ctx.exec)?
        .ordered(mode, &d.human_ids())
        .map_err(|e| CliError::data(format!("dataset {}: {e}", a.dataset)))?;
    let stem = format!("matrix_{}", file_stem(&a.dataset));
    let mut out = Output::new(&ctx.global.out)?;
    match ctx.global.format {
        Format::Csv => out.write(&format!("{stem}.csv"), m.to_csv())?,
        Format::Json => out.write_json(&format!("{stem}.json"), &m)?,
    }
    out.write(&format!("{stem}.svg"), plot::heatmap_svg(&m))?;
    ctx.finish(out, "matrix", inputs)?;
    println!("{} deciders, written to {}", m.len(), ctx.global.out.join(format!("{stem}.csv")).display());
    Ok(())
}

fn pairs(ctx: &Ctx, a: PairsArgs) -> Result<(), CliError> {
    let (bench, inputs) = ctx.load()?;
    let datasets: Vec<String> = if a.datasets.is_empty() {
        bench.datasets.iter().map(|d| d.descriptor.dataset_id.clone()).collect()
    } else {
        a.datasets.clone()
    };
    let rep = bench.pairwise(&a.pairs, &datasets)?;
    let mut out = Output::new(&ctx.global.out)?;
    match ctx.global.format {
        Format::Csv => out.write("pairs.csv", rep.to_csv())?,
        Format::Json => out.write_json("pairs.json", &rep)?,
    }
    let text = rep.to_text();
    out.write("pairs.txt", &text)?;
    ctx.finish(out, "pairs", inputs)?;
    print!("{text}");
    Ok(())
}

// ---- distort / spectrum ----

fn source_inputs(dir: &Path, vocab: &Vocabulary) -> Result<Vec<FileHash>, CliError> {
    scan_sources(dir, vocab)?.iter().map(|s| hash_file(&s.path)).collect()
}

fn distort(ctx: &Ctx, a: DistortArgs) -> Result<(), CliError> {
    let vocab = ctx.vocab()?;
    let d = ctx.config.dataset(&a.dataset).ok_or_else(|| CliError::config(format!("unknown dataset {}", a.dataset)))?;
    let kind = DistortionKind::for_dataset(&a.dataset).ok_or_else(|| {
        CliError::config(format!("dataset {} is not generated by a parametric distortion", a.dataset))
    })?;
    let conditions: Vec<String> = if a.conditions.is_empty() {
        d.conditions.iter().map(|c| c.to_string()).collect()
    } else {
        if let Some(c) = a.conditions.iter().find(|c| !d.has_condition(c)) {
            return Err(CliError::config(format!("condition {c:?} is not defined for dataset {}", a.dataset)));
        }
        a.conditions.clone()
    };
    let mut inputs = source_inputs(&a.source, &vocab)?;
    let spectrum = match (&a.spectrum, kind) {
        (Some(p), _) => {
            inputs.push(hash_file(p)?);
            Some(AmplitudeSpectrum::load(p)?)
        }
        (None, DistortionKind::PowerEqualisation) => {
            log::info!("no --spectrum given; using the mean spectrum of {}", a.source.display());
            Some(source_spectrum(&a.source, &vocab)?)
        }
        (None, _) => None,
    };
    let options = ApplyOptions {
        noise: match a.noise_policy {
            NoisePolicyArg::Clamp => NoisePolicy::Clamp,
            NoisePolicyArg::Resample => NoisePolicy::Resample,
        },
        false_colour: match a.false_colour {
            FalseColourArg::Opponent => FalseColourMode::Opponent,
            FalseColourArg::RgbComplement => FalseColourMode::RgbComplement,
        },
        ..ApplyOptions::default()
    };
    let mut out = Output::new(&ctx.global.out)?;
    let job = GenerateJob {
        source_dir: &a.source,
        out_dir: out.dir(),
        kind,
        conditions,
        seed: ctx.global.seed,
        options,
        spectrum: spectrum.as_ref(),
        balance_slack: a.balance_slack,
        exec: ctx.exec,
    };
    let entries = generate_dataset(&job, &vocab)?;
    for e in &entries {
        out.record(&e.path, e.sha256.clone());
    }
    let manifest = hash_file(&out.dir().join(MANIFEST_FILE))?;
    out.record(MANIFEST_FILE, manifest.sha256);
    ctx.finish(out, "distort", inputs)?;
    println!("{}: {} images", kind, entries.len());
    Ok(())
}

fn spectrum(ctx: &Ctx, a: SpectrumArgs) -> Result<(), CliError> {
    let vocab = ctx.vocab()?;
    let inputs = source_inputs(&a.source, &vocab)?;
    let s = source_spectrum(&a.source, &vocab)?;
    let mut out = Output::new(&ctx.global.out)?;
    out.write(SPECTRUM_FILE, s.to_bytes())?;
    ctx.finish(out, "spectrum", inputs)?;
    println!("{}x{}x{} spectrum over {} images", s.width, s.height, s.channels, scan_sources(&a.source, &vocab)?.len());
    Ok(())
}

// ---- plotdata ----

/// Groups points of one dataset into per-decider series over its conditions.
fn series_by_decider(points: &[SeriesPoint], dataset: &str) -> (Vec<String>, BTreeMap<String, Vec<Option<f64>>>) {
    let mut conditions: Vec<String> = Vec::new();
    let mut series: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for p in points.iter().filter(|p| p.dataset == dataset) {
        if !conditions.contains(&p.condition) {
            conditions.push(p.condition.clone());
        }
    }
    for p in points.iter().filter(|p| p.dataset == dataset) {
        let i = conditions.iter().position(|c| *c == p.condition).expect("collected above");
        let s = series.entry(p.decider.clone()).or_insert_with(|| vec![None; conditions.len()]);
        s[i] = p.value;
    }
    (conditions, series)
}

fn plotdata(ctx: &Ctx, a: PlotArgs) -> Result<(), CliError> {
    let (bench, inputs) = ctx.load()?;
    if let Some(ds) = &a.dataset {
        if bench.dataset(ds).is_none() {
            return Err(CliError::config(format!("dataset {ds} not loaded")));
        }
    }
    let acc = report::accuracy_series(&bench, a.dataset.as_deref())?;
    let kappa = report::kappa_series(&bench, a.dataset.as_deref())?;
    let models = bench.model_ids();
    let mut reports = Vec::new();
    for (id, r) in models.iter().zip(bench.evaluate_models(&models, ctx.exec)) {
        match r {
            Ok(rep) => reports.push(rep),
            // Models missing a dataset have no benchmark-wide point.
            Err(e) => log::warn!("scatter: skipping model {id}: {e}"),
        }
    }
    let mut out = Output::new(&ctx.global.out)?;
    match ctx.global.format {
        Format::Csv => {
            out.write("accuracy_series.csv", report::series_csv(&acc))?;
            out.write("kappa_series.csv", report::series_csv(&kappa))?;
            out.write("consistency_vs_ood.csv", report::scatter_csv(&reports))?;
        }
        Format::Json => {
            out.write_json("accuracy_series.json", &acc)?;
            out.write_json("kappa_series.json", &kappa)?;
            let pts: Vec<_> = reports
                .iter()
                .map(|r| serde_json::json!({"model": r.model_id, "ood_accuracy": r.ood_accuracy, "error_consistency": r.error_consistency}))
                .collect();
            out.write_json("consistency_vs_ood.json", &pts)?;
        }
    }
    for d in &bench.datasets {
        if d.descriptor.texture.is_some() && a.dataset.as_ref().is_none_or(|x| *x == d.descriptor.dataset_id) {
            let biases = bench.shape_biases(&d.descriptor.dataset_id)?;
            out.write(
                &format!("shape_bias_{}.csv", file_stem(&d.descriptor.dataset_id)),
                report::shape_bias_csv(&biases),
            )?;
        }
    }
    if a.svg {
        for d in bench.datasets.iter().filter(|d| a.dataset.as_ref().is_none_or(|x| *x == d.descriptor.dataset_id)) {
            let id = &d.descriptor.dataset_id;
            let (xs, ys) = series_by_decider(&acc, id);
            out.write(
                &format!("accuracy_{}.svg", file_stem(id)),
                plot::line_plot_svg(id, &xs, &ys, "accuracy", (0.0, 1.0)),
            )?;
            let (xs, ys) = series_by_decider(&kappa, id);
            out.write(
                &format!("kappa_{}.svg", file_stem(id)),
                plot::line_plot_svg(id, &xs, &ys, "kappa", (-1.0, 1.0)),
            )?;
        }
        let pts: Vec<(String, f64, f64)> =
            reports.iter().map(|r| (r.model_id.clone(), r.ood_accuracy, r.error_consistency)).collect();
        out.write(
            "consistency_vs_ood.svg",
            plot::scatter_svg("error consistency vs OOD accuracy", &pts, "OOD accuracy", "kappa", (-0.2, 1.0)),
        )?;
    }
    ctx.finish(out, "plotdata", inputs)?;
    println!("{} accuracy points, {} kappa points, {} models", acc.len(), kappa.len(), reports.len());
    Ok(())
}

// ---- map-posteriors ----

fn map_posteriors(ctx: &Ctx, a: MapArgs) -> Result<(), CliError> {
    let vocab = ctx.vocab()?;
    let mapping = match &ctx.config.mapping {
        Some(p) => CategoryMapping::load(p, vocab.clone()),
        None => CategoryMapping::shipped(vocab.clone()),
    }
    .map_err(|e| CliError::config(e.to_string()))?;
    let mut inputs = vec![hash_file(&a.posteriors)?];
    let file =
        std::fs::File::open(&a.posteriors).map_err(|e| CliError::data(format!("{}: {e}", a.posteriors.display())))?;
    let rows = read_posterior_sidecar(std::io::BufReader::new(file))
        .map_err(|e| CliError::data(format!("{}: {e}", a.posteriors.display())))?;
    let (ids, vectors): (Vec<String>, Vec<_>) = rows.into_iter().unzip();
    let mut decided = BTreeMap::new();
    let mut s = String::from("image_id,category,score,tie\n");
    for (id, r) in ids.iter().zip(decide_batch(&vectors, &mapping, ctx.exec)) {
        let d = r.map_err(|e| CliError::data(format!("{}: image {id}: {e}", a.posteriors.display())))?;
        let _ = writeln!(s, "{},{},{},{}", csv_field(id), vocab.name(d.category), d.score, d.tie);
        if decided.insert(id.clone(), d.category).is_some() {
            return Err(CliError::data(format!("{}: image {id} appears twice", a.posteriors.display())));
        }
    }
    let mut out = Output::new(&ctx.global.out)?;
    out.write("mapped_decisions.csv", s)?;
    if let Some(path) = &a.decisions {
        let ds = a.dataset.as_deref().ok_or_else(|| CliError::config("--decisions needs --dataset"))?;
        let d = ctx.config.dataset(ds).ok_or_else(|| CliError::config(format!("unknown dataset {ds}")))?;
        inputs.push(hash_file(path)?);
        let table = load_decisions(path, d, &vocab).map_err(|e| CliError::data(e.to_string()))?;
        let mut records: Vec<TrialRecord> = table.records().to_vec();
        for r in &mut records {
            let label = decided.get(&r.image_id).ok_or_else(|| {
                CliError::data(format!("{}: no posterior for image {}", a.posteriors.display(), r.image_id))
            })?;
            r.response = Some(*label);
        }
        let filled =
            DecisionTable::from_records(d, vocab.clone(), records).map_err(|e| CliError::data(e.to_string()))?;
        let mut buf = Vec::new();
        write_decisions(&filled, &mut buf).map_err(|e| CliError::internal(e.to_string()))?;
        let name = path.file_name().map_or_else(|| "decisions.csv".into(), |n| n.to_string_lossy().into_owned());
        out.write(&name, buf)?;
    }
    ctx.finish(out, "map-posteriors", inputs)?;
    println!("{} images mapped", ids.len());
    Ok(())
}

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use oodgap_core::trial_store::Vocabulary;
use oodgap_core::Exec;
use oodgap_distort::{generate_dataset, ApplyOptions, DistortionKind, GenerateJob, RasterImage};

fn sources(dir: &std::path::Path, vocab: &Vocabulary) {
    for (ci, cat) in vocab.names().iter().enumerate() {
        std::fs::create_dir_all(dir.join(cat)).unwrap();
        for i in 0..2 {
            RasterImage::from_fn(224, 224, 3, |x, y, c| ((x * (ci + 3) + y * (i + 5) + 60 * c) % 256) as f64 / 255.0)
                .unwrap()
                .save_png(&dir.join(cat).join(format!("{cat}{i}.png")))
                .unwrap();
        }
    }
}

fn bench_generate(c: &mut Criterion) {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    let vocab = Vocabulary::default();
    sources(&src, &vocab);
    let mut execs = vec![("sequential", Exec::Sequential)];
    if cfg!(feature = "parallel") {
        execs.push(("parallel", Exec::default()));
    }
    for (kind, conds) in [(DistortionKind::PhaseNoise, vec!["30", "90"]), (DistortionKind::LowPass, vec!["3", "10"])] {
        let mut g = c.benchmark_group(format!("generate_32x2_{kind}"));
        g.sample_size(10);
        for &(name, exec) in &execs {
            let out = tmp.path().join(format!("{kind}-{name}"));
            let job = GenerateJob {
                source_dir: &src,
                out_dir: &out,
                kind,
                conditions: conds.iter().map(|s| s.to_string()).collect(),
                seed: 0,
                options: ApplyOptions::default(),
                spectrum: None,
                balance_slack: 0,
                exec,
            };
            g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| generate_dataset(&job, &vocab).unwrap()));
        }
        g.finish();
    }
}

criterion_group!(benches, bench_generate);
criterion_main!(benches);

use std::path::Path;

use oodgap_core::trial_store::Vocabulary;
use oodgap_core::Exec;
use oodgap_distort::generate::{generate_dataset, image_seed, MANIFEST_FILE};
use oodgap_distort::ops::{grayscale, high_pass, low_pass, BT601};
use oodgap_distort::{
    apply, apply_unclamped, mean_amplitude_spectrum, AmplitudeSpectrum, ApplyOptions, DistortionKind, DistortionSpec,
    GenerateJob, RasterImage,
};
use proptest::prelude::*;

fn image(w: usize, h: usize, channels: usize, lo: f64, hi: f64) -> impl Strategy<Value = RasterImage> {
    prop::collection::vec(lo..hi, w * h * channels).prop_map(move |v| RasterImage::new(w, h, channels, v).unwrap())
}

fn any_image() -> impl Strategy<Value = RasterImage> {
    (2usize..12, 2usize..12, prop::sample::select(vec![1usize, 3])).prop_flat_map(|(w, h, c)| image(w, h, c, 0.0, 1.0))
}

fn run(img: &RasterImage, kind: DistortionKind, level: f64, seed: u64) -> RasterImage {
    let spec = DistortionSpec::new(kind, level, seed).unwrap();
    apply_unclamped(img, &spec, &ApplyOptions::default(), None).unwrap()
}

fn spectrum_close(a: &AmplitudeSpectrum, b: &AmplitudeSpectrum, tol: f64) -> bool {
    a.values.iter().zip(&b.values).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #[test]
    fn identity_levels(img in any_image(), seed in any::<u64>()) {
        use DistortionKind::*;
        for (kind, level) in [(Contrast, 1.0), (PhaseNoise, 0.0), (UniformNoise, 0.0), (LowPass, 0.0),
                              (HighPass, f64::INFINITY), (Grayscale, 0.0), (FalseColour, 0.0), (Rotation, 0.0)] {
            prop_assert!(run(&img, kind, level, seed).max_abs_diff(&img) <= 1e-6, "{kind}");
        }
        let mut r = img.clone();
        for _ in 0..4 {
            r = run(&r, Rotation, 90.0, seed);
        }
        prop_assert_eq!(r, img);
    }

    #[test]
    fn high_plus_low_reconstructs(img in any_image(), sigma in 0.3f64..6.0) {
        let (hp, lp) = (high_pass(&img, sigma), low_pass(&img, sigma));
        for i in 0..img.data().len() {
            prop_assert!((hp.data()[i] + lp.data()[i] - 0.5 - img.data()[i]).abs() <= 1e-6);
        }
    }

    #[test]
    fn grayscale_idempotent_and_false_colour_keeps_luminance(img in image(7, 5, 3, 1.0 / 3.0, 2.0 / 3.0)) {
        let g = grayscale(&img, &BT601);
        prop_assert!(grayscale(&g, &BT601).max_abs_diff(&g) <= 1e-12);
        // in-gamut input keeps the opponent inversion in [0, 1], so clamping is a no-op
        let spec = DistortionSpec::new(DistortionKind::FalseColour, 1.0, 0).unwrap();
        let f = apply(&img, &spec, &ApplyOptions::default(), None).unwrap();
        prop_assert!(f.max_abs_diff(&apply_unclamped(&img, &spec, &ApplyOptions::default(), None).unwrap()) == 0.0);
        prop_assert!(grayscale(&f, &BT601).max_abs_diff(&g) <= 1e-6);
    }

    #[test]
    fn contrast_preserves_order(img in any_image(), c in 0.01f64..1.0) {
        let out = run(&img, DistortionKind::Contrast, c, 0);
        let (a, b) = (img.data(), out.data());
        for i in 1..a.len() {
            prop_assert_eq!(a[i - 1].partial_cmp(&a[i]), b[i - 1].partial_cmp(&b[i]));
        }
        prop_assert!(run(&img, DistortionKind::Contrast, 0.0, 0).data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn phase_noise_keeps_amplitudes(img in any_image(), w in 0.0f64..=180.0, seed in any::<u64>()) {
        let out = run(&img, DistortionKind::PhaseNoise, w, seed);
        prop_assert!(spectrum_close(&AmplitudeSpectrum::of_image(&img), &AmplitudeSpectrum::of_image(&out), 1e-6));
    }

    #[test]
    fn every_output_in_unit_range(img in any_image(), seed in any::<u64>(), pick in 0usize..9, t in 0.0f64..1.0) {
        let kind = DistortionKind::ALL[pick];
        let level = match kind {
            DistortionKind::Grayscale | DistortionKind::FalseColour | DistortionKind::PowerEqualisation => t.round(),
            DistortionKind::Contrast => t,
            DistortionKind::UniformNoise => t,
            DistortionKind::LowPass | DistortionKind::HighPass => 0.2 + 5.0 * t,
            DistortionKind::PhaseNoise => 180.0 * t,
            DistortionKind::Rotation => 90.0 * (4.0 * t).floor().min(3.0),
        };
        let mean = AmplitudeSpectrum::of_image(&img);
        let spec = DistortionSpec::new(kind, level, seed).unwrap();
        let a = apply(&img, &spec, &ApplyOptions::default(), Some(&mean)).unwrap();
        prop_assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(a, apply(&img, &spec, &ApplyOptions::default(), Some(&mean)).unwrap());
    }
}

/// `(phase, amplitude)` per frequency bin from a direct O(n^2) DFT, independent
/// of the FFT used by the crate.
fn phases(img: &RasterImage) -> Vec<(f64, f64)> {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::new();
    for p in img.planes() {
        for ky in 0..h {
            for kx in 0..w {
                let (mut re, mut im) = (0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let a = -2.0 * std::f64::consts::PI * ((kx * x) as f64 / w as f64 + (ky * y) as f64 / h as f64);
                        re += p[y * w + x] * a.cos();
                        im += p[y * w + x] * a.sin();
                    }
                }
                out.push((im.atan2(re), (re * re + im * im).sqrt()));
            }
        }
    }
    out
}

#[test]
fn equalising_against_own_mean_keeps_phases() {
    let imgs: Vec<RasterImage> = (0..3)
        .map(|s| RasterImage::from_fn(8, 6, 3, |x, y, c| ((x * 5 + y * 3 + c + s * 7) % 11) as f64 / 10.0).unwrap())
        .collect();
    let mean = mean_amplitude_spectrum(&imgs).unwrap();
    let spec = DistortionSpec::new(DistortionKind::PowerEqualisation, 1.0, 0).unwrap();
    for img in &imgs {
        let out = apply_unclamped(img, &spec, &ApplyOptions::default(), Some(&mean)).unwrap();
        assert!(spectrum_close(&AmplitudeSpectrum::of_image(&out), &mean, 1e-9));
        for ((pa, na), (pb, nb)) in phases(img).into_iter().zip(phases(&out)) {
            if na > 1e-9 && nb > 1e-9 {
                let d = (pa - pb).rem_euclid(2.0 * std::f64::consts::PI);
                assert!(d.min(2.0 * std::f64::consts::PI - d) < 1e-9);
            }
        }
    }
}

#[test]
fn full_size_phase_round_trip() {
    let img = RasterImage::from_fn(224, 224, 3, |x, y, c| ((x * 31 + y * 17 + c * 7) % 256) as f64 / 255.0).unwrap();
    assert!(run(&img, DistortionKind::PhaseNoise, 0.0, 1).max_abs_diff(&img) == 0.0);
    let noisy = run(&img, DistortionKind::PhaseNoise, 90.0, 1);
    assert!(spectrum_close(&AmplitudeSpectrum::of_image(&img), &AmplitudeSpectrum::of_image(&noisy), 1e-6));
}

fn write_sources(dir: &Path, per_category: usize, size: usize) -> Vocabulary {
    let vocab = Vocabulary::default();
    for (ci, cat) in vocab.names().iter().enumerate() {
        std::fs::create_dir_all(dir.join(cat)).unwrap();
        for i in 0..per_category {
            let img = RasterImage::from_fn(size, size, 3, |x, y, c| {
                ((x * (ci + 1) + y * (i + 2) + c * 40) % 256) as f64 / 255.0
            })
            .unwrap();
            img.save_png(&dir.join(cat).join(format!("{cat}{i:02}.png"))).unwrap();
        }
    }
    vocab
}

fn job<'a>(
    src: &'a Path,
    out: &'a Path,
    kind: DistortionKind,
    conditions: &[&str],
    seed: u64,
    exec: Exec,
) -> GenerateJob<'a> {
    GenerateJob {
        source_dir: src,
        out_dir: out,
        kind,
        conditions: conditions.iter().map(|s| s.to_string()).collect(),
        seed,
        options: ApplyOptions::default(),
        spectrum: None,
        balance_slack: 0,
        exec,
    }
}

const NOISE: [&str; 8] = ["0.0", "0.03", "0.05", "0.1", "0.2", "0.35", "0.6", "0.9"];

#[test]
fn generation_is_reproducible_across_runs_and_threads() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    let vocab = write_sources(&src, 10, 16);

    let outs: Vec<_> = (0..3).map(|i| tmp.path().join(format!("out{i}"))).collect();
    let seq =
        generate_dataset(&job(&src, &outs[0], DistortionKind::UniformNoise, &NOISE, 42, Exec::Sequential), &vocab)
            .unwrap();
    assert_eq!(seq.len(), 16 * 10 * 8);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let par = pool
        .install(|| {
            generate_dataset(&job(&src, &outs[1], DistortionKind::UniformNoise, &NOISE, 42, Exec::default()), &vocab)
        })
        .unwrap();
    assert_eq!(seq, par);
    let manifest = |o: &Path| std::fs::read(o.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest(&outs[0]), manifest(&outs[1]));
    for e in &seq {
        assert_eq!(std::fs::read(outs[0].join(&e.path)).unwrap(), std::fs::read(outs[1].join(&e.path)).unwrap());
    }
    assert!(outs[0].join("0.9").join("dog").join("dog03.png").is_file());

    // another global seed changes the noisy outputs but not the clean ones
    let other =
        generate_dataset(&job(&src, &outs[2], DistortionKind::UniformNoise, &NOISE, 43, Exec::Sequential), &vocab)
            .unwrap();
    for (a, b) in seq.iter().zip(&other) {
        assert_eq!(a.sha256 == b.sha256, a.condition == "0.0", "{}", a.path);
    }
}

#[test]
fn rotation_ignores_the_seed_and_subsets_regenerate() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    let vocab = write_sources(&src, 1, 8);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ra = generate_dataset(
        &job(&src, &a, DistortionKind::Rotation, &["0", "90", "180", "270"], 1, Exec::default()),
        &vocab,
    )
    .unwrap();
    let rb = generate_dataset(
        &job(&src, &b, DistortionKind::Rotation, &["0", "90", "180", "270"], 2, Exec::default()),
        &vocab,
    )
    .unwrap();
    assert_eq!(ra, rb);

    // a subset of the conditions reproduces the same files
    let c = tmp.path().join("c");
    let rc =
        generate_dataset(&job(&src, &c, DistortionKind::UniformNoise, &["0.2"], 9, Exec::default()), &vocab).unwrap();
    let full =
        generate_dataset(&job(&src, &a, DistortionKind::UniformNoise, &["0.1", "0.2"], 9, Exec::default()), &vocab)
            .unwrap();
    assert_eq!(rc[..], full[16..]);
    assert_ne!(image_seed(9, "dog00", "0.1"), image_seed(9, "dog00", "0.2"));
}

#[test]
fn unbalanced_sources_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    let vocab = write_sources(&src, 2, 4);
    std::fs::remove_file(src.join("cat").join("cat01.png")).unwrap();
    let out = tmp.path().join("o");
    let err =
        generate_dataset(&job(&src, &out, DistortionKind::Contrast, &["50"], 0, Exec::Sequential), &vocab).unwrap_err();
    assert!(err.to_string().contains("cat (1 of 2)"), "{err}");
    let mut j = job(&src, &out, DistortionKind::Contrast, &["50"], 0, Exec::Sequential);
    j.balance_slack = 1;
    assert_eq!(generate_dataset(&j, &vocab).unwrap().len(), 31);
}

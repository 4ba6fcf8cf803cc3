use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use oodgap_core::trial_store::Vocabulary;
use oodgap_core::Exec;
use sha2::{Digest, Sha256};

use crate::ops::{apply, ApplyOptions, DistortionKind, DistortionSpec};
use crate::raster::RasterImage;
use crate::spectrum::AmplitudeSpectrum;
use crate::DistortError;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const MANIFEST_HEADER: &str = "image_id,condition,sha256,path";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceImage {
    pub image_id: String,
    pub category: String,
    pub path: PathBuf,
}

/// Lists `<dir>/<category>/*.png`, sorted by image id. Image ids are file
/// stems and must be unique across categories.
pub fn scan_sources(dir: &Path, vocab: &Vocabulary) -> Result<Vec<SourceImage>, DistortError> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| DistortError::Io { path, source }
    };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io(dir))? {
        let entry = entry.map_err(io(dir))?;
        let cat_dir = entry.path();
        if !cat_dir.is_dir() {
            continue;
        }
        let category = entry.file_name().to_string_lossy().into_owned();
        if vocab.get(&category).is_none() {
            return Err(DistortError::UnknownCategory(category));
        }
        for f in std::fs::read_dir(&cat_dir).map_err(io(&cat_dir))? {
            let p = f.map_err(io(&cat_dir))?.path();
            if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                let image_id = p.file_stem().expect("file has a stem").to_string_lossy().into_owned();
                out.push(SourceImage { image_id, category: category.clone(), path: p });
            }
        }
    }
    out.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    if let Some(w) = out.windows(2).find(|w| w[0].image_id == w[1].image_id) {
        return Err(DistortError::DuplicateImage(w[0].image_id.clone()));
    }
    Ok(out)
}

/// Every vocabulary category must have at least `max - slack` images.
pub fn check_balance(sources: &[SourceImage], vocab: &Vocabulary, slack: usize) -> Result<(), DistortError> {
    let mut counts: BTreeMap<&str, usize> = vocab.names().iter().map(|n| (n.as_str(), 0)).collect();
    for s in sources {
        *counts.get_mut(s.category.as_str()).expect("scanned categories are known") += 1;
    }
    let max = counts.values().copied().max().unwrap_or(0);
    let short: Vec<String> =
        counts.iter().filter(|(_, &c)| c + slack < max).map(|(k, c)| format!("{k} ({c} of {max})")).collect();
    if max == 0 || !short.is_empty() {
        return Err(DistortError::Unbalanced(if max == 0 { "no source images".into() } else { short.join(", ") }));
    }
    Ok(())
}

/// Per-image RNG seed: the first 8 bytes (little-endian) of
/// SHA-256(seed as u64 LE || image_id || 0x00 || condition).
pub fn image_seed(global_seed: u64, image_id: &str, condition: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global_seed.to_le_bytes());
    h.update(image_id.as_bytes());
    h.update([0u8]);
    h.update(condition.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone)]
pub struct GenerateJob<'a> {
    pub source_dir: &'a Path,
    pub out_dir: &'a Path,
    pub kind: DistortionKind,
    /// Condition tokens, written as output directory names.
    pub conditions: Vec<String>,
    pub seed: u64,
    pub options: ApplyOptions,
    pub spectrum: Option<&'a AmplitudeSpectrum>,
    pub balance_slack: usize,
    pub exec: Exec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub condition: String,
    pub sha256: String,
    /// Relative to the output directory, `/`-separated.
    pub path: String,
}

/// Writes `<out>/<condition>/<category>/<image_id>.png` for every source and
/// condition, plus the manifest. Entries come in condition order, then image
/// id order.
pub fn generate_dataset(job: &GenerateJob<'_>, vocab: &Vocabulary) -> Result<Vec<ManifestEntry>, DistortError> {
    let sources = scan_sources(job.source_dir, vocab)?;
    check_balance(&sources, vocab, job.balance_slack)?;
    let mut levels = Vec::with_capacity(job.conditions.len());
    let mut seen = BTreeSet::new();
    for c in &job.conditions {
        if !seen.insert(c.as_str()) {
            return Err(DistortError::DuplicateCondition(c.clone()));
        }
        levels.push(job.kind.parse_level(c)?);
    }
    let tasks: Vec<(usize, usize)> = (0..levels.len()).flat_map(|c| (0..sources.len()).map(move |s| (c, s))).collect();
    let results = job.exec.map(&tasks, |&(ci, si)| {
        let src = &sources[si];
        let condition = &job.conditions[ci];
        let img = RasterImage::load_png(&src.path)?;
        let spec = DistortionSpec::new(job.kind, levels[ci], image_seed(job.seed, &src.image_id, condition))?;
        let out = apply(&img, &spec, &job.options, job.spectrum)?;
        let bytes = out.png_bytes();
        let rel = format!("{condition}/{}/{}.png", src.category, src.image_id);
        let path = job.out_dir.join(&rel);
        let parent = path.parent().expect("nested path");
        std::fs::create_dir_all(parent).map_err(|e| DistortError::Io { path: parent.to_owned(), source: e })?;
        std::fs::write(&path, &bytes).map_err(|e| DistortError::Io { path: path.clone(), source: e })?;
        Ok(ManifestEntry {
            image_id: src.image_id.clone(),
            condition: condition.clone(),
            sha256: sha256_hex(&bytes),
            path: rel,
        })
    });
    let entries = results.into_iter().collect::<Result<Vec<_>, DistortError>>()?;
    let mpath = job.out_dir.join(MANIFEST_FILE);
    std::fs::write(&mpath, manifest_csv(&entries)).map_err(|e| DistortError::Io { path: mpath, source: e })?;
    log::info!("{}: wrote {} images under {}", job.kind, entries.len(), job.out_dir.display());
    Ok(entries)
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn manifest_csv(entries: &[ManifestEntry]) -> String {
    let mut s = String::from(MANIFEST_HEADER);
    s.push('\n');
    for e in entries {
        let _ = writeln!(s, "{},{},{},{}", field(&e.image_id), field(&e.condition), e.sha256, field(&e.path));
    }
    s
}

/// Mean amplitude spectrum of every source image.
pub fn source_spectrum(source_dir: &Path, vocab: &Vocabulary) -> Result<AmplitudeSpectrum, DistortError> {
    let sources = scan_sources(source_dir, vocab)?;
    let images = sources.iter().map(|s| RasterImage::load_png(&s.path)).collect::<Result<Vec<_>, _>>()?;
    crate::spectrum::mean_amplitude_spectrum(&images)
}

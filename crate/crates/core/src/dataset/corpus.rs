use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sample::{generate_sample, read_sample, sample_id, write_sample, PipelineConfig, SampleKey};
use super::tensor::write_atomic;
use crate::phantom::{ClassKind, Tissue};
use crate::rng::{self, Stream};
use crate::{Error, Result, PIPELINE_VERSION};

/// Share of the corpus held out for validation (514 of 5996).
pub const VAL_FRACTION: f64 = 514.0 / 5996.0;

pub const MANIFEST: &str = "manifest.json";

/// Relative class weights. Parses `equal` or `gland:1,cyst:0.5,...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMix(pub BTreeMap<ClassKind, f64>);

impl Default for ClassMix {
    fn default() -> Self {
        ClassMix::equal()
    }
}

impl ClassMix {
    pub fn equal() -> Self {
        ClassMix(ClassKind::DATASET.iter().map(|&c| (c, 1.0)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.values().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::param("mix", "weights must be finite and non-negative"));
        }
        if !(self.0.values().sum::<f64>() > 0.0) {
            return Err(Error::param("mix", "at least one weight must be positive"));
        }
        Ok(())
    }

    /// Per-class counts summing to `n`, by largest remainder. Ties go to
    /// the class listed first.
    pub fn allocate(&self, n: usize) -> Result<BTreeMap<ClassKind, usize>> {
        self.validate()?;
        let total: f64 = self.0.values().sum();
        let mut counts = BTreeMap::new();
        let mut rema = Vec::new();
        for (&c, &w) in &self.0 {
            let exact = n as f64 * w / total;
            let base = exact.floor() as usize;
            counts.insert(c, base);
            rema.push((exact - base as f64, c));
        }
        let left = n - counts.values().sum::<usize>();
        rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, c) in rema.iter().take(left) {
            *counts.get_mut(&c).expect("class present") += 1;
        }
        counts.retain(|_, v| *v > 0);
        Ok(counts)
    }

    /// Class of every sample index, shuffled with the split stream of
    /// `master_seed`.
    pub fn assign(&self, n: usize, master_seed: u64) -> Result<Vec<ClassKind>> {
        let mut classes: Vec<ClassKind> = self
            .allocate(n)?
            .into_iter()
            .flat_map(|(c, k)| std::iter::repeat_n(c, k))
            .collect();
        classes.shuffle(&mut rng::stream(master_seed, Stream::Split));
        Ok(classes)
    }
}

impl FromStr for ClassMix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "equal" || s.is_empty() {
            return Ok(ClassMix::equal());
        }
        let mut mix = BTreeMap::new();
        for part in s.split(',') {
            let (name, w) = match part.split_once(':') {
                Some((n, w)) => {
                    let w = w
                        .trim()
                        .parse::<f64>()
                        .map_err(|_| Error::param("mix", format!("bad weight in `{part}`")))?;
                    (n.trim(), w)
                }
                None => (part.trim(), 1.0),
            };
            if mix.insert(name.parse::<ClassKind>()?, w).is_some() {
                return Err(Error::param("mix", format!("class `{name}` listed twice")));
            }
        }
        let mix = ClassMix(mix);
        mix.validate()?;
        Ok(mix)
    }
}

impl fmt::Display for ClassMix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(c, w)| format!("{c}:{w}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub class: ClassKind,
    pub attempt: u32,
}

/// Train/validation partition of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub pipeline_version: String,
    pub master_seed: u64,
    pub config_hash: String,
    pub class_mix: ClassMix,
    pub samples: Vec<ManifestEntry>,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub class_counts: BTreeMap<ClassKind, usize>,
    pub val_class_counts: BTreeMap<ClassKind, usize>,
}

impl SplitManifest {
    pub fn load(corpus: &Path) -> Result<Self> {
        let path = corpus.join(MANIFEST);
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_slice(&text).map_err(|e| Error::json(&path, e))
    }

    pub fn save(&self, corpus: &Path) -> Result<()> {
        let path = corpus.join(MANIFEST);
        let mut json = serde_json::to_vec_pretty(self).map_err(|e| Error::json(&path, e))?;
        json.push(b'\n');
        write_atomic(&path, &json)
    }

    pub fn sample_dir(&self, corpus: &Path, id: &str) -> PathBuf {
        corpus.join(id)
    }
}

/// Validation ids, drawn round-robin over the classes so that their
/// counts differ by at most one. Within a class the lowest indices of the
/// (already shuffled) assignment are taken.
pub fn split_validation(entries: &[ManifestEntry], fraction: f64) -> Vec<String> {
    let n = entries.len();
    if n < 2 || fraction <= 0.0 {
        return Vec::new();
    }
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut by_class: BTreeMap<ClassKind, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in entries {
        by_class.entry(e.class).or_default().push(e);
    }
    let mut val = Vec::with_capacity(n_val);
    let mut round = 0;
    while val.len() < n_val {
        let mut took = false;
        for list in by_class.values() {
            if val.len() == n_val {
                break;
            }
            if let Some(e) = list.get(round) {
                val.push(e.id.clone());
                took = true;
            }
        }
        if !took {
            break;
        }
        round += 1;
    }
    val.sort();
    val
}

/// Generates `n` samples into `out` with `jobs` worker threads.
///
/// Sample `i` depends only on `(master_seed, i)`, its class from the
/// shuffled allocation and the retry count, so the corpus is identical for
/// any `jobs`. A failing sample is retried with the next attempt seed up to
/// `cfg.max_attempts` times.
pub fn build_dataset(
    out: &Path,
    cfg: &PipelineConfig,
    n: usize,
    mix: &ClassMix,
    master_seed: u64,
    jobs: usize,
) -> Result<SplitManifest> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::param("n", "need at least one sample"));
    }
    if jobs == 0 {
        return Err(Error::param("jobs", "need at least one worker"));
    }
    let classes = mix.assign(n, master_seed)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::param("jobs", e.to_string()))?;
    info!("building {n} samples with {jobs} workers into {}", out.display());
    let results: Vec<Result<ManifestEntry>> = pool.install(|| {
        classes
            .par_iter()
            .enumerate()
            .map(|(index, &class)| build_one(out, cfg, class, master_seed, index))
            .collect()
    });
    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;
    let val = split_validation(&samples, VAL_FRACTION);
    let train: Vec<String> = samples
        .iter()
        .filter(|e| val.binary_search(&e.id).is_err())
        .map(|e| e.id.clone())
        .collect();
    let mut class_counts = BTreeMap::new();
    let mut val_class_counts = BTreeMap::new();
    for e in &samples {
        *class_counts.entry(e.class).or_insert(0) += 1;
        let v = val_class_counts.entry(e.class).or_insert(0);
        if val.binary_search(&e.id).is_ok() {
            *v += 1;
        }
    }
    let manifest = SplitManifest {
        pipeline_version: PIPELINE_VERSION.into(),
        master_seed,
        config_hash: cfg.hash(),
        class_mix: mix.clone(),
        samples,
        train,
        val,
        class_counts,
        val_class_counts,
    };
    manifest.save(out)?;
    Ok(manifest)
}

fn build_one(out: &Path, cfg: &PipelineConfig, class: ClassKind, master_seed: u64, index: usize) -> Result<ManifestEntry> {
    let mut last = None;
    for attempt in 0..cfg.max_attempts {
        let key = SampleKey {
            master_seed,
            index,
            attempt,
        };
        match generate_sample(cfg, class, key) {
            Ok(sample) => {
                let id = sample_id(index);
                write_sample(&out.join(&id), &sample)?;
                info!("{id}: {class} (attempt {attempt})");
                return Ok(ManifestEntry { id, class, attempt });
            }
            Err(e) => {
                warn!("sample {index} attempt {attempt} failed: {e}");
                last = Some(e);
            }
        }
    }
    Err(Error::SampleFailed {
        index,
        attempts: cfg.max_attempts,
        last: Box::new(last.expect("at least one attempt")),
    })
}

/// Fixed-width histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub start: f64,
    pub width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn new(width: f64) -> Self {
        Histogram {
            start: f64::NAN,
            width,
            counts: Vec::new(),
        }
    }

    fn add(&mut self, v: f64) {
        let b = (v / self.width).floor() * self.width;
        if self.counts.is_empty() {
            self.start = b;
        }
        if b < self.start {
            let shift = ((self.start - b) / self.width).round() as usize;
            self.counts.splice(0..0, std::iter::repeat_n(0, shift));
            self.start = b;
        }
        let k = ((b - self.start) / self.width).round() as usize;
        if k >= self.counts.len() {
            self.counts.resize(k + 1, 0);
        }
        self.counts[k] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub rms: f64,
}

/// Summary of a corpus on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub samples: usize,
    pub class_counts: BTreeMap<ClassKind, usize>,
    /// Target speeds in 5 m/s bins.
    pub target_histogram: Histogram,
    pub target_min: f64,
    pub target_max: f64,
    pub input: AmplitudeStats,
    /// Sampled region means outside their tissue range, as `id:tissue`.
    pub range_violations: Vec<String>,
    /// Target pixels outside the union of the tissue ranges.
    pub pixels_outside_ranges: u64,
}

impl CorpusStats {
    pub fn ranges_contained(&self) -> bool {
        self.range_violations.is_empty() && self.pixels_outside_ranges == 0
    }
}

/// Reads every sample listed in the manifest of `corpus`.
pub fn corpus_stats(corpus: &Path) -> Result<CorpusStats> {
    let manifest = SplitManifest::load(corpus)?;
    let (lo, hi) = Tissue::ALL.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
        let (a, b) = t.speed_range();
        (lo.min(a), hi.max(b))
    });
    let mut hist = Histogram::new(5.0);
    let mut class_counts = BTreeMap::new();
    let mut violations = Vec::new();
    let mut outside = 0u64;
    let (mut tmin, mut tmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut amin, mut amax, mut sum, mut sq, mut count) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0.0, 0u64);
    for entry in &manifest.samples {
        let s = read_sample(&manifest.sample_dir(corpus, &entry.id))?;
        *class_counts.entry(s.meta.class).or_insert(0) += 1;
        for (t, &m) in &s.meta.mean_speeds {
            let (a, b) = t.speed_range();
            if !(a..=b).contains(&m) {
                violations.push(format!("{}:{}", entry.id, t.name()));
            }
        }
        for &v in &s.target {
            let v = f64::from(v);
            hist.add(v);
            tmin = tmin.min(v);
            tmax = tmax.max(v);
            if !(lo..=hi).contains(&v) {
                outside += 1;
            }
        }
        for &v in &s.input {
            let v = f64::from(v);
            amin = amin.min(v);
            amax = amax.max(v);
            sum += v;
            sq += v * v;
            count += 1;
        }
    }
    let c = count.max(1) as f64;
    Ok(CorpusStats {
        samples: manifest.samples.len(),
        class_counts,
        target_histogram: hist,
        target_min: tmin,
        target_max: tmax,
        input: AmplitudeStats {
            min: amin,
            max: amax,
            mean: sum / c,
            rms: (sq / c).sqrt(),
        },
        range_violations: violations,
        pixels_outside_ranges: outside,
    })
}

use std::collections::BTreeMap;
use std::ops::Range;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::phantom::{ClassKind, SoundSpeedMap, Tissue, TissueLabelMap};
use crate::{Error, Result};

/// Axial bins of the default depth profile.
pub const DEFAULT_DEPTH_BINS: usize = 16;

/// Error of one labelled region of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionError {
    pub tissue: Tissue,
    pub pixels: usize,
    pub mean_estimate: f64,
    pub mean_target: f64,
    /// `mean_estimate − mean_target`, m/s.
    pub error: f64,
    pub relative_error: f64,
}

/// Per-pixel and per-region errors of one estimated map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEvaluation {
    pub class: ClassKind,
    pub regions: Vec<RegionError>,
    /// Pixels that entered the comparison (finite estimate and target).
    pub pixels: usize,
    /// Sum of `|estimate − target|` over those pixels.
    pub abs_error_sum: f64,
    /// Sum of `estimate − target`.
    pub error_sum: f64,
    /// Sum of `(estimate − target)²`.
    pub sq_error_sum: f64,
}

impl SampleEvaluation {
    pub fn pixel_mae(&self) -> f64 {
        self.abs_error_sum / self.pixels as f64
    }

    pub fn region_mae(&self) -> f64 {
        self.regions.iter().map(|r| r.error.abs()).sum::<f64>() / self.regions.len() as f64
    }
}

/// Errors of one phantom class over all evaluated samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassErrors {
    pub samples: usize,
    /// Mean absolute error over all pixels, m/s.
    pub pixel_mae: f64,
    /// Standard deviation of the signed per-pixel error.
    pub pixel_error_std: f64,
    /// Mean absolute regional mean error, m/s.
    pub region_mae: f64,
    /// Standard deviation of the signed regional mean error.
    pub region_error_std: f64,
    /// Signed relative regional errors, for distribution plots.
    pub relative_errors: Vec<f64>,
}

/// Relative error as a function of depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthProfile {
    /// Row ranges of the bins, `[start, end)`.
    pub bins: Vec<(usize, usize)>,
    /// Mean signed relative error per bin, averaged across samples.
    pub mean_relative_error: Vec<f64>,
    /// Mean absolute relative error per bin, averaged across samples.
    pub mean_abs_relative_error: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub per_class: BTreeMap<ClassKind, ClassErrors>,
    pub samples: Vec<SampleEvaluation>,
    pub depth_profile: Option<DepthProfile>,
}

fn check_shapes(estimate: &SoundSpeedMap, target: &SoundSpeedMap) -> Result<()> {
    if estimate.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "estimate {:?} vs target {:?}",
            estimate.shape(),
            target.shape()
        )));
    }
    Ok(())
}

/// Compares one estimated map with its target, per pixel and per region.
///
/// Pixels with a non-finite estimate are skipped; a region left without
/// pixels is dropped with a warning.
pub fn evaluate_sample(
    estimate: &SoundSpeedMap,
    target: &SoundSpeedMap,
    labels: &TissueLabelMap,
) -> Result<SampleEvaluation> {
    check_shapes(estimate, target)?;
    if labels.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "labels {:?} vs target {:?}",
            labels.shape(),
            target.shape()
        )));
    }
    #[derive(Default)]
    struct Acc {
        n: usize,
        est: f64,
        tgt: f64,
    }
    let mut acc: BTreeMap<Tissue, Acc> = BTreeMap::new();
    let mut eval = SampleEvaluation {
        class: labels.class_kind,
        regions: Vec::new(),
        pixels: 0,
        abs_error_sum: 0.0,
        error_sum: 0.0,
        sq_error_sum: 0.0,
    };
    let present = labels.counts();
    for ((&e, &t), &l) in estimate.0.iter().zip(target.0.iter()).zip(labels.labels.iter()) {
        if !(e.is_finite() && t.is_finite()) {
            continue;
        }
        let a = acc.entry(l).or_default();
        a.n += 1;
        a.est += e;
        a.tgt += t;
        let d = e - t;
        eval.pixels += 1;
        eval.abs_error_sum += d.abs();
        eval.error_sum += d;
        eval.sq_error_sum += d * d;
    }
    for tissue in present.keys() {
        match acc.get(tissue) {
            Some(a) if a.n > 0 => {
                let (me, mt) = (a.est / a.n as f64, a.tgt / a.n as f64);
                eval.regions.push(RegionError {
                    tissue: *tissue,
                    pixels: a.n,
                    mean_estimate: me,
                    mean_target: mt,
                    error: me - mt,
                    relative_error: (me - mt) / mt,
                });
            }
            _ => warn!("region {} has no valid pixels and is excluded", tissue.name()),
        }
    }
    if eval.pixels == 0 {
        return Err(Error::param("estimate", "no finite pixels to compare"));
    }
    Ok(eval)
}

fn std_dev(sum: f64, sq_sum: f64, n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let mean = sum / n as f64;
    ((sq_sum - n as f64 * mean * mean).max(0.0) / (n - 1) as f64).sqrt()
}

/// Per-class summary of evaluated samples.
pub fn aggregate(samples: Vec<SampleEvaluation>, depth_profile: Option<DepthProfile>) -> ErrorReport {
    let mut per_class = BTreeMap::new();
    let mut classes: Vec<ClassKind> = samples.iter().map(|s| s.class).collect();
    classes.sort();
    classes.dedup();
    for class in classes {
        let members: Vec<&SampleEvaluation> = samples.iter().filter(|s| s.class == class).collect();
        let pixels: usize = members.iter().map(|s| s.pixels).sum();
        let abs: f64 = members.iter().map(|s| s.abs_error_sum).sum();
        let sum: f64 = members.iter().map(|s| s.error_sum).sum();
        let sq: f64 = members.iter().map(|s| s.sq_error_sum).sum();
        let regions: Vec<&RegionError> = members.iter().flat_map(|s| &s.regions).collect();
        let r_sum: f64 = regions.iter().map(|r| r.error).sum();
        let r_sq: f64 = regions.iter().map(|r| r.error * r.error).sum();
        per_class.insert(
            class,
            ClassErrors {
                samples: members.len(),
                pixel_mae: abs / pixels as f64,
                pixel_error_std: std_dev(sum, sq, pixels),
                region_mae: regions.iter().map(|r| r.error.abs()).sum::<f64>() / regions.len().max(1) as f64,
                region_error_std: std_dev(r_sum, r_sq, regions.len()),
                relative_errors: regions.iter().map(|r| r.relative_error).collect(),
            },
        );
    }
    ErrorReport {
        per_class,
        samples,
        depth_profile,
    }
}

/// Error report of a single estimated map.
pub fn regional_mean_error(
    estimate: &SoundSpeedMap,
    target: &SoundSpeedMap,
    labels: &TissueLabelMap,
) -> Result<ErrorReport> {
    Ok(aggregate(vec![evaluate_sample(estimate, target, labels)?], None))
}

/// Relative error `(estimate − target) / target` averaged in `n_bins`
/// uniform axial bins, per sample and then across samples.
pub fn error_vs_depth(estimates: &[SoundSpeedMap], targets: &[SoundSpeedMap], n_bins: usize) -> Result<DepthProfile> {
    if estimates.is_empty() || estimates.len() != targets.len() {
        return Err(Error::param(
            "estimates",
            format!("{} estimates for {} targets", estimates.len(), targets.len()),
        ));
    }
    let nz = targets[0].shape().0;
    if n_bins == 0 || n_bins > nz {
        return Err(Error::param("n_bins", format!("must lie in [1, {nz}]")));
    }
    let bins: Vec<(usize, usize)> = (0..n_bins).map(|b| (b * nz / n_bins, (b + 1) * nz / n_bins)).collect();
    let mut mean = vec![0.0; n_bins];
    let mut mean_abs = vec![0.0; n_bins];
    for (est, tgt) in estimates.iter().zip(targets) {
        check_shapes(est, tgt)?;
        if tgt.shape().0 != nz {
            return Err(Error::Shape("samples differ in depth".into()));
        }
        for (b, &(lo, hi)) in bins.iter().enumerate() {
            let (mut s, mut sa, mut n) = (0.0, 0.0, 0usize);
            for iz in lo..hi {
                for (e, t) in est.0.row(iz).iter().zip(tgt.0.row(iz)) {
                    let r = (e - t) / t;
                    s += r;
                    sa += r.abs();
                    n += 1;
                }
            }
            mean[b] += s / n as f64;
            mean_abs[b] += sa / n as f64;
        }
    }
    let k = estimates.len() as f64;
    Ok(DepthProfile {
        bins,
        mean_relative_error: mean.into_iter().map(|v| v / k).collect(),
        mean_abs_relative_error: mean_abs.into_iter().map(|v| v / k).collect(),
    })
}

/// Rectangular pixel region, `rows × cols`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRoi {
    pub rows: Range<usize>,
    pub cols: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalStats {
    /// Region mean of every frame.
    pub frame_means: Vec<f64>,
    /// Frames that survived outlier removal.
    pub kept: Vec<bool>,
    pub mean: f64,
    /// Sample standard deviation of the kept frame means.
    pub std: f64,
}

/// Frames whose region mean lies further than this many scaled median
/// absolute deviations from the median are dropped.
const MAD_CUTOFF: f64 = 3.0;
/// Scales the median absolute deviation to a normal standard deviation.
const MAD_SCALE: f64 = 1.4826;

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Frame-to-frame stability of the region mean of a sequence of estimates.
pub fn temporal_consistency(frames: &[SoundSpeedMap], roi: &PixelRoi, remove_outliers: bool) -> Result<TemporalStats> {
    if frames.len() < 2 {
        return Err(Error::param("frames", "need at least two frames"));
    }
    let shape = frames[0].shape();
    if roi.rows.is_empty() || roi.cols.is_empty() || roi.rows.end > shape.0 || roi.cols.end > shape.1 {
        return Err(Error::param("roi", format!("{roi:?} is empty or outside {shape:?}")));
    }
    let frame_means = frames
        .iter()
        .map(|f| {
            if f.shape() != shape {
                return Err(Error::Shape(format!("frame {:?} vs {:?}", f.shape(), shape)));
            }
            let view = f.0.slice(ndarray::s![roi.rows.clone(), roi.cols.clone()]);
            Ok(view.sum() / view.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut kept = vec![true; frames.len()];
    if remove_outliers {
        let med = median(&mut frame_means.clone());
        let mad = median(&mut frame_means.iter().map(|m| (m - med).abs()).collect::<Vec<_>>());
        if mad > 0.0 {
            for (k, m) in kept.iter_mut().zip(&frame_means) {
                *k = (m - med).abs() <= MAD_CUTOFF * MAD_SCALE * mad;
            }
        }
    }
    let vals: Vec<f64> = frame_means.iter().zip(&kept).filter(|(_, &k)| k).map(|(m, _)| *m).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let std = if vals.len() > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(TemporalStats {
        frame_means,
        kept,
        mean,
        std,
    })
}

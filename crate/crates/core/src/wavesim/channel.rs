use std::fs;
use std::path::Path;

use ndarray::{Array2, Ix2};
use serde::{Deserialize, Serialize};

use super::EmittedPulse;
use crate::dataset::tensor::{read_f32, write_atomic, write_f32};
use crate::sigproc::analytic_trace;
use crate::{Error, Result, PIPELINE_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub phantom_seed: u64,
    /// SHA-256 of the transducer, transmission and solver settings.
    pub config_hash: String,
    /// Processing steps applied since simulation, in order.
    #[serde(default)]
    pub processing: Vec<String>,
}

/// Element RF data of one transmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelData {
    /// `n_elements × n_samples`; inactive elements hold zero traces.
    #[serde(skip)]
    pub samples: Array2<f64>,
    pub fs: f64,
    /// Time origin of the transmission, s.
    pub t0: f64,
    /// Absolute time of sample 0, s.
    pub t_start: f64,
    /// Steering angle, degrees.
    pub angle: f64,
    /// Speed used for the transmit delays, m/s.
    pub c_ref: f64,
    /// Duration of the emitted pulse of one element, s.
    pub pulse_duration: f64,
    pub tx_freq: f64,
    pub center_freq: f64,
    pub fractional_bandwidth: f64,
    /// RMS of the transmitted burst, the reference level for noise.
    pub pulse_rms: f64,
    /// Elements that lie over the simulated medium and were recorded.
    pub active: Vec<bool>,
    pub provenance: Provenance,
}

impl ChannelData {
    pub fn n_elements(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.n_samples() as f64 / self.fs
    }

    /// Absolute time of sample `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 / self.fs
    }

    pub fn band_edge(&self) -> f64 {
        self.center_freq * (1.0 + self.fractional_bandwidth)
    }

    pub fn validate(&self) -> Result<()> {
        if self.active.len() != self.n_elements() {
            return Err(Error::Shape(format!(
                "{} activity flags for {} elements",
                self.active.len(),
                self.n_elements()
            )));
        }
        if !(self.fs > 2.0 * self.band_edge()) {
            return Err(Error::param(
                "fs",
                format!("{} Hz is below twice the band edge {} Hz", self.fs, self.band_edge()),
            ));
        }
        if let Some(pos) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(
                "samples",
                format!("non-finite value at flat index {pos}"),
            ));
        }
        Ok(())
    }

    pub(crate) fn with_samples(&self, samples: Array2<f64>, fs: f64, t_start: f64, step: String) -> Self {
        let mut out = self.clone();
        out.samples = samples;
        out.fs = fs;
        out.t_start = t_start;
        out.provenance.processing.push(step);
        out
    }
}

#[derive(Serialize, Deserialize)]
struct ChannelMeta {
    pipeline_version: String,
    n_elements: usize,
    n_samples: usize,
    #[serde(flatten)]
    data: ChannelData,
}

/// Writes `meta.json` and `samples.ustn` (float32) into `dir`.
pub fn save_channels(dir: &Path, ch: &ChannelData) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_f32(&dir.join("samples.ustn"), &ch.samples.mapv(|v| v as f32))?;
    let meta = ChannelMeta {
        pipeline_version: PIPELINE_VERSION.into(),
        n_elements: ch.n_elements(),
        n_samples: ch.n_samples(),
        data: ch.clone(),
    };
    let path = dir.join("meta.json");
    let json = serde_json::to_vec_pretty(&meta).map_err(|e| Error::json(&path, e))?;
    write_atomic(&path, &json)
}

pub fn load_channels(dir: &Path) -> Result<ChannelData> {
    let path = dir.join("meta.json");
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let meta: ChannelMeta = serde_json::from_slice(&text).map_err(|e| Error::json(&path, e))?;
    let samples = read_f32::<Ix2>(&dir.join("samples.ustn"))?;
    if samples.dim() != (meta.n_elements, meta.n_samples) {
        return Err(Error::Shape(format!(
            "{}: samples {:?}, meta declares {:?}",
            dir.display(),
            samples.dim(),
            (meta.n_elements, meta.n_samples)
        )));
    }
    let mut ch = meta.data;
    ch.samples = samples.mapv(f64::from);
    ch.validate()?;
    Ok(ch)
}

/// Arrival time of an echo of `pulse` in `trace`, by matched filtering.
///
/// Returns the absolute time at which the echo pulse ends (so that a pulse
/// emitted at time 0 and delayed by `τ` gives `τ + pulse duration`), taken
/// from the envelope peak of the cross-correlation with sub-sample
/// parabolic refinement. Only lags whose end time is at least `after` are
/// searched.
pub fn arrival_time(trace: &[f64], fs: f64, t_start: f64, emitted: &EmittedPulse, after: f64) -> Option<f64> {
    let pulse = emitted.sample(fs);
    if trace.len() < pulse.len() + 3 {
        return None;
    }
    let lags = trace.len() - pulse.len() + 1;
    let xc: Vec<f64> = (0..lags)
        .map(|k| trace[k..k + pulse.len()].iter().zip(&pulse).map(|(a, b)| a * b).sum())
        .collect();
    let end = |k: f64| t_start + k / fs + emitted.duration();
    let first = (0..lags).find(|&k| end(k as f64) >= after)?;
    // zero padding keeps strong early lags from wrapping onto late ones
    let mut padded = xc[first..].to_vec();
    padded.resize(2 * padded.len(), 0.0);
    let env: Vec<f64> = analytic_trace(&padded)[..lags - first].iter().map(|z| z.norm()).collect();
    let (k, _) = env
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let mut pos = (k + first) as f64;
    if k > 0 && k + 1 < env.len() {
        let (a, b, c) = (env[k - 1], env[k], env[k + 1]);
        let den = a - 2.0 * b + c;
        if den < 0.0 {
            pos += 0.5 * (a - c) / den;
        }
    }
    Some(end(pos))
}

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::sigproc::{das_beamform, BeamformGrid, IqChannels};
use crate::wavesim::TransducerSpec;
use crate::{Error, Result};

/// Rectangular region in metres (lateral from the array centre, depth
/// from the array face). Depths refer to [`ROI_REFERENCE_SPEED`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Roi {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max && self.z_min < self.z_max && self.z_min >= 0.0) {
            return Err(Error::param("roi", "needs x_min < x_max and 0 <= z_min < z_max"));
        }
        Ok(())
    }
}

/// Candidate speeds of a brightness sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub c_min: f64,
    pub c_max: f64,
    pub c_step: f64,
    pub roi: Roi,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            c_min: 1400.0,
            c_max: 1700.0,
            c_step: 5.0,
            roi: Roi {
                x_min: -4e-3,
                x_max: 4e-3,
                z_min: 8e-3,
                z_max: 18e-3,
            },
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_min < self.c_max && self.c_step > 0.0) {
            return Err(Error::param("sweep", "needs c_min < c_max and c_step > 0"));
        }
        self.roi.validate()
    }

    pub fn speeds(&self) -> Vec<f64> {
        let n = ((self.c_max - self.c_min) / self.c_step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.c_min + k as f64 * self.c_step).collect()
    }
}

/// Speed at which ROI depths are specified. At candidate speed `c` the
/// depths are scaled by `c / ROI_REFERENCE_SPEED`, so that every candidate
/// integrates the same window of echo time and attenuation along depth
/// does not favour one speed.
pub const ROI_REFERENCE_SPEED: f64 = 1540.0;

/// Pixel pitch of the region beamformed at each candidate speed.
pub const ROI_PIXEL: f64 = 50e-6;

/// Curves whose max/min brightness ratio is below this are indeterminate.
pub const MIN_CONTRAST: f64 = 1.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub speeds: Vec<f64>,
    /// Mean envelope amplitude over the region at each speed.
    pub brightness: Vec<f64>,
    /// `None` when the curve is too flat to pick a maximum.
    pub c_hat: Option<f64>,
}

/// Speckle-brightness sound-speed estimate: the beamforming speed that
/// maximizes the mean envelope over `sweep.roi`, refined by a parabola
/// through the best speed and its neighbours.
///
/// The images of all transmissions in `iqs` are summed coherently before
/// the envelope is taken. Steered transmissions focus synthetically only
/// when the assumed speed is right, which is what makes the brightness
/// peak; a single unsteered transmission gives a nearly flat curve.
///
/// The region keeps its pixel count at every speed; only its depth bounds
/// stretch with the candidate speed.
pub fn speckle_brightness_sweep(iqs: &[IqChannels], tx: &TransducerSpec, sweep: &SweepSpec) -> Result<SweepResult> {
    sweep.validate()?;
    if iqs.is_empty() {
        return Err(Error::param("channels", "need at least one transmission"));
    }
    let r = sweep.roi;
    let count = |span: f64| (span / ROI_PIXEL).round() as usize + 1;
    let base = BeamformGrid {
        nx: count(r.x_max - r.x_min),
        nz: count(r.z_max - r.z_min),
        x_min: r.x_min,
        x_max: r.x_max,
        z_min: r.z_min,
        z_max: r.z_max,
        c0: sweep.c_min,
    };
    let speeds = sweep.speeds();
    let brightness = speeds
        .par_iter()
        .map(|&c| {
            let scale = c / ROI_REFERENCE_SPEED;
            let grid = BeamformGrid {
                z_min: r.z_min * scale,
                z_max: r.z_max * scale,
                c0: c,
                ..base
            };
            let mut sum = vec![Complex64::default(); grid.nx * grid.nz];
            for iq in iqs {
                let image = das_beamform(iq, tx, &grid)?;
                for (acc, z) in sum.iter_mut().zip(image.pixels.iter()) {
                    *acc += Complex64::new(z.re.into(), z.im.into());
                }
            }
            Ok(sum.iter().map(|z| z.norm()).sum::<f64>() / sum.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let c_hat = peak(&speeds, &brightness, sweep.c_step);
    Ok(SweepResult {
        speeds,
        brightness,
        c_hat,
    })
}

fn peak(speeds: &[f64], b: &[f64], step: f64) -> Option<f64> {
    let (k, &max) = b.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1))?;
    let min = b.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || max < MIN_CONTRAST * min {
        return None;
    }
    let mut c = speeds[k];
    if k > 0 && k + 1 < b.len() {
        let den = b[k - 1] - 2.0 * b[k] + b[k + 1];
        if den < 0.0 {
            c += 0.5 * (b[k - 1] - b[k + 1]) / den * step;
        }
    }
    Some(c)
}

use std::fs;
use std::path::Path;

use ndarray::{Array2, Ix2};
use num_complex::{Complex32, Complex64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::IqChannels;
use crate::dataset::tensor::{read_c64, write_atomic, write_tensor, Tensor};
use crate::phantom::GridSpec;
use crate::wavesim::TransducerSpec;
use crate::{Error, Result};

/// Cartesian pixel grid of a beamformed image. Lateral positions are
/// relative to the array centre, depth is measured from the array face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamformGrid {
    /// Lateral pixel count `M`.
    pub nx: usize,
    /// Axial pixel count `N`.
    pub nz: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    /// Assumed sound speed.
    pub c0: f64,
}

impl BeamformGrid {
    /// 256 × 256 pixels over the full 37.5 mm aperture and 30 mm depth.
    pub fn standard() -> Self {
        let half = 0.5 * TransducerSpec::default().aperture_width();
        BeamformGrid {
            nx: 256,
            nz: 256,
            x_min: -half,
            x_max: half,
            z_min: 0.0,
            z_max: 30e-3,
            c0: 1540.0,
        }
    }

    /// One pixel per node of a phantom grid, so that images and targets
    /// are congruent.
    pub fn covering(grid: &GridSpec, c0: f64) -> Self {
        BeamformGrid {
            nx: grid.nx,
            nz: grid.nz,
            x_min: grid.lateral(0),
            x_max: grid.lateral(grid.nx - 1),
            z_min: 0.0,
            z_max: (grid.nz - 1) as f64 * grid.dz,
            c0,
        }
    }

    pub fn with_c0(&self, c0: f64) -> Self {
        BeamformGrid { c0, ..*self }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nz, self.nx)
    }

    pub fn x(&self, j: usize) -> f64 {
        lerp(self.x_min, self.x_max, j, self.nx)
    }

    pub fn z(&self, i: usize) -> f64 {
        lerp(self.z_min, self.z_max, i, self.nz)
    }

    /// Pixel index nearest to `(x, z)`, if inside the grid.
    pub fn index_of(&self, x: f64, z: f64) -> Option<(usize, usize)> {
        let pos = |v: f64, lo: f64, hi: f64, n: usize| {
            let u = if n > 1 { (v - lo) / (hi - lo) * (n - 1) as f64 } else { 0.0 };
            let r = u.round();
            (r >= 0.0 && r <= (n - 1) as f64).then_some(r as usize)
        };
        Some((pos(z, self.z_min, self.z_max, self.nz)?, pos(x, self.x_min, self.x_max, self.nx)?))
    }

    pub fn validate(&self, tx: &TransducerSpec) -> Result<()> {
        if self.nx == 0 || self.nz == 0 {
            return Err(Error::param("beamform grid", "needs at least one pixel"));
        }
        if !(self.x_min <= self.x_max && self.z_min <= self.z_max) {
            return Err(Error::param("beamform grid", "bounds are inverted"));
        }
        if !(self.z_min >= 0.0) {
            return Err(Error::param("beamform grid", "pixels must lie in front of the array"));
        }
        let half = 0.5 * tx.aperture_width();
        if self.x_min < -half - 1e-9 || self.x_max > half + 1e-9 {
            return Err(Error::param("beamform grid", "extends beyond the array aperture"));
        }
        if !(1400.0..=1700.0).contains(&self.c0) {
            return Err(Error::param("c0", format!("{} m/s is outside [1400, 1700]", self.c0)));
        }
        Ok(())
    }
}

fn lerp(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if n > 1 {
        lo + (hi - lo) * i as f64 / (n - 1) as f64
    } else {
        0.5 * (lo + hi)
    }
}

/// Beamformed complex image of one steering angle, `nz × nx`.
#[derive(Debug, Clone, PartialEq)]
pub struct IQImage {
    pub pixels: Array2<Complex32>,
    pub angle: f64,
    pub grid: BeamformGrid,
}

#[derive(Serialize, Deserialize)]
struct IqMeta {
    angle: f64,
    grid: BeamformGrid,
}

impl IQImage {
    pub fn envelope(&self) -> Array2<f64> {
        self.pixels.mapv(|z| f64::from(z.norm()))
    }

    /// Writes `<name>.ustn` (complex64, `nz × nx`) and `<name>.json`.
    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_tensor(&dir.join(format!("{name}.ustn")), &Tensor::C64(self.pixels.clone().into_dyn()))?;
        let path = dir.join(format!("{name}.json"));
        let meta = IqMeta {
            angle: self.angle,
            grid: self.grid,
        };
        let json = serde_json::to_vec_pretty(&meta).map_err(|e| Error::json(&path, e))?;
        write_atomic(&path, &json)
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(format!("{name}.json"));
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let meta: IqMeta = serde_json::from_slice(&text).map_err(|e| Error::json(&path, e))?;
        let pixels = read_c64::<Ix2>(&dir.join(format!("{name}.ustn")))?;
        if pixels.dim() != meta.grid.shape() {
            return Err(Error::Shape(format!(
                "{}: image {:?}, grid {:?}",
                dir.display(),
                pixels.dim(),
                meta.grid.shape()
            )));
        }
        Ok(IQImage {
            pixels,
            angle: meta.angle,
            grid: meta.grid,
        })
    }
}

/// Steered plane-wave transmit model under an assumed speed `c0`.
///
/// The array fires with delays computed for `c_ref`; the wavefront leaves
/// the array face at the angle `asin(c0 · sinθ / c_ref)` in a medium of
/// speed `c0`. The emitted pulse is centred `pulse_duration / 2` after
/// each element fires, which is where the envelope of the echo peaks.
#[derive(Debug, Clone, Copy)]
pub struct TransmitModel {
    sin_ref: f64,
    cos_med: f64,
    x_anchor: f64,
    c_ref: f64,
    c0: f64,
    centre: f64,
}

impl TransmitModel {
    pub fn new(tx: &TransducerSpec, angle_deg: f64, c_ref: f64, pulse_duration: f64, c0: f64) -> Result<Self> {
        let s = angle_deg.to_radians().sin();
        let s_med = c0 * s / c_ref;
        if !(s_med.abs() < 1.0) {
            return Err(Error::param("c0", "steered wave is evanescent at this speed"));
        }
        let e = if angle_deg >= 0.0 {
            tx.tx_aperture.start
        } else {
            tx.tx_aperture.end - 1
        };
        Ok(TransmitModel {
            sin_ref: s,
            cos_med: (1.0 - s_med * s_med).sqrt(),
            x_anchor: tx.element_x(e),
            c_ref,
            c0,
            centre: 0.5 * pulse_duration,
        })
    }

    /// Time at which the pulse centre reaches `(x, z)`.
    pub fn arrival(&self, x: f64, z: f64) -> f64 {
        self.centre + (x - self.x_anchor) * self.sin_ref / self.c_ref + z * self.cos_med / self.c0
    }
}

/// Delay-and-sum of one plane-wave transmission with dynamic receive.
///
/// Each pixel sums, over the recorded elements with unit weights, the
/// analytic channel sample at the transmit arrival time plus the receive
/// travel time `|p − element| / c0`, interpolated linearly. Delays outside
/// the recording contribute nothing.
pub fn das_beamform(iq: &IqChannels, tx: &TransducerSpec, grid: &BeamformGrid) -> Result<IQImage> {
    grid.validate(tx)?;
    if iq.n_elements() != tx.n_elements || iq.active.len() != tx.n_elements {
        return Err(Error::Shape(format!(
            "{} channels for a {}-element array",
            iq.n_elements(),
            tx.n_elements
        )));
    }
    let model = TransmitModel::new(tx, iq.angle, iq.c_ref, iq.pulse_duration, grid.c0)?;
    let elements: Vec<(f64, &[Complex64])> = (0..tx.n_elements)
        .filter(|&e| iq.active[e])
        .map(|e| {
            let row = iq.data.row(e).to_slice().expect("channel rows are contiguous");
            (tx.element_x(e), row)
        })
        .collect();
    let n = iq.n_samples();
    let rows: Vec<Vec<Complex32>> = (0..grid.nz)
        .into_par_iter()
        .map(|i| {
            let z = grid.z(i);
            (0..grid.nx)
                .map(|j| {
                    let x = grid.x(j);
                    let t_tx = model.arrival(x, z);
                    let mut acc = Complex64::default();
                    for &(xe, trace) in &elements {
                        let t = t_tx + (x - xe).hypot(z) / grid.c0;
                        let u = (t - iq.t_start) * iq.fs;
                        if u >= 0.0 {
                            let k = u as usize;
                            if k + 1 < n {
                                let f = u - k as f64;
                                acc += trace[k] * (1.0 - f) + trace[k + 1] * f;
                            }
                        }
                    }
                    Complex32::new(acc.re as f32, acc.im as f32)
                })
                .collect()
        })
        .collect();
    let pixels = Array2::from_shape_vec(grid.shape(), rows.concat()).expect("one row per depth");
    Ok(IQImage {
        pixels,
        angle: iq.angle,
        grid: *grid,
    })
}

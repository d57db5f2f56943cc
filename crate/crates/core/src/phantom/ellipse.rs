use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::GridSpec;
use crate::{Error, Result};

/// Elliptical inclusion in grid-corner coordinates: `x = ix·dx`, `y = iz·dz`.
///
/// `r1` and `r2` are the denominators of the quadratic form and carry units
/// of m²; the semi-axes are `sqrt(r1)` and `sqrt(r2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseParams {
    pub xc: f64,
    pub yc: f64,
    pub r1: f64,
    pub r2: f64,
    pub theta: f64,
}

impl EllipseParams {
    /// Builds the parameters from semi-axis lengths in metres.
    pub fn from_semi_axes(xc: f64, yc: f64, a: f64, b: f64, theta: f64) -> Self {
        EllipseParams {
            xc,
            yc,
            r1: a * a,
            r2: b * b,
            theta,
        }
    }

    /// Quadratic form; the inclusion is `E ≤ 1`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.theta.sin_cos();
        let u = (x - self.xc) * c + (y - self.yc) * s;
        let v = (x - self.xc) * s - (y - self.yc) * c;
        u * u / self.r1 + v * v / self.r2
    }

    /// Half extents of the axis-aligned bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let (a2, b2) = (self.r1, self.r2);
        ((a2 * c * c + b2 * s * s).sqrt(), (a2 * s * s + b2 * c * c).sqrt())
    }

    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if !(self.r1 > 0.0 && self.r2 > 0.0) {
            return Err(Error::param("ellipse", "r1 and r2 must be positive"));
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.theta) {
            return Err(Error::param("ellipse", "theta must lie in [0, pi]"));
        }
        let (w, h) = ((grid.nx - 1) as f64 * grid.dx, (grid.nz - 1) as f64 * grid.dz);
        if !(0.0..=w).contains(&self.xc) || !(0.0..=h).contains(&self.yc) {
            return Err(Error::param("ellipse", "centre lies outside the grid"));
        }
        let (hx, hy) = self.half_extents();
        if self.xc - hx < 0.0 || self.xc + hx > w || self.yc - hy < 0.0 || self.yc + hy > h {
            return Err(Error::param("ellipse", "inclusion does not fit inside the grid"));
        }
        Ok(())
    }
}

/// Nodes lying exactly on the boundary round to either side of 1.
const BOUNDARY_TOL: f64 = 1e-12;

/// Boolean `nz × nx` mask of pixels with `E ≤ 1`.
pub fn ellipse_mask(grid: &GridSpec, e: &EllipseParams) -> Array2<bool> {
    Array2::from_shape_fn(grid.shape(), |(iz, ix)| {
        e.eval(ix as f64 * grid.dx, iz as f64 * grid.dz) <= 1.0 + BOUNDARY_TOL
    })
}

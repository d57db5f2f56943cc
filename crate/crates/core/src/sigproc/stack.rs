use ndarray::{s, Array3};
use num_complex::Complex32;

use super::{BeamformGrid, IQImage};
use crate::{Error, Result};

/// Names of the six input planes, in storage order: angles ascending, real
/// part before imaginary part.
pub fn plane_names(angles: &[f64]) -> Vec<String> {
    angles
        .iter()
        .flat_map(|a| [format!("{a:+}deg:re"), format!("{a:+}deg:im")])
        .collect()
}

/// Stacks per-angle images into a `2·n_angles × N × M` real tensor.
///
/// Images are sorted by angle; plane `2k` holds the real and plane `2k + 1`
/// the imaginary part of the `k`-th angle.
pub fn stack_model_input(images: &[IQImage]) -> Result<Array3<f32>> {
    let first = images
        .first()
        .ok_or_else(|| Error::param("images", "nothing to stack"))?;
    let shape = first.pixels.dim();
    if let Some(bad) = images.iter().find(|im| im.pixels.dim() != shape) {
        return Err(Error::Shape(format!(
            "image at {}° is {:?}, expected {:?}",
            bad.angle,
            bad.pixels.dim(),
            shape
        )));
    }
    let mut order: Vec<&IQImage> = images.iter().collect();
    order.sort_by(|a, b| a.angle.total_cmp(&b.angle));
    if order.windows(2).any(|w| w[0].angle == w[1].angle) {
        return Err(Error::param("images", "duplicate steering angle"));
    }
    let mut out = Array3::zeros((2 * images.len(), shape.0, shape.1));
    for (k, im) in order.iter().enumerate() {
        out.slice_mut(s![2 * k, .., ..]).assign(&im.pixels.mapv(|z| z.re));
        out.slice_mut(s![2 * k + 1, .., ..]).assign(&im.pixels.mapv(|z| z.im));
    }
    Ok(out)
}

/// Inverse of [`stack_model_input`]. `angles` must be ascending.
pub fn unstack_model_input(input: &Array3<f32>, angles: &[f64], grid: &BeamformGrid) -> Result<Vec<IQImage>> {
    let (planes, nz, nx) = input.dim();
    if planes != 2 * angles.len() || (nz, nx) != grid.shape() {
        return Err(Error::Shape(format!(
            "input {:?} does not hold {} angles on a {:?} grid",
            input.dim(),
            angles.len(),
            grid.shape()
        )));
    }
    Ok(angles
        .iter()
        .enumerate()
        .map(|(k, &angle)| {
            let re = input.slice(s![2 * k, .., ..]);
            let im = input.slice(s![2 * k + 1, .., ..]);
            let mut pixels = re.mapv(|r| Complex32::new(r, 0.0));
            pixels.zip_mut_with(&im, |z, &i| z.im = i);
            IQImage {
                pixels,
                angle,
                grid: *grid,
            }
        })
        .collect())
}

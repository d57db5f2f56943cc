use ndarray::Array2;
use rand::Rng;

use super::GridSpec;
use crate::{Error, Result};

/// Gland texture: a smooth random field in `[-0.5, 0.5]` and its
/// foreground/background split.
#[derive(Debug, Clone, PartialEq)]
pub struct GlandField {
    pub field: Array2<f64>,
    /// `true` for foreground (value at or above the threshold).
    pub foreground: Array2<bool>,
    pub threshold: f64,
}

/// Truncated 1D Gaussian taps over `u ∈ [-size/2, size/2]`.
///
/// The 2D kernel `exp(-(u²+v²)/2σ²)/(2πσ²)` factorizes into two of these;
/// the constant prefactor drops out after rescaling.
fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as i64;
    (-half..=half)
        .map(|u| (-(u * u) as f64 / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Valid-mode 1D correlation along rows of a row-major `rows × cols` buffer.
fn filter_rows(src: &[f64], cols: usize, taps: &[f64], out_cols: usize) -> Vec<f64> {
    let rows = src.len() / cols;
    let mut out = vec![0.0; rows * out_cols];
    for r in 0..rows {
        let row = &src[r * cols..(r + 1) * cols];
        let dst = &mut out[r * out_cols..(r + 1) * out_cols];
        for (j, d) in dst.iter_mut().enumerate() {
            *d = row[j..j + taps.len()]
                .iter()
                .zip(taps)
                .map(|(a, b)| a * b)
                .sum();
        }
    }
    out
}

/// Valid-mode 1D correlation down the columns.
fn filter_cols(src: &[f64], cols: usize, taps: &[f64], out_rows: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_rows * cols];
    for i in 0..out_rows {
        let dst = &mut out[i * cols..(i + 1) * cols];
        for (k, &w) in taps.iter().enumerate() {
            let row = &src[(i + k) * cols..(i + k + 1) * cols];
            for (d, &s) in dst.iter_mut().zip(row) {
                *d += w * s;
            }
        }
    }
    out
}

/// Generates the gland texture.
///
/// A `U[0,1]` field of `(nz + y_f) × (nx + x_f)` samples is filtered with a
/// Gaussian of support `(x_f, y_f)` and width `sigma` (grid points), cropped
/// to the grid, centred to zero mean and mapped affinely onto `[-0.5, 0.5]`.
/// Pixels at or above the `threshold_quantile` quantile are foreground.
pub fn gen_grf_gland<R: Rng + ?Sized>(
    grid: &GridSpec,
    filter: (usize, usize),
    sigma: f64,
    threshold_quantile: f64,
    rng: &mut R,
) -> Result<GlandField> {
    let (xf, yf) = filter;
    if xf < 1 || yf < 1 {
        return Err(Error::param("grf filter", "filter size must be at least 1"));
    }
    if !(sigma > 0.0) {
        return Err(Error::param("grf sigma", "must be positive"));
    }
    if !(0.0..1.0).contains(&threshold_quantile) {
        return Err(Error::param("threshold quantile", "must lie in [0, 1)"));
    }
    let (nx, nz) = (grid.nx, grid.nz);
    let (cols, rows) = (nx + xf, nz + yf);
    let noise: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>()).collect();

    let tx = gaussian_taps(xf, sigma);
    let tz = gaussian_taps(yf, sigma);
    let valid_cols = cols + 1 - tx.len();
    let valid_rows = rows + 1 - tz.len();
    let horiz = filter_rows(&noise, cols, &tx, valid_cols);
    let full = filter_cols(&horiz, valid_cols, &tz, valid_rows);

    let mut field = Array2::from_shape_fn((nz, nx), |(iz, ix)| full[iz * valid_cols + ix]);
    let mean = field.mean().unwrap_or(0.0);
    field.mapv_inplace(|v| v - mean);
    let lo = field.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        field.mapv_inplace(|v| (v - lo) / span - 0.5);
    } else {
        field.fill(0.0);
    }

    let mut sorted: Vec<f64> = field.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let idx = (threshold_quantile * (sorted.len() - 1) as f64).floor() as usize;
    let threshold = sorted[idx];
    let foreground = field.mapv(|v| v >= threshold);
    Ok(GlandField {
        field,
        foreground,
        threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    fn small() -> GridSpec {
        GridSpec::with_size(64, 48).unwrap()
    }

    #[test]
    fn field_spans_exact_interval() {
        let mut rng = stream(3, Stream::GlandField);
        let g = gen_grf_gland(&small(), (40, 40), 12.0, 0.5, &mut rng).unwrap();
        let lo = g.field.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = g.field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(lo, -0.5);
        assert_eq!(hi, 0.5);
        assert_eq!(g.field.dim(), (48, 64));
    }

    #[test]
    fn zero_quantile_is_all_foreground() {
        let mut rng = stream(4, Stream::GlandField);
        let g = gen_grf_gland(&small(), (20, 20), 8.0, 0.0, &mut rng).unwrap();
        assert!(g.foreground.iter().all(|&f| f));
    }

    #[test]
    fn median_threshold_splits_about_half() {
        let mut rng = stream(5, Stream::GlandField);
        let g = gen_grf_gland(&small(), (20, 20), 8.0, 0.5, &mut rng).unwrap();
        let frac = g.foreground.iter().filter(|&&f| f).count() as f64 / g.field.len() as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn odd_filter_sizes_are_cropped() {
        let mut rng = stream(6, Stream::GlandField);
        let g = gen_grf_gland(&small(), (7, 9), 3.0, 0.4, &mut rng).unwrap();
        assert_eq!(g.field.dim(), (48, 64));
    }

    #[test]
    fn rejects_bad_parameters() {
        let mut rng = stream(6, Stream::GlandField);
        assert!(gen_grf_gland(&small(), (0, 4), 3.0, 0.4, &mut rng).is_err());
        assert!(gen_grf_gland(&small(), (4, 4), 0.0, 0.4, &mut rng).is_err());
        assert!(gen_grf_gland(&small(), (4, 4), 3.0, 1.0, &mut rng).is_err());
    }
}

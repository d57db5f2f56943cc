//! PNG encoding of B-modes and sound-speed maps.

use std::path::Path;

use anyhow::Context;
use image::{GrayImage, RgbImage};
use ndarray::{Array2, ArrayView2};

/// Speed range spanned by the colour map, m/s.
pub const SPEED_RANGE: (f64, f64) = (1400.0, 1700.0);

// viridis, sampled at nine points
const VIRIDIS: [[f64; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];

/// Log-compressed envelope mapped to 8 bits: 0 dB (the image maximum) is
/// white, `-dynamic_range_db` and below is black. An all-zero envelope
/// renders black.
pub fn bmode(envelope: ArrayView2<f64>, dynamic_range_db: f64) -> Array2<u8> {
    let peak = envelope.iter().fold(0.0f64, |m, &v| m.max(v));
    if !(peak > 0.0) {
        return Array2::zeros(envelope.dim());
    }
    envelope.mapv(|v| {
        let db = 20.0 * (v / peak).log10();
        let u = ((db + dynamic_range_db) / dynamic_range_db).clamp(0.0, 1.0);
        (u * 255.0).round() as u8
    })
}

pub fn colormap(speed: f64) -> [u8; 3] {
    let (lo, hi) = SPEED_RANGE;
    let u = if speed.is_finite() {
        ((speed - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        return [0, 0, 0];
    };
    let x = u * (VIRIDIS.len() - 1) as f64;
    let k = (x.floor() as usize).min(VIRIDIS.len() - 2);
    let f = x - k as f64;
    let mut rgb = [0u8; 3];
    for (c, out) in rgb.iter_mut().enumerate() {
        *out = (VIRIDIS[k][c] * (1.0 - f) + VIRIDIS[k + 1][c] * f).round() as u8;
    }
    rgb
}

pub fn save_gray(path: &Path, img: &Array2<u8>) -> anyhow::Result<()> {
    let (h, w) = img.dim();
    let buf = GrayImage::from_raw(w as u32, h as u32, img.iter().copied().collect()).expect("buffer matches size");
    buf.save(path).with_context(|| format!("writing {}", path.display()))
}

pub fn save_speed(path: &Path, speed: ArrayView2<f32>) -> anyhow::Result<()> {
    let (h, w) = speed.dim();
    let raw: Vec<u8> = speed.iter().flat_map(|&v| colormap(f64::from(v))).collect();
    let buf = RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer matches size");
    buf.save(path).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bmode_maps_peak_to_white_and_floor_to_black() {
        let env = Array2::from_shape_vec((1, 4), vec![1.0, 0.1, 1e-3, 1e-4]).unwrap();
        let img = bmode(env.view(), 60.0);
        assert_eq!(img[[0, 0]], 255);
        assert_eq!(img[[0, 1]], 170);
        assert_eq!(img[[0, 2]], 0);
        assert_eq!(img[[0, 3]], 0);
    }

    #[test]
    fn colormap_ends() {
        assert_eq!(colormap(1000.0), [68, 1, 84]);
        assert_eq!(colormap(2000.0), [253, 231, 37]);
        assert_eq!(colormap(f64::NAN), [0, 0, 0]);
    }
}

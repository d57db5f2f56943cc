use ndarray::Array2;

use super::filters::{kaiser, kaiser_beta, kaiser_half_len};
use crate::wavesim::ChannelData;
use crate::{Error, Result};

const ATTEN_DB: f64 = 60.0;
/// Transition band as a fraction of the lower of the two rates.
const TRANSITION: f64 = 0.1;

/// Band-limited resampling of every trace to `target_fs`.
///
/// Output sample `m` lies at `t_start + m / target_fs`; the number of
/// samples is the input duration times `target_fs`, rounded. The
/// anti-aliasing kernel is a Kaiser-windowed sinc with its −6 dB point at
/// 45% of the lower rate and 60 dB of stop-band rejection from half the
/// lower rate up.
pub fn resample(ch: &ChannelData, target_fs: f64) -> Result<ChannelData> {
    if !(target_fs > 2.0 * ch.band_edge()) {
        return Err(Error::param(
            "target_fs",
            format!(
                "{target_fs} Hz does not cover the band edge {} Hz",
                ch.band_edge()
            ),
        ));
    }
    let step = format!("resample:{}->{}", ch.fs, target_fs);
    if target_fs == ch.fs {
        return Ok(ch.with_samples(ch.samples.clone(), ch.fs, ch.t_start, step));
    }
    let n_in = ch.n_samples();
    let n_out = (n_in as f64 * target_fs / ch.fs).round() as usize;
    let taps = kernel(ch.fs, target_fs, n_in, n_out);
    let mut out = Array2::zeros((ch.n_elements(), n_out));
    for (src, mut dst) in ch.samples.outer_iter().zip(out.outer_iter_mut()) {
        let src = src.as_slice().expect("channel rows are contiguous");
        for (v, t) in dst.iter_mut().zip(&taps) {
            *v = t.weights.iter().zip(&src[t.first..]).map(|(w, x)| w * x).sum();
        }
    }
    Ok(ch.with_samples(out, target_fs, ch.t_start, step))
}

struct Taps {
    first: usize,
    weights: Vec<f64>,
}

/// Interpolation weights per output sample, shared by all traces.
fn kernel(fs_in: f64, fs_out: f64, n_in: usize, n_out: usize) -> Vec<Taps> {
    let low = fs_in.min(fs_out);
    let cutoff = (0.5 - TRANSITION / 2.0) * low / fs_in;
    let half = kaiser_half_len(ATTEN_DB, TRANSITION * low / fs_in) as f64 + 1.0;
    let beta = kaiser_beta(ATTEN_DB);
    (0..n_out)
        .map(|m| {
            let centre = m as f64 * fs_in / fs_out;
            let lo = (centre - half).ceil().max(0.0) as usize;
            let hi = ((centre + half).floor() as usize).min(n_in - 1);
            let mut weights: Vec<f64> = (lo..=hi)
                .map(|k| {
                    let x = k as f64 - centre;
                    2.0 * cutoff * sinc(2.0 * cutoff * x) * kaiser(x / half, beta)
                })
                .collect();
            // unit DC gain away from the record edges
            if lo > 0 && hi < n_in - 1 {
                let sum: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= sum);
            }
            Taps { first: lo, weights }
        })
        .collect()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

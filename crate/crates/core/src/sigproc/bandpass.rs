use rand::Rng;
use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, Stream};
use crate::wavesim::ChannelData;
use crate::{Error, Result};

/// Range of the randomized fractional bandwidth.
pub const BANDWIDTH_RANGE: (f64, f64) = (0.5, 0.9);

/// Gaussian transducer impulse-response model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandpassSpec {
    pub center_freq: f64,
    /// −6 dB full width over the centre frequency.
    pub fractional_bandwidth: f64,
}

impl Default for BandpassSpec {
    fn default() -> Self {
        BandpassSpec {
            center_freq: 5e6,
            fractional_bandwidth: 0.7,
        }
    }
}

impl BandpassSpec {
    /// Draws the fractional bandwidth uniformly from `range`, normally
    /// [`BANDWIDTH_RANGE`].
    pub fn draw(center_freq: f64, range: (f64, f64), seed: u64) -> Self {
        let (lo, hi) = range;
        BandpassSpec {
            center_freq,
            fractional_bandwidth: stream(seed, Stream::Bandpass).random_range(lo..=hi),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center_freq > 0.0) {
            return Err(Error::param("center_freq", "must be positive"));
        }
        if !(self.fractional_bandwidth > 0.0 && self.fractional_bandwidth < 2.0) {
            return Err(Error::param("fractional_bandwidth", "must lie in (0, 2)"));
        }
        Ok(())
    }

    fn sigma(&self) -> f64 {
        // amplitude 1/2 at ±half the −6 dB width
        0.5 * self.fractional_bandwidth * self.center_freq / (2.0 * std::f64::consts::LN_2).sqrt()
    }

    /// Magnitude response at `freq` (either sign). A pair of Gaussians at
    /// `±center_freq`, the mirror lobe subtracted so the gain at DC is zero.
    pub fn gain(&self, freq: f64) -> f64 {
        let s = self.sigma();
        let g = |d: f64| (-d * d / (2.0 * s * s)).exp();
        let f = freq.abs();
        g(f - self.center_freq) - g(f + self.center_freq)
    }
}

/// Zero-phase Gaussian band-pass of every trace.
///
/// Each trace is placed in the middle of a buffer at least twice its length
/// and mirrored into the padding on both sides, so that neither wrap-around
/// nor the record ends add spectral content.
pub fn bandpass(ch: &ChannelData, spec: &BandpassSpec) -> Result<ChannelData> {
    spec.validate()?;
    let n = ch.n_samples();
    let len = fft_len(2 * n.max(8));
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut buf = fwd.make_input_vec();
    let mut spectrum = fwd.make_output_vec();
    let response: Vec<f64> = (0..spectrum.len())
        .map(|k| spec.gain(k as f64 * ch.fs / len as f64) / len as f64)
        .collect();
    let mut out = ch.samples.clone();
    let offset = (len - n) / 2;
    for mut row in out.outer_iter_mut() {
        let row = row.as_slice_mut().expect("channel rows are contiguous");
        if row.iter().all(|&v| v == 0.0) {
            continue;
        }
        reflect_into(&mut buf, row, offset);
        fwd.process(&mut buf, &mut spectrum).expect("buffer sizes match the plan");
        for (s, h) in spectrum.iter_mut().zip(&response) {
            *s *= h;
        }
        spectrum[0].im = 0.0;
        if let Some(last) = spectrum.last_mut() {
            last.im = 0.0;
        }
        inv.process(&mut spectrum, &mut buf).expect("buffer sizes match the plan");
        row.copy_from_slice(&buf[offset..offset + n]);
    }
    let step = format!(
        "bandpass:{}Hz,{}",
        spec.center_freq, spec.fractional_bandwidth
    );
    let mut res = ch.with_samples(out, ch.fs, ch.t_start, step);
    res.fractional_bandwidth = spec.fractional_bandwidth;
    Ok(res)
}

/// Copies `x` to `buf[offset..]` and fills the rest of `buf` with its
/// mirror images about either end.
fn reflect_into(buf: &mut [f64], x: &[f64], offset: usize) {
    let n = x.len();
    let len = buf.len();
    for (i, b) in buf.iter_mut().enumerate() {
        // position folded into [0, 2n) then reflected
        let j = (i + 2 * n * len - offset) % (2 * n);
        *b = if j < n { x[j] } else { x[2 * n - 1 - j] };
    }
}

/// Smallest even 2·3·5-smooth length ≥ `n`.
fn fft_len(n: usize) -> usize {
    let smooth = |mut m: usize| {
        for p in [2, 3, 5] {
            while m % p == 0 {
                m /= p;
            }
        }
        m == 1
    };
    (n..).find(|&m| m % 2 == 0 && smooth(m)).expect("smooth numbers are unbounded")
}

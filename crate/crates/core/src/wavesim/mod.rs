//! Steered plane-wave pulse-echo simulation.
//!
//! A linear array fires a plane wave from its transmit aperture into a
//! phantom; the linear lossy acoustic equations are integrated on a
//! staggered grid with spectral spatial derivatives and a k-space time-step
//! correction, and the pressure is recorded at every array element.

mod channel;
mod fft2;
mod solver;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::sigproc::filters;
use crate::{Error, Result};

pub use channel::{arrival_time, load_channels, save_channels, ChannelData, Provenance};
pub use fft2::{wavenumbers, Fft2};
pub use solver::{attenuation_np_per_m, simulate_planewave, PaddedGrid, Simulation, SolverConfig, SolverPlan};

/// Steering angles of one dataset sample, degrees, ascending.
pub const DEFAULT_ANGLES: [f64; 3] = [-8.0, 0.0, 8.0];

/// Linear array model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransducerSpec {
    pub n_elements: usize,
    pub pitch: f64,
    pub kerf: f64,
    /// Active transmit elements.
    pub tx_aperture: Range<usize>,
    pub center_freq: f64,
    pub tone_burst_cycles: f64,
    /// Fractional bandwidth of the array, used for Nyquist checks.
    pub bandwidth: f64,
    /// Sampling rate of the recorded channel data, Hz.
    pub acquisition_fs: f64,
    /// Stop-band edge of the low-pass applied to the drive signal, Hz.
    #[serde(default = "default_tx_band_limit")]
    pub tx_band_limit: f64,
}

fn default_tx_band_limit() -> f64 {
    11.5e6
}

impl Default for TransducerSpec {
    fn default() -> Self {
        TransducerSpec {
            n_elements: 128,
            pitch: 293e-6,
            kerf: 0.0,
            tx_aperture: 32..96,
            center_freq: 5e6,
            tone_burst_cycles: 1.0,
            bandwidth: 0.6,
            acquisition_fs: 87.6e6,
            tx_band_limit: default_tx_band_limit(),
        }
    }
}

impl TransducerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_elements == 0 {
            return Err(Error::param("transducer", "needs at least one element"));
        }
        if !(self.pitch > 0.0) || !(0.0..self.pitch).contains(&self.kerf) {
            return Err(Error::param("transducer", "pitch must be positive and exceed the kerf"));
        }
        if self.tx_aperture.is_empty() {
            return Err(Error::param("tx_aperture", "empty transmit aperture"));
        }
        if self.tx_aperture.end > self.n_elements {
            return Err(Error::param("tx_aperture", "extends past the last element"));
        }
        if !(self.center_freq > 0.0) || !(self.tone_burst_cycles > 0.0) {
            return Err(Error::param("transducer", "frequency and cycles must be positive"));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth < 2.0) {
            return Err(Error::param("bandwidth", "must lie in (0, 2)"));
        }
        if !(self.tx_band_limit > self.center_freq + EMISSION_TRANSITION) {
            return Err(Error::param(
                "tx_band_limit",
                "must exceed the centre frequency by the filter transition width",
            ));
        }
        Ok(())
    }

    pub fn element_width(&self) -> f64 {
        self.pitch - self.kerf
    }

    /// Lateral centre of element `e` relative to the array centre.
    pub fn element_x(&self, e: usize) -> f64 {
        (e as f64 - (self.n_elements as f64 - 1.0) / 2.0) * self.pitch
    }

    pub fn aperture_width(&self) -> f64 {
        self.n_elements as f64 * self.pitch
    }

    /// Upper band edge used for sampling checks.
    pub fn band_edge(&self) -> f64 {
        self.center_freq * (1.0 + self.bandwidth)
    }
}

/// Per-element firing delays of the transmit aperture, seconds.
///
/// Element `e` of the aperture fires at `delays[e - tx_aperture.start]`.
pub fn transmit_delays(tx: &TransducerSpec, angle_deg: f64, c_ref: f64) -> Result<Vec<f64>> {
    tx.validate()?;
    if !(angle_deg.abs() < 45.0) {
        return Err(Error::param("angle", format!("{angle_deg}° is not in (-45°, 45°)")));
    }
    if !(c_ref > 0.0) {
        return Err(Error::param("c_ref", "must be positive"));
    }
    let s = angle_deg.to_radians().sin();
    let x_min = tx.element_x(tx.tx_aperture.start);
    let x_max = tx.element_x(tx.tx_aperture.end - 1);
    Ok(tx
        .tx_aperture
        .clone()
        .map(|e| {
            let x = tx.element_x(e);
            if angle_deg >= 0.0 {
                (x - x_min) * s / c_ref
            } else {
                (x_max - x) * -s / c_ref
            }
        })
        .collect())
}

/// One steered transmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneWaveTx {
    pub angle: f64,
    pub c_ref: f64,
    pub delays: Vec<f64>,
    /// End of the emitted pulse of the last firing element.
    pub t0: f64,
    pub tx_freq: f64,
}

impl PlaneWaveTx {
    pub fn new(tx: &TransducerSpec, angle: f64, c_ref: f64, tx_freq: f64) -> Result<Self> {
        if !(tx_freq > 0.0) {
            return Err(Error::param("tx_freq", "must be positive"));
        }
        let delays = transmit_delays(tx, angle, c_ref)?;
        let last = delays.iter().copied().fold(0.0, f64::max);
        let pulse = EmittedPulse::new(&ToneBurst::new(tx_freq, tx.tone_burst_cycles), tx.tx_band_limit);
        Ok(PlaneWaveTx {
            angle,
            c_ref,
            t0: last + pulse.duration(),
            delays,
            tx_freq,
        })
    }

    /// Transmission at the array centre frequency and 1540 m/s.
    pub fn standard(tx: &TransducerSpec, angle: f64) -> Result<Self> {
        Self::new(tx, angle, 1540.0, tx.center_freq)
    }

    pub fn burst(&self, tx: &TransducerSpec) -> ToneBurst {
        ToneBurst::new(self.tx_freq, tx.tone_burst_cycles)
    }

    pub fn pulse(&self, tx: &TransducerSpec) -> EmittedPulse {
        EmittedPulse::new(&self.burst(tx), tx.tx_band_limit)
    }
}

/// Transition width of the drive-signal low-pass, Hz.
pub const EMISSION_TRANSITION: f64 = 3e6;
const EMISSION_ATTEN_DB: f64 = 60.0;
const EMISSION_OVERSAMPLE: f64 = 256.0;

/// Drive signal of one element: the tone burst through a linear-phase
/// Kaiser low-pass, delayed so that it starts at zero.
///
/// The spectrum above `band_limit` is suppressed by 60 dB so that the drive
/// carries nothing the simulation grid cannot propagate.
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedPulse {
    rate: f64,
    samples: Vec<f64>,
}

impl EmittedPulse {
    pub fn new(burst: &ToneBurst, band_limit: f64) -> Self {
        let rate = EMISSION_OVERSAMPLE * burst.freq;
        let tw = EMISSION_TRANSITION / rate;
        let half = filters::kaiser_half_len(EMISSION_ATTEN_DB, tw);
        let taps = filters::lowpass_fir(
            (band_limit - EMISSION_TRANSITION / 2.0) / rate,
            half,
            filters::kaiser_beta(EMISSION_ATTEN_DB),
        );
        let b = burst.sample(rate);
        let mut samples = vec![0.0; b.len() + taps.len() - 1];
        for (i, &x) in b.iter().enumerate() {
            for (j, &h) in taps.iter().enumerate() {
                samples[i + j] += x * h;
            }
        }
        EmittedPulse { rate, samples }
    }

    pub fn duration(&self) -> f64 {
        (self.samples.len() - 1) as f64 / self.rate
    }

    /// Linearly interpolated value at `t`, zero outside the pulse.
    pub fn eval(&self, t: f64) -> f64 {
        let u = t * self.rate;
        if !(u >= 0.0) {
            return 0.0;
        }
        let k = u.floor() as usize;
        if k + 1 >= self.samples.len() {
            return 0.0;
        }
        let f = u - k as f64;
        self.samples[k] * (1.0 - f) + self.samples[k + 1] * f
    }

    /// Samples at `k / fs` covering the pulse.
    pub fn sample(&self, fs: f64) -> Vec<f64> {
        let n = (self.duration() * fs * (1.0 - 1e-12)).ceil() as usize + 1;
        (0..n).map(|k| self.eval(k as f64 / fs)).collect()
    }
}

/// Fraction of the burst covered by the raised-cosine tapers.
pub const BURST_TAPER: f64 = 0.6;

/// Sine burst under a tapered-cosine window, odd about its midpoint and
/// scaled to unit peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToneBurst {
    pub freq: f64,
    pub cycles: f64,
    norm: f64,
}

impl ToneBurst {
    pub fn new(freq: f64, cycles: f64) -> Self {
        let mut b = ToneBurst {
            freq,
            cycles,
            norm: 1.0,
        };
        let n = 20_000;
        let peak = (0..=n)
            .map(|k| b.eval(b.duration() * k as f64 / n as f64).abs())
            .fold(0.0, f64::max);
        b.norm = 1.0 / peak;
        b
    }

    pub fn duration(&self) -> f64 {
        self.cycles / self.freq
    }

    fn window(&self, t: f64) -> f64 {
        let d = self.duration();
        let edge = BURST_TAPER * d / 2.0;
        let u = t.min(d - t);
        if u >= edge {
            1.0
        } else {
            0.5 * (1.0 - (std::f64::consts::PI * u / edge).cos())
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if !(0.0..=self.duration()).contains(&t) {
            return 0.0;
        }
        self.norm * self.window(t) * (2.0 * std::f64::consts::PI * self.freq * t).sin()
    }

    /// RMS over the burst duration.
    pub fn rms(&self) -> f64 {
        let n = 20_000;
        let d = self.duration();
        let ss: f64 = (0..n)
            .map(|k| self.eval(d * (k as f64 + 0.5) / n as f64).powi(2))
            .sum();
        (ss / n as f64).sqrt()
    }

    /// Samples at `k / fs` covering the burst.
    pub fn sample(&self, fs: f64) -> Vec<f64> {
        let n = (self.duration() * fs * (1.0 - 1e-12)).ceil() as usize + 1;
        (0..n).map(|k| self.eval(k as f64 / fs)).collect()
    }
}

/// Sampled tone burst with its discrete peak scaled to exactly one.
pub fn tone_burst(tx_freq: f64, cycles: f64, fs: f64) -> Result<Vec<f64>> {
    if !(tx_freq > 0.0 && cycles > 0.0) {
        return Err(Error::param("tone burst", "frequency and cycles must be positive"));
    }
    if !(fs > 4.0 * tx_freq) {
        return Err(Error::param(
            "fs",
            format!("{fs} Hz undersamples a {tx_freq} Hz burst (need > 4x)"),
        ));
    }
    let mut s = ToneBurst::new(tx_freq, cycles).sample(fs);
    let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    s.iter_mut().for_each(|v| *v /= peak);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex64;

    #[test]
    fn zero_angle_has_no_delays() {
        let d = transmit_delays(&TransducerSpec::default(), 0.0, 1540.0).unwrap();
        assert_eq!(d.len(), 64);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eight_degree_span() {
        let d = transmit_delays(&TransducerSpec::default(), 8.0, 1540.0).unwrap();
        let expected = 63.0 * 293e-6 * 8f64.to_radians().sin() / 1540.0;
        let max = d.iter().copied().fold(0.0, f64::max);
        assert!((max - expected).abs() < 1e-15);
        assert!((max - 1.668e-6).abs() < 1e-9);
        assert_eq!(d[0], 0.0);
        assert!(d.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn negative_angles_mirror() {
        let tx = TransducerSpec::default();
        let pos = transmit_delays(&tx, 8.0, 1540.0).unwrap();
        let mut neg = transmit_delays(&tx, -8.0, 1540.0).unwrap();
        neg.reverse();
        assert_eq!(pos, neg);
    }

    #[test]
    fn delays_reject_bad_input() {
        let mut tx = TransducerSpec::default();
        assert!(transmit_delays(&tx, 45.0, 1540.0).is_err());
        tx.tx_aperture = 10..10;
        assert!(transmit_delays(&tx, 0.0, 1540.0).is_err());
    }

    #[test]
    fn t0_is_end_of_last_pulse() {
        let tx = TransducerSpec::default();
        let pw = PlaneWaveTx::standard(&tx, 0.0).unwrap();
        let d = pw.pulse(&tx).duration();
        assert!(d > 200e-9 && d < 2e-6, "{d}");
        assert!((pw.t0 - d).abs() < 1e-18);
        let pw = PlaneWaveTx::standard(&tx, -8.0).unwrap();
        let max = pw.delays.iter().copied().fold(0.0, f64::max);
        assert!((pw.t0 - max - d).abs() < 1e-18);
    }

    fn spectrum_db(s: &[f64], fs: f64, f: f64, reference: f64) -> f64 {
        let acc: Complex64 = s
            .iter()
            .enumerate()
            .map(|(n, &v)| Complex64::from_polar(v, -2.0 * std::f64::consts::PI * f * n as f64 / fs))
            .sum();
        20.0 * (acc.norm() / reference).log10()
    }

    #[test]
    fn emitted_pulse_is_band_limited() {
        let burst = ToneBurst::new(5e6, 1.0);
        let pulse = EmittedPulse::new(&burst, 11.5e6);
        let fs = 400e6;
        let raw = burst.sample(fs);
        let out = pulse.sample(fs);
        let peak = |s: &[f64]| (0..300).map(|k| spectrum_db(s, fs, 2e4 * k as f64 + 3e6, 1.0)).fold(f64::MIN, f64::max);
        let reference = 10f64.powf(peak(&raw) / 20.0);
        // pass band untouched
        for f in [3e6, 5e6, 7e6] {
            let d = spectrum_db(&out, fs, f, 1.0) - spectrum_db(&raw, fs, f, 1.0);
            assert!(d.abs() < 0.05, "{f}: {d}");
        }
        for k in 0..200 {
            let f = 11.6e6 + k as f64 * 0.1e6;
            assert!(spectrum_db(&out, fs, f, reference) < -60.0, "{f}");
        }
    }

    #[test]
    fn emitted_pulse_is_odd_about_its_centre() {
        let pulse = EmittedPulse::new(&ToneBurst::new(5e6, 1.0), 11.5e6);
        let d = pulse.duration();
        for k in 0..50 {
            let t = d * k as f64 / 100.0;
            assert!((pulse.eval(t) + pulse.eval(d - t)).abs() < 1e-9);
        }
        assert_eq!(pulse.eval(-1e-9), 0.0);
        assert_eq!(pulse.eval(d + 1e-9), 0.0);
    }

    #[test]
    fn burst_shape() {
        let fs = 87.6e6;
        let s = tone_burst(5e6, 1.0, fs).unwrap();
        let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(peak, 1.0);
        assert!((ToneBurst::new(5e6, 1.0).duration() - 200e-9).abs() < 1e-20);
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        assert!(mean.abs() < 1e-3);
        assert!(tone_burst(5e6, 1.0, 19e6).is_err());
    }

    #[test]
    fn burst_spectral_peak_near_carrier() {
        // zero-padded DFT of the sampled burst, scanned on a fine grid
        let fs = 87.6e6;
        for f0 in [4.5e6, 5e6, 5.5e6] {
            let s = tone_burst(f0, 1.0, fs).unwrap();
            let mut best = (0.0, 0.0);
            for k in 0..4000 {
                let f = 2e6 + k as f64 * 2e3;
                let acc: Complex64 = s
                    .iter()
                    .enumerate()
                    .map(|(n, &v)| Complex64::from_polar(v, -2.0 * std::f64::consts::PI * f * n as f64 / fs))
                    .sum();
                if acc.norm() > best.1 {
                    best = (f, acc.norm());
                }
            }
            assert!((best.0 / f0 - 1.0).abs() < 0.05, "{f0}: {}", best.0);
        }
    }
}

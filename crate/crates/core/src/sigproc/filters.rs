//! Kaiser-window FIR design.

use std::f64::consts::PI;

/// Zeroth-order modified Bessel function of the first kind (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Kaiser shape parameter for a stopband attenuation in dB.
pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

/// Kaiser window evaluated at `u ∈ [-1, 1]` (zero outside).
pub fn kaiser(u: f64, beta: f64) -> f64 {
    if u.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - u * u).sqrt()) / bessel_i0(beta)
}

/// Half length of a Kaiser FIR meeting `atten_db` across a transition band
/// of `transition` cycles per sample.
pub fn kaiser_half_len(atten_db: f64, transition: f64) -> usize {
    let n = (atten_db - 7.95) / (2.285 * 2.0 * PI * transition);
    (n / 2.0).ceil().max(1.0) as usize
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Linear-phase low-pass of length `2·half + 1` with its −6 dB point at
/// `cutoff` cycles per sample, normalized to unit DC gain.
pub fn lowpass_fir(cutoff: f64, half: usize, beta: f64) -> Vec<f64> {
    let h = half as f64;
    let mut taps: Vec<f64> = (0..=2 * half)
        .map(|k| {
            let m = k as f64 - h;
            2.0 * cutoff * sinc(2.0 * cutoff * m) * kaiser(m / (h + 1.0), beta)
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= dc);
    taps
}

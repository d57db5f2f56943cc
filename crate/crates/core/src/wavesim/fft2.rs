use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

/// Real 2D FFT on a row-major `nz × nx` buffer.
///
/// The half spectrum is stored transposed, as `(nx/2 + 1) × nz` rows of
/// `kz` samples, so that per-wavenumber multipliers index as `[kx][kz]`.
pub struct Fft2 {
    pub nx: usize,
    pub nz: usize,
    pub nxh: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd_z: Arc<dyn Fft<f64>>,
    inv_z: Arc<dyn Fft<f64>>,
    rows: Vec<Complex64>,
    real_row: Vec<f64>,
    scratch_r: Vec<Complex64>,
    scratch_z: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(nx: usize, nz: usize) -> Self {
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        let r2c = rp.plan_fft_forward(nx);
        let c2r = rp.plan_fft_inverse(nx);
        let fwd_z = cp.plan_fft_forward(nz);
        let inv_z = cp.plan_fft_inverse(nz);
        let nxh = nx / 2 + 1;
        let scratch_len = r2c
            .get_scratch_len()
            .max(c2r.get_scratch_len());
        let zs = fwd_z
            .get_inplace_scratch_len()
            .max(inv_z.get_inplace_scratch_len());
        Fft2 {
            nx,
            nz,
            nxh,
            r2c,
            c2r,
            fwd_z,
            inv_z,
            rows: vec![Complex64::default(); nxh * nz],
            real_row: vec![0.0; nx],
            scratch_r: vec![Complex64::default(); scratch_len],
            scratch_z: vec![Complex64::default(); zs],
        }
    }

    pub fn spectrum_len(&self) -> usize {
        self.nxh * self.nz
    }

    /// Forward transform of `input` (`nz × nx`) into `out` (`nxh × nz`).
    pub fn forward(&mut self, input: &[f64], out: &mut [Complex64]) {
        let (nx, nz, nxh) = (self.nx, self.nz, self.nxh);
        for iz in 0..nz {
            self.real_row.copy_from_slice(&input[iz * nx..(iz + 1) * nx]);
            self.r2c
                .process_with_scratch(
                    &mut self.real_row,
                    &mut self.rows[iz * nxh..(iz + 1) * nxh],
                    &mut self.scratch_r,
                )
                .expect("row lengths match the plan");
        }
        transpose::transpose(&self.rows, out, nxh, nz);
        self.fwd_z.process_with_scratch(out, &mut self.scratch_z);
    }

    /// Inverse transform, normalized. `spec` is overwritten.
    pub fn inverse(&mut self, spec: &mut [Complex64], out: &mut [f64]) {
        self.inverse_unscaled(spec, out);
        let scale = 1.0 / (self.nx * self.nz) as f64;
        out.iter_mut().for_each(|v| *v *= scale);
    }

    /// Inverse transform without the `1 / (nx·nz)` factor.
    pub fn inverse_unscaled(&mut self, spec: &mut [Complex64], out: &mut [f64]) {
        let (nx, nz, nxh) = (self.nx, self.nz, self.nxh);
        self.inv_z.process_with_scratch(spec, &mut self.scratch_z);
        transpose::transpose(spec, &mut self.rows, nz, nxh);
        for iz in 0..nz {
            let row = &mut self.rows[iz * nxh..(iz + 1) * nxh];
            row[0].im = 0.0;
            if nx % 2 == 0 {
                row[nxh - 1].im = 0.0;
            }
            let dst = &mut out[iz * nx..(iz + 1) * nx];
            self.c2r
                .process_with_scratch(row, dst, &mut self.scratch_r)
                .expect("imaginary parts of real bins were cleared");
        }
    }
}

/// Angular wavenumbers of an `n`-point periodic axis with spacing `d`.
pub fn wavenumbers(n: usize, d: f64) -> Vec<f64> {
    let dk = 2.0 * std::f64::consts::PI / (n as f64 * d);
    (0..n)
        .map(|m| {
            let m = if m <= n / 2 { m as i64 } else { m as i64 - n as i64 };
            m as f64 * dk
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let (nx, nz) = (12, 10);
        let input: Vec<f64> = (0..nx * nz).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut f = Fft2::new(nx, nz);
        let mut spec = vec![Complex64::default(); f.spectrum_len()];
        let mut out = vec![0.0; nx * nz];
        f.forward(&input, &mut spec);
        f.inverse(&mut spec, &mut out);
        for (a, b) in input.iter().zip(&out) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_direct_dft() {
        let (nx, nz) = (6, 4);
        let input: Vec<f64> = (0..nx * nz).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut f = Fft2::new(nx, nz);
        let mut spec = vec![Complex64::default(); f.spectrum_len()];
        f.forward(&input, &mut spec);
        for kx in 0..f.nxh {
            for kz in 0..nz {
                let mut acc = Complex64::default();
                for iz in 0..nz {
                    for ix in 0..nx {
                        let ph = -2.0 * std::f64::consts::PI
                            * (kx as f64 * ix as f64 / nx as f64 + kz as f64 * iz as f64 / nz as f64);
                        acc += Complex64::from_polar(input[iz * nx + ix], ph);
                    }
                }
                assert!((acc - spec[kx * nz + kz]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn wavenumber_ordering() {
        let k = wavenumbers(4, 1.0);
        let dk = std::f64::consts::PI / 2.0;
        assert_eq!(k, vec![0.0, dk, 2.0 * dk, -dk]);
    }
}

use ndarray::Array2;
use rand::Rng;

use super::GridSpec;
use crate::{Error, Result};

/// Sparse random scatterers: Bernoulli positions with uniform amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScattererField {
    pub occupancy: Array2<bool>,
    /// Amplitude in `[-0.5, 0.5]`, zero where unoccupied.
    pub amplitude: Array2<f64>,
    /// Fraction of pixels that carry a scatterer.
    pub rho_s: f64,
    /// Scatterers per imaging resolution cell.
    pub n_s: f64,
}

impl ScattererField {
    pub fn occupied(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Removes scatterers where `mask` is set.
    pub fn clear_where(&mut self, mask: &Array2<bool>) {
        ndarray::Zip::from(&mut self.occupancy)
            .and(&mut self.amplitude)
            .and(mask)
            .for_each(|o, a, &m| {
                if m {
                    *o = false;
                    *a = 0.0;
                }
            });
    }
}

/// Discretized scatterer density of a 2D grid: `n_s / λ² · dx · dz`.
pub fn scatterer_density(grid: &GridSpec, n_s: f64, wavelength: f64) -> Result<f64> {
    if !(n_s >= 0.0) || !n_s.is_finite() {
        return Err(Error::param("n_s", "must be a non-negative number"));
    }
    if !(wavelength > 0.0) {
        return Err(Error::param("wavelength", "must be positive"));
    }
    let rho_s = n_s / (wavelength * wavelength) * grid.dx * grid.dz;
    if rho_s > 1.0 {
        return Err(Error::param(
            "n_s",
            format!("scatterer density {rho_s:.3} exceeds one scatterer per pixel"),
        ));
    }
    Ok(rho_s)
}

/// Samples a scatterer field. Each pixel draws an amplitude from
/// `U[-0.5, 0.5]` and an occupancy from `Bernoulli(rho_s)`; the amplitude is
/// kept only where occupied.
pub fn gen_scatterers<R: Rng + ?Sized>(
    grid: &GridSpec,
    n_s: f64,
    wavelength: f64,
    rng: &mut R,
) -> Result<ScattererField> {
    let rho_s = scatterer_density(grid, n_s, wavelength)?;
    let mut occupancy = Array2::from_elem(grid.shape(), false);
    let mut amplitude = Array2::zeros(grid.shape());
    for (o, a) in occupancy.iter_mut().zip(amplitude.iter_mut()) {
        let u = rng.random::<f64>() - 0.5;
        let hit = rng.random::<f64>() < rho_s;
        if hit {
            *o = true;
            *a = u;
        }
    }
    Ok(ScattererField {
        occupancy,
        amplitude,
        rho_s,
        n_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::DEFAULT_SPACING;
    use crate::rng::{stream, Stream};

    #[test]
    fn density_from_default_constants() {
        let grid = GridSpec::desk();
        let rho = scatterer_density(&grid, 4.0, 308e-6).unwrap();
        let expected = 4.0 * (DEFAULT_SPACING / 308e-6).powi(2);
        assert!((rho - expected).abs() < 1e-15);
        assert!((rho - 0.1448).abs() < 5e-4, "{rho}");
    }

    #[test]
    fn density_above_one_is_rejected() {
        let grid = GridSpec::desk();
        assert!(scatterer_density(&grid, 40.0, 58.594e-6).is_err());
    }

    #[test]
    fn zero_density_is_empty() {
        let grid = GridSpec::with_size(64, 64).unwrap();
        let mut rng = stream(1, Stream::Scatterers);
        let f = gen_scatterers(&grid, 0.0, 308e-6, &mut rng).unwrap();
        assert_eq!(f.occupied(), 0);
        assert!(f.amplitude.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn occupancy_concentrates_on_density() {
        // one million pixels at rho_s = 0.1
        let grid = GridSpec::new(1000, 1000, 1e-4, 1e-4).unwrap();
        let wavelength = (1e-8f64 / 0.1).sqrt();
        let mut rng = stream(2, Stream::Scatterers);
        let f = gen_scatterers(&grid, 1.0, wavelength, &mut rng).unwrap();
        assert!((f.rho_s - 0.1).abs() < 1e-12);
        let n = grid.len() as f64;
        let frac = f.occupied() as f64 / n;
        let sigma = (0.1 * 0.9 / n).sqrt();
        assert!((frac - 0.1).abs() <= 3.0 * sigma, "{frac}");
        for (&o, &a) in f.occupancy.iter().zip(f.amplitude.iter()) {
            assert!((-0.5..=0.5).contains(&a));
            if !o {
                assert_eq!(a, 0.0);
            }
        }
    }
}

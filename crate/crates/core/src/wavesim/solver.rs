use log::{debug, warn};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChannelData, EmittedPulse, Fft2, PlaneWaveTx, Provenance, TransducerSpec};
use crate::phantom::Phantom;
use crate::{Error, Result};

/// Time-stepping and boundary settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Time step; defaults to the transducer sampling period.
    pub dt: Option<f64>,
    /// Number of steps; defaults to a round trip across the grid diagonal.
    pub n_steps: Option<usize>,
    /// Minimum PML thickness in grid points. The padded grid may use up to
    /// 12 more points per side to reach FFT-friendly sizes.
    pub pml_thickness: usize,
    /// PML absorption, nepers per grid point at the outer edge.
    pub pml_alpha: f64,
    pub cfl: f64,
    /// Frequency-independent absorption matched to the power law at the
    /// centre frequency.
    pub absorption: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: None,
            n_steps: None,
            pml_thickness: 16,
            pml_alpha: 2.0,
            cfl: 0.5,
            absorption: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pml_thickness < 8 {
            return Err(Error::param("pml_thickness", "must be at least 8 grid points"));
        }
        if !(self.cfl > 0.0 && self.cfl <= std::f64::consts::FRAC_1_SQRT_2) {
            return Err(Error::param("cfl", "must lie in (0, 1/sqrt(2)]"));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::param("dt", "must be positive"));
            }
        }
        if self.n_steps == Some(0) {
            return Err(Error::param("n_steps", "must be positive"));
        }
        if !(self.pml_alpha >= 0.0) {
            return Err(Error::param("pml_alpha", "must be non-negative"));
        }
        Ok(())
    }

    /// Resolves time step, step count and padding for one transmission.
    pub fn plan(&self, phantom: &Phantom, tx: &TransducerSpec, pw: &PlaneWaveTx) -> Result<SolverPlan> {
        self.validate()?;
        tx.validate()?;
        let grid = &phantom.grid;
        let (c_min, c_max) = (phantom.c_min(), phantom.c_max());
        if !(c_min > 0.0 && c_max.is_finite()) {
            return Err(Error::param("sound speed", "must be positive and finite"));
        }
        let limit = self.cfl * grid.dx.min(grid.dz) / c_max;
        let dt = match self.dt {
            Some(dt) => dt,
            None => (1.0 / tx.acquisition_fs).min(limit),
        };
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl {
                dt,
                limit,
                cfl: self.cfl,
                c_max,
            });
        }
        let cutoff = c_min / (2.0 * grid.dx.max(grid.dz));
        if tx.tx_band_limit > cutoff {
            warn!(
                "drive band limit {:.3e} Hz exceeds the grid cutoff {cutoff:.3e} Hz",
                tx.tx_band_limit
            );
        }
        let n_steps = match self.n_steps {
            Some(n) => n,
            None => {
                let (w, h) = (grid.width(), grid.height());
                let t_end = pw.t0 + (h + h.hypot(w)) / c_min + pw.pulse(tx).duration();
                (t_end / dt).ceil() as usize
            }
        };
        Ok(SolverPlan {
            padded: PaddedGrid::new(grid.nx, grid.nz, self.pml_thickness),
            dt,
            n_steps,
            c_ref: c_max,
        })
    }
}

/// Phantom grid surrounded by PML on all four sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaddedGrid {
    pub nx: usize,
    pub nz: usize,
    pub pml_x: usize,
    pub pml_z: usize,
}

fn is_7_smooth(mut n: usize) -> bool {
    for p in [2, 3, 5, 7] {
        while n % p == 0 {
            n /= p;
        }
    }
    n == 1
}

fn pad_for(n: usize, min_pml: usize) -> usize {
    let range = min_pml..=min_pml + 12;
    range
        .clone()
        .find(|&p| (n + 2 * p) % 2 == 0 && is_7_smooth(n + 2 * p))
        .or_else(|| range.clone().find(|&p| is_7_smooth(n + 2 * p)))
        .unwrap_or(min_pml)
}

impl PaddedGrid {
    pub fn new(nx: usize, nz: usize, min_pml: usize) -> Self {
        let (px, pz) = (pad_for(nx, min_pml), pad_for(nz, min_pml));
        PaddedGrid {
            nx: nx + 2 * px,
            nz: nz + 2 * pz,
            pml_x: px,
            pml_z: pz,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverPlan {
    pub padded: PaddedGrid,
    pub dt: f64,
    pub n_steps: usize,
    /// Reference speed of the k-space correction and the PML.
    pub c_ref: f64,
}

/// Attenuation in nepers per metre at `freq` for `coeff` dB/(MHz^y·cm).
pub fn attenuation_np_per_m(coeff: f64, power: f64, freq: f64) -> f64 {
    let db_per_m = coeff * (freq / 1e6).powf(power) * 100.0;
    db_per_m * std::f64::consts::LN_10 / 20.0
}

/// PML damping per unit time at grid position `pos` (node index, possibly
/// half-integer) on an axis of `n` points with `pml` absorbing points at
/// each end.
fn pml_sigma(pos: f64, n: usize, pml: usize, alpha: f64, c_ref: f64, d: f64) -> f64 {
    let inner_lo = pml as f64;
    let inner_hi = (n - 1 - pml) as f64;
    let depth = if pos < inner_lo {
        inner_lo - pos
    } else if pos > inner_hi {
        pos - inner_hi
    } else {
        return 0.0;
    };
    alpha * (c_ref / d) * (depth / pml as f64).powi(4)
}

struct Tap {
    index: usize,
    weight: f64,
}

struct SourceNode {
    index: usize,
    /// `dt · 2c / dz · weight`
    gain: f64,
    delay: f64,
}

/// Pulse-echo simulation of one plane-wave transmission.
pub struct Simulation {
    plan: SolverPlan,
    fft: Fft2,
    ux: Vec<f64>,
    uz: Vec<f64>,
    px: Vec<f64>,
    pz: Vec<f64>,
    p: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    spec: Vec<Complex64>,
    tmp: Vec<Complex64>,
    bx: Vec<f64>,
    bz: Vec<f64>,
    kdt: Vec<f64>,
    decay: Vec<f64>,
    decay_x: Vec<f64>,
    decay_z: Vec<f64>,
    ax_n: Vec<f64>,
    ax_s: Vec<f64>,
    az_n: Vec<f64>,
    az_s: Vec<f64>,
    op_x_fwd: Vec<Complex64>,
    op_x_bwd: Vec<Complex64>,
    op_z_fwd: Vec<Complex64>,
    op_z_bwd: Vec<Complex64>,
    sources: Vec<SourceNode>,
    receivers: Vec<Option<Vec<Tap>>>,
    pulse: EmittedPulse,
    step: usize,
    phantom_shape: (usize, usize),
}

impl Simulation {
    pub fn new(phantom: &Phantom, tx: &TransducerSpec, pw: &PlaneWaveTx, cfg: &SolverConfig) -> Result<Self> {
        let plan = cfg.plan(phantom, tx, pw)?;
        if pw.delays.len() != tx.tx_aperture.len() {
            return Err(Error::Shape(format!(
                "{} delays for a {}-element aperture",
                pw.delays.len(),
                tx.tx_aperture.len()
            )));
        }
        let grid = &phantom.grid;
        let pg = plan.padded;
        let (nx, nz) = (pg.nx, pg.nz);
        let n = pg.len();
        let dt = plan.dt;

        // material maps extended into the PML by edge replication
        let clamp = |i: usize, pml: usize, len: usize| i.saturating_sub(pml).min(len - 1);
        let mut c = vec![0.0; n];
        let mut rho = vec![0.0; n];
        for iz in 0..nz {
            let sz = clamp(iz, pg.pml_z, grid.nz);
            for ix in 0..nx {
                let sx = clamp(ix, pg.pml_x, grid.nx);
                c[iz * nx + ix] = phantom.props.c[[sz, sx]];
                rho[iz * nx + ix] = phantom.props.rho[[sz, sx]];
            }
        }
        if let Some(bad) = rho.iter().find(|&&r| !(r > 0.0)) {
            return Err(Error::param("density", format!("non-positive value {bad}")));
        }
        let mut bx = vec![0.0; n];
        let mut bz = vec![0.0; n];
        for iz in 0..nz {
            for ix in 0..nx {
                let i = iz * nx + ix;
                let right = iz * nx + (ix + 1) % nx;
                let below = ((iz + 1) % nz) * nx + ix;
                bx[i] = dt / (0.5 * (rho[i] + rho[right]));
                bz[i] = dt / (0.5 * (rho[i] + rho[below]));
            }
        }
        let kdt: Vec<f64> = c.iter().zip(&rho).map(|(c, r)| r * c * c * dt).collect();
        let alpha = if cfg.absorption {
            attenuation_np_per_m(phantom.props.alpha_coeff, phantom.props.alpha_power, tx.center_freq)
        } else {
            0.0
        };
        // equal loss on pressure and velocity keeps the decay distortion-free
        let decay: Vec<f64> = c.iter().map(|c| (-alpha * c * dt).exp()).collect();
        let mut decay_x = vec![0.0; n];
        let mut decay_z = vec![0.0; n];
        for iz in 0..nz {
            for ix in 0..nx {
                let i = iz * nx + ix;
                let right = iz * nx + (ix + 1) % nx;
                let below = ((iz + 1) % nz) * nx + ix;
                decay_x[i] = (-alpha * 0.5 * (c[i] + c[right]) * dt).exp();
                decay_z[i] = (-alpha * 0.5 * (c[i] + c[below]) * dt).exp();
            }
        }

        let damp = |pos: f64, len: usize, pml: usize, d: f64| {
            (-0.5 * dt * pml_sigma(pos, len, pml, cfg.pml_alpha, plan.c_ref, d)).exp()
        };
        let ax_n = (0..nx).map(|i| damp(i as f64, nx, pg.pml_x, grid.dx)).collect();
        let ax_s = (0..nx).map(|i| damp(i as f64 + 0.5, nx, pg.pml_x, grid.dx)).collect();
        let az_n = (0..nz).map(|i| damp(i as f64, nz, pg.pml_z, grid.dz)).collect();
        let az_s = (0..nz).map(|i| damp(i as f64 + 0.5, nz, pg.pml_z, grid.dz)).collect();

        let fft = Fft2::new(nx, nz);
        let nxh = fft.nxh;
        let kx = super::wavenumbers(nx, grid.dx);
        let kz = super::wavenumbers(nz, grid.dz);
        let shift = |k: f64, d: f64, sign: f64, nyquist: bool| {
            if nyquist {
                Complex64::default()
            } else {
                Complex64::new(0.0, k) * Complex64::from_polar(1.0, sign * k * d / 2.0)
            }
        };
        let nyq_x = |m: usize| nx % 2 == 0 && m == nx / 2;
        let nyq_z = |m: usize| nz % 2 == 0 && m == nz / 2;
        let mut op_x_fwd = vec![Complex64::default(); nxh * nz];
        let mut op_x_bwd = op_x_fwd.clone();
        let mut op_z_fwd = op_x_fwd.clone();
        let mut op_z_bwd = op_x_fwd.clone();
        for mx in 0..nxh {
            let dxf = shift(kx[mx], grid.dx, 1.0, nyq_x(mx));
            let dxb = shift(kx[mx], grid.dx, -1.0, nyq_x(mx));
            for mz in 0..nz {
                let k = kx[mx].hypot(kz[mz]);
                let arg = 0.5 * plan.c_ref * k * dt;
                // inverse FFT normalization folded in
                let kappa = if arg == 0.0 { 1.0 } else { arg.sin() / arg } / n as f64;
                let i = mx * nz + mz;
                op_x_fwd[i] = dxf * kappa;
                op_x_bwd[i] = dxb * kappa;
                op_z_fwd[i] = shift(kz[mz], grid.dz, 1.0, nyq_z(mz)) * kappa;
                op_z_bwd[i] = shift(kz[mz], grid.dz, -1.0, nyq_z(mz)) * kappa;
            }
        }

        // element geometry on the padded lateral axis
        let half = 0.5 * tx.element_width();
        let tol = 1e-9 * grid.dx;
        let col_x = |j: usize| {
            grid.origin + (j as f64 - pg.pml_x as f64 - (grid.nx as f64 - 1.0) / 2.0) * grid.dx
        };
        let nodes_of = |e: usize| -> Vec<(usize, f64)> {
            let xe = tx.element_x(e);
            (0..nx)
                .filter_map(|j| {
                    let off = (col_x(j) - xe).abs();
                    if off < half - tol {
                        Some((j, 1.0))
                    } else if off <= half + tol {
                        Some((j, 0.5))
                    } else {
                        None
                    }
                })
                .collect()
        };
        let row = pg.pml_z;
        let mut sources = Vec::new();
        for (k, e) in tx.tx_aperture.clone().enumerate() {
            for (j, w) in nodes_of(e) {
                let i = row * nx + j;
                sources.push(SourceNode {
                    index: i,
                    gain: dt * 2.0 * c[i] / grid.dz * w,
                    delay: pw.delays[k],
                });
            }
        }
        if sources.is_empty() {
            return Err(Error::param("tx_aperture", "no transmit element overlaps the grid"));
        }
        let interior = pg.pml_x..pg.pml_x + grid.nx;
        let receivers: Vec<Option<Vec<Tap>>> = (0..tx.n_elements)
            .map(|e| {
                let nodes = nodes_of(e);
                if nodes.is_empty() || !nodes.iter().all(|(j, _)| interior.contains(j)) {
                    return None;
                }
                let total: f64 = nodes.iter().map(|(_, w)| w).sum();
                Some(
                    nodes
                        .into_iter()
                        .map(|(j, w)| Tap {
                            index: row * nx + j,
                            weight: w / total,
                        })
                        .collect(),
                )
            })
            .collect();
        let n_active = receivers.iter().filter(|r| r.is_some()).count();
        if n_active == 0 {
            return Err(Error::param("grid", "no receive element lies over the phantom"));
        }
        if n_active < tx.n_elements {
            debug!("{n_active} of {} elements lie over the phantom", tx.n_elements);
        }

        Ok(Simulation {
            plan,
            ux: vec![0.0; n],
            uz: vec![0.0; n],
            px: vec![0.0; n],
            pz: vec![0.0; n],
            p: vec![0.0; n],
            a: vec![0.0; n],
            b: vec![0.0; n],
            spec: vec![Complex64::default(); fft.spectrum_len()],
            tmp: vec![Complex64::default(); fft.spectrum_len()],
            fft,
            bx,
            bz,
            kdt,
            decay,
            decay_x,
            decay_z,
            ax_n,
            ax_s,
            az_n,
            az_s,
            op_x_fwd,
            op_x_bwd,
            op_z_fwd,
            op_z_bwd,
            sources,
            receivers,
            pulse: pw.pulse(tx),
            step: 0,
            phantom_shape: grid.shape(),
        })
    }

    pub fn plan(&self) -> &SolverPlan {
        &self.plan
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.plan.dt
    }

    /// Advances pressure from step `n` to `n + 1`.
    pub fn advance(&mut self) {
        let nx = self.plan.padded.nx;
        // grad p, reusing one forward transform
        self.fft.forward(&self.p, &mut self.spec);
        spectral(&mut self.fft, &self.spec, &self.op_x_fwd, &mut self.tmp, &mut self.a);
        spectral(&mut self.fft, &self.spec, &self.op_z_fwd, &mut self.tmp, &mut self.b);
        let rows = self
            .ux
            .chunks_exact_mut(nx)
            .zip(self.uz.chunks_exact_mut(nx))
            .zip(self.a.chunks_exact(nx).zip(self.b.chunks_exact(nx)))
            .zip(self.bx.chunks_exact(nx).zip(self.bz.chunks_exact(nx)))
            .zip(self.decay_x.chunks_exact(nx).zip(self.decay_z.chunks_exact(nx)))
            .zip(&self.az_s);
        for (((((ux, uz), (a, b)), (bx, bz)), (dx, dz)), &az) in rows {
            for i in 0..nx {
                let ax = self.ax_s[i];
                ux[i] = ax * (ax * ux[i] - bx[i] * a[i]) * dx[i];
                uz[i] = az * (az * uz[i] - bz[i] * b[i]) * dz[i];
            }
        }
        self.fft.forward(&self.ux, &mut self.spec);
        spectral(&mut self.fft, &self.spec, &self.op_x_bwd, &mut self.tmp, &mut self.a);
        self.fft.forward(&self.uz, &mut self.spec);
        spectral(&mut self.fft, &self.spec, &self.op_z_bwd, &mut self.tmp, &mut self.b);
        let rows = self
            .px
            .chunks_exact_mut(nx)
            .zip(self.pz.chunks_exact_mut(nx))
            .zip(self.p.chunks_exact_mut(nx))
            .zip(self.a.chunks_exact(nx).zip(self.b.chunks_exact(nx)))
            .zip(self.kdt.chunks_exact(nx).zip(self.decay.chunks_exact(nx)))
            .zip(&self.az_n);
        for (((((px, pz), p), (a, b)), (kdt, decay)), &az) in rows {
            for i in 0..nx {
                let (ax, k, d) = (self.ax_n[i], kdt[i], decay[i]);
                px[i] = ax * (ax * px[i] - k * a[i]) * d;
                pz[i] = az * (az * pz[i] - k * b[i]) * d;
                p[i] = px[i] + pz[i];
            }
        }
        let t = (self.step as f64 + 0.5) * self.plan.dt;
        for s in &self.sources {
            let v = s.gain * self.pulse.eval(t - s.delay);
            self.pz[s.index] += v;
            self.p[s.index] += v;
        }
        self.step += 1;
    }

    /// Pressure at element `e` (weighted mean over its nodes), if recorded.
    pub fn element_pressure(&self, e: usize) -> Option<f64> {
        self.receivers[e]
            .as_ref()
            .map(|taps| taps.iter().map(|t| t.weight * self.p[t.index]).sum())
    }

    /// Interior pressure field, `nz × nx` of the phantom grid.
    pub fn pressure(&self) -> Array2<f64> {
        let pg = self.plan.padded;
        let (nz, nx) = self.phantom_shape;
        Array2::from_shape_fn((nz, nx), |(iz, ix)| {
            self.p[(iz + pg.pml_z) * pg.nx + ix + pg.pml_x]
        })
    }

    /// Pressure on the whole padded grid.
    pub fn padded_pressure(&self) -> Array2<f64> {
        let pg = self.plan.padded;
        Array2::from_shape_vec((pg.nz, pg.nx), self.p.clone()).expect("padded buffer shape")
    }

    fn is_finite(&self) -> bool {
        self.px.iter().chain(&self.pz).all(|v| v.is_finite())
    }

    /// Runs all planned steps and returns the element traces.
    pub fn run(mut self) -> Result<Array2<f64>> {
        let n_el = self.receivers.len();
        let n_samples = self.plan.n_steps + 1;
        let mut traces = Array2::zeros((n_el, n_samples));
        for k in 1..n_samples {
            self.advance();
            for e in 0..n_el {
                if let Some(v) = self.element_pressure(e) {
                    traces[[e, k]] = v;
                }
            }
            if k % 100 == 0 || k + 1 == n_samples {
                if !self.is_finite() {
                    return Err(Error::Unstable { step: k });
                }
            }
        }
        Ok(traces)
    }

    pub fn active(&self) -> Vec<bool> {
        self.receivers.iter().map(|r| r.is_some()).collect()
    }
}

/// Applies a spectral multiplier to `spec` and transforms back into `dst`.
fn spectral(fft: &mut Fft2, spec: &[Complex64], op: &[Complex64], tmp: &mut [Complex64], dst: &mut [f64]) {
    for ((t, s), o) in tmp.iter_mut().zip(spec).zip(op) {
        *t = s * o;
    }
    fft.inverse_unscaled(tmp, dst);
}

fn config_hash(tx: &TransducerSpec, pw: &PlaneWaveTx, cfg: &SolverConfig, plan: &SolverPlan) -> String {
    let json = serde_json::to_vec(&(tx, pw, cfg, plan)).expect("plain data serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

/// Simulates one steered plane-wave transmission through `phantom`.
///
/// Sources and receivers sit on the first phantom row. Elements whose
/// footprint is not fully over the phantom are left inactive (zero traces);
/// transmit elements also drive PML columns under their footprint.
pub fn simulate_planewave(
    phantom: &Phantom,
    tx: &TransducerSpec,
    pw: &PlaneWaveTx,
    cfg: &SolverConfig,
) -> Result<ChannelData> {
    let sim = Simulation::new(phantom, tx, pw, cfg)?;
    let plan = *sim.plan();
    let active = sim.active();
    debug!(
        "simulating {}° on {}x{} padded grid, {} steps of {:.3e} s",
        pw.angle, plan.padded.nx, plan.padded.nz, plan.n_steps, plan.dt
    );
    let samples = sim.run()?;
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 10.0 {
        warn!("received pressure peaks at {peak:.2}x the source amplitude");
    }
    let burst = pw.burst(tx);
    let ch = ChannelData {
        samples,
        fs: 1.0 / plan.dt,
        t0: pw.t0,
        t_start: 0.0,
        angle: pw.angle,
        c_ref: pw.c_ref,
        pulse_duration: pw.pulse(tx).duration(),
        tx_freq: pw.tx_freq,
        center_freq: tx.center_freq,
        fractional_bandwidth: tx.bandwidth,
        pulse_rms: burst.rms(),
        active,
        provenance: Provenance {
            phantom_seed: phantom.seed,
            config_hash: config_hash(tx, pw, cfg, &plan),
            processing: Vec::new(),
        },
    };
    Ok(ch)
}

use std::f64::consts::PI;

use breastsos::phantom::*;
use breastsos::rng::{stream, Stream};
use breastsos::sigproc::*;
use breastsos::wavesim::*;
use ndarray::{Array2, Array3};
use num_complex::{Complex32, Complex64};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn channels(samples: Array2<f64>, fs: f64) -> ChannelData {
    let n = samples.nrows();
    ChannelData {
        samples,
        fs,
        t0: 0.0,
        t_start: 0.0,
        angle: 0.0,
        c_ref: 1540.0,
        pulse_duration: 1e-6,
        tx_freq: 5e6,
        center_freq: 5e6,
        fractional_bandwidth: 0.6,
        pulse_rms: 0.5,
        active: vec![true; n],
        provenance: Provenance {
            phantom_seed: 0,
            config_hash: String::new(),
            processing: Vec::new(),
        },
    }
}

fn trace(f: impl Fn(f64) -> f64, n: usize, fs: f64) -> Array2<f64> {
    Array2::from_shape_fn((1, n), |(_, k)| f(k as f64 / fs))
}

// Magnitude of the Hann-windowed DTFT of `x` at `f`.
fn dtft(x: &[f64], fs: f64, f: f64) -> f64 {
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(k, &v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / (n - 1.0)).cos();
            Complex64::from_polar(v * w, -2.0 * PI * f * k as f64 / fs)
        })
        .sum::<Complex64>()
        .norm()
}

fn peak_frequency(x: &[f64], fs: f64, lo: f64, hi: f64, step: f64) -> f64 {
    let n = ((hi - lo) / step) as usize;
    (0..=n)
        .map(|k| lo + k as f64 * step)
        .max_by(|a, b| dtft(x, fs, *a).total_cmp(&dtft(x, fs, *b)))
        .unwrap()
}

fn rms(x: impl Iterator<Item = f64>) -> f64 {
    let (mut ss, mut n) = (0.0, 0usize);
    for v in x {
        ss += v * v;
        n += 1;
    }
    (ss / n as f64).sqrt()
}

#[test]
fn resampled_tone_keeps_its_frequency() {
    let ch = channels(trace(|t| (2.0 * PI * 5e6 * t).cos(), 8760, 87.6e6), 87.6e6);
    let out = resample(&ch, 40e6).unwrap();
    assert!((out.n_samples() as i64 - 4000).abs() <= 1);
    assert!((out.duration() - ch.duration()).abs() <= 1.0 / 40e6);
    assert_eq!(out.t0, ch.t0);
    let mid = out.samples.row(0).slice(ndarray::s![200..3800]).to_vec();
    let f = peak_frequency(&mid, 40e6, 4.9e6, 5.1e6, 200.0);
    assert!((f / 5e6 - 1.0).abs() < 1e-3, "{f}");
}

#[test]
fn resampling_to_the_same_rate_is_the_identity() {
    let mut rng = stream(1, Stream::ThermalNoise);
    let x = Array2::from_shape_fn((3, 300), |_| rng.sample::<f64, _>(StandardNormal));
    let ch = channels(x.clone(), 40e6);
    let out = resample(&ch, 40e6).unwrap();
    for (a, b) in out.samples.iter().zip(x.iter()) {
        assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-300));
    }
    assert!(resample(&ch, 15e6).is_err());
}

#[test]
fn resampling_round_trip_of_a_band_limited_signal() {
    let mut rng = stream(2, Stream::Properties);
    let tones: Vec<(f64, f64, f64)> = (0..12)
        .map(|_| (rng.random_range(1e6..15e6), rng.random_range(0.1..1.0), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let signal = |t: f64| tones.iter().map(|(f, a, p)| a * (2.0 * PI * f * t + p).sin()).sum::<f64>();
    let ch = channels(trace(signal, 2000, 40e6), 40e6);
    let up = resample(&ch, 87.6e6).unwrap();
    let back = resample(&up, 40e6).unwrap();
    assert_eq!(back.n_samples(), 2000);
    let (x, y) = (ch.samples.row(0), back.samples.row(0));
    // away from the records' ends, where the kernels are truncated
    let err = rms((200..1800).map(|k| y[k] - x[k]));
    let reference = rms((200..1800).map(|k| x[k]));
    assert!(20.0 * (err / reference).log10() <= -40.0);
}

fn tone_gain(spec: &BandpassSpec, f: f64) -> f64 {
    let fs = 40e6;
    let ch = channels(trace(|t| (2.0 * PI * f * t).cos(), 4000, fs), fs);
    let out = bandpass(&ch, spec).unwrap();
    let amp = |x: &Array2<f64>| rms((1000..3000).map(|k| x[[0, k]]));
    amp(&out.samples) / amp(&ch.samples)
}

#[test]
fn bandpass_gain_at_centre_and_half_width() {
    let spec = BandpassSpec {
        center_freq: 5e6,
        fractional_bandwidth: 0.6,
    };
    assert!((tone_gain(&spec, 5e6) - 1.0).abs() < 0.01);
    for f in [3.5e6, 6.5e6] {
        let designed = 20.0 * spec.gain(f).log10();
        let measured = 20.0 * tone_gain(&spec, f).log10();
        assert!((designed + 6.0).abs() < 0.5, "{designed}");
        assert!((measured + 6.0).abs() < 0.5, "{f}: {measured}");
    }
}

#[test]
fn bandpass_rejects_dc() {
    let ch = channels(Array2::from_elem((2, 1000), 0.7), 40e6);
    let out = bandpass(&ch, &BandpassSpec::default()).unwrap();
    let db = 20.0 * (rms(out.samples.iter().copied()) / 0.7).log10();
    assert!(db <= -40.0, "{db}");
}

fn half_amplitude_width(x: &[f64], fs: f64) -> f64 {
    let f: Vec<f64> = (0..=4000).map(|k| k as f64 * 2.5e3).collect();
    let mag: Vec<f64> = f.iter().map(|&f| {
        x.iter()
            .enumerate()
            .map(|(k, &v)| Complex64::from_polar(v, -2.0 * PI * f * k as f64 / fs))
            .sum::<Complex64>()
            .norm()
    }).collect();
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    let above: Vec<f64> = f.iter().zip(&mag).filter(|(_, &m)| m >= 0.5 * peak).map(|(f, _)| *f).collect();
    above.last().unwrap() - above.first().unwrap()
}

#[test]
fn bandpass_is_zero_phase_and_narrows_by_root_two_when_repeated() {
    let fs = 40e6;
    let mut x = Array2::zeros((1, 1024));
    x[[0, 512]] = 1.0;
    let spec = BandpassSpec::default();
    let once = bandpass(&channels(x, fs), &spec).unwrap();
    let twice = bandpass(&once, &spec).unwrap();
    let h = once.samples.row(0).to_vec();
    let peak = h[512];
    for k in 1..200 {
        assert!((h[512 + k] - h[512 - k]).abs() < 1e-9 * peak, "{k}: {} {}", h[512 + k], h[512 - k]);
    }
    let w1 = half_amplitude_width(&h, fs);
    let w2 = half_amplitude_width(&twice.samples.row(0).to_vec(), fs);
    assert!((w1 / (0.7 * 5e6) - 1.0).abs() < 0.01, "{w1}");
    assert!(((w2 / w1) * 2f64.sqrt() - 1.0).abs() < 0.02, "{}", w2 / w1);
}

#[test]
fn tna_with_zero_probability_is_the_identity() {
    let ch = channels(trace(|t| (2.0 * PI * 5e6 * t).sin(), 500, 40e6), 40e6);
    let spec = TnaSpec {
        probability: 0.0,
        ..TnaSpec::default()
    };
    for seed in 0..50 {
        let (out, draw) = apply_tna(&ch, &spec, 0.5, seed).unwrap();
        assert!(!draw.applied());
        assert_eq!(out.samples, ch.samples);
    }
}

#[test]
fn forced_noise_level_is_met() {
    let ch = channels(Array2::from_shape_fn((4, 8192), |(e, k)| (k as f64 * 0.01 + e as f64).sin()), 40e6);
    let pulse_rms = 0.37;
    for level in [-120.0, -100.0, -80.0] {
        let out = apply_tna_forced(&ch, level, pulse_rms, 9).unwrap();
        let noise = rms(out.samples.iter().zip(ch.samples.iter()).map(|(a, b)| a - b));
        let db = 20.0 * (noise / pulse_rms).log10();
        assert!((db - level).abs() <= 1.0, "{level}: {db}");
    }
}

#[test]
fn augmentation_rate_and_levels() {
    let ch = channels(Array2::zeros((1, 16)), 40e6);
    let spec = TnaSpec::default();
    let mut hits = 0;
    for seed in 0..10_000u64 {
        let (_, draw) = apply_tna(&ch, &spec, 1.0, seed).unwrap();
        assert_eq!(draw, spec.draw(seed));
        if let Some(db) = draw.level_db {
            assert!((-120.0..=-80.0).contains(&db));
            hits += 1;
        }
    }
    let rate = hits as f64 / 1e4;
    assert!((rate - 0.2).abs() <= 0.012, "{rate}");
}

#[test]
fn alignment_drops_the_samples_before_t0() {
    let ch = channels(Array2::from_shape_fn((2, 400), |(e, k)| (e * 1000 + k) as f64), 40e6);
    let same = align_t0(&ch, 0.0).unwrap();
    assert_eq!(same.samples, ch.samples);
    let out = align_t0(&ch, 2.75e-6).unwrap();
    assert_eq!(ch.n_samples() - out.n_samples(), 110);
    assert_eq!(out.samples[[0, 0]], 110.0);
    assert!((out.t_start - 2.75e-6).abs() < 1e-15);
    assert!(align_t0(&ch, 1e-3).is_err());
}

#[test]
fn aligned_scatterer_free_data_is_quiet() {
    let grid = GridSpec::with_size(128, 160).unwrap();
    let params = PhantomParams {
        scatterers_per_cell: 0.0,
        ..PhantomParams::default()
    };
    let p = homogeneous_phantom(&params, &grid, 1540.0, 0).unwrap();
    let tx = TransducerSpec::default();
    let pw = PlaneWaveTx::standard(&tx, 0.0).unwrap();
    let ch = simulate_planewave(&p, &tx, &pw, &SolverConfig::default()).unwrap();
    let r = resample(&ch, PROCESSING_FS).unwrap();
    let a = align_t0(&r, r.t0).unwrap();
    let n = (1e-6 * a.fs) as usize;
    let first = a
        .samples
        .outer_iter()
        .zip(&a.active)
        .filter(|(_, &on)| on)
        .flat_map(|(row, _)| row.iter().take(n).copied().collect::<Vec<_>>());
    let db = 20.0 * (rms(first) / ch.pulse_rms).log10();
    assert!(db <= -60.0, "{db}");
}

#[test]
fn analytic_signal_of_textbook_pairs() {
    let fs = 40e6;
    let f = 5e6;
    let ch = channels(trace(|t| (2.0 * PI * f * t).cos(), 1024, fs), fs);
    let z = analytic_signal(&ch).unwrap();
    for k in 100..924 {
        let t = k as f64 / fs;
        let v = z.data[[0, k]];
        assert!((v.im - (2.0 * PI * f * t).sin()).abs() < 0.01);
        assert!((v.norm() - 1.0).abs() < 0.01);
    }
    let short = channels(Array2::zeros((1, 15)), fs);
    assert!(analytic_signal(&short).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn analytic_real_part_reproduces_the_input(seed in any::<u64>(), n in 16usize..700) {
        let mut rng = stream(seed, Stream::ThermalNoise);
        let x = Array2::from_shape_fn((2, n), |_| rng.sample::<f64, _>(StandardNormal));
        let z = analytic_signal(&channels(x.clone(), 40e6)).unwrap();
        let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in z.data.iter().zip(x.iter()) {
            prop_assert!((a.re - b).abs() <= 1e-6 * scale);
        }
    }

    #[test]
    fn beamforming_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let tx = TransducerSpec::default();
        let grid = BeamformGrid::covering(&GridSpec::with_size(16, 16).unwrap(), 1540.0);
        let mut rng = stream(seed, Stream::ThermalNoise);
        let mut random = || {
            let data = Array2::from_shape_fn((128, 120), |_| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            iq(data, 8.0)
        };
        let (x, y) = (random(), random());
        let mut mix = x.clone();
        mix.data = &x.data * a + &y.data * b;
        let (bx, by, bm) = (
            das_beamform(&x, &tx, &grid).unwrap(),
            das_beamform(&y, &tx, &grid).unwrap(),
            das_beamform(&mix, &tx, &grid).unwrap(),
        );
        let scale = bm.pixels.iter().fold(1e-12f32, |m, z| m.max(z.norm()));
        for ((p, q), r) in bx.pixels.iter().zip(by.pixels.iter()).zip(bm.pixels.iter()) {
            let lin = p * a as f32 + q * b as f32;
            prop_assert!((lin - r).norm() <= 1e-5 * scale, "{} vs {}", lin, r);
        }
    }
}

fn iq(data: Array2<Complex64>, angle: f64) -> IqChannels {
    let n = data.nrows();
    IqChannels {
        data,
        fs: 40e6,
        t_start: 0.0,
        t0: 0.0,
        angle,
        c_ref: 1540.0,
        pulse_duration: 0.5e-6,
        active: vec![true; n],
        processing: Vec::new(),
    }
}

#[test]
fn zero_channels_give_a_zero_image() {
    let tx = TransducerSpec::default();
    let grid = BeamformGrid::covering(&GridSpec::with_size(16, 24).unwrap(), 1540.0);
    let img = das_beamform(&iq(Array2::zeros((128, 300)), 0.0), &tx, &grid).unwrap();
    assert_eq!(img.pixels.dim(), (24, 16));
    assert!(img.pixels.iter().all(|z| *z == Complex32::new(0.0, 0.0)));
    assert!(das_beamform(&iq(Array2::zeros((64, 300)), 0.0), &tx, &grid).is_err());
}

fn envelope_peak(img: &IQImage) -> (f64, f64) {
    let env = img.envelope();
    let ((i, j), _) = env
        .indexed_iter()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    (img.grid.x(j), img.grid.z(i))
}

#[test]
fn point_target_is_localized_and_moves_with_c0() {
    let grid = GridSpec::with_size(96, 160).unwrap();
    let iz = 100;
    let params = PhantomParams {
        scatterers_per_cell: 0.0,
        ..PhantomParams::default()
    };
    let mut p = homogeneous_phantom(&params, &grid, 1540.0, 1).unwrap();
    p.props.rho[[iz, grid.nx / 2]] *= 2.0;
    let (x0, d) = (grid.lateral(grid.nx / 2), grid.depth(iz));
    let tx = TransducerSpec::default();
    let pw = PlaneWaveTx::standard(&tx, 0.0).unwrap();
    let ch = simulate_planewave(&p, &tx, &pw, &SolverConfig::default()).unwrap();
    let chain = ChainSpec {
        bandpass: None,
        ..ChainSpec::default()
    };
    let iqc = process_channels(&ch, &chain, 0).unwrap();
    let bf = BeamformGrid::covering(&grid, 1540.0);
    let (x, z) = envelope_peak(&das_beamform(&iqc, &tx, &bf).unwrap());
    assert!((x - x0).hypot(z - d) <= 154e-6, "({x}, {z}) vs ({x0}, {d})");

    // at 0° the delay model maps an echo from depth d to d·c0/c
    let (_, z_slow) = envelope_peak(&das_beamform(&iqc, &tx, &bf.with_c0(1490.0)).unwrap());
    let predicted = z - d * (1.0 - 1490.0 / 1540.0);
    assert!(z_slow < z);
    assert!((z_slow - predicted).abs() <= 1.5 * grid.dz, "{z_slow} vs {predicted}");
}

fn image(seed: u64, angle: f64, grid: BeamformGrid) -> IQImage {
    let mut rng = stream(seed, Stream::ThermalNoise);
    IQImage {
        pixels: Array2::from_shape_fn(grid.shape(), |_| Complex32::new(rng.sample(StandardNormal), rng.sample(StandardNormal))),
        angle,
        grid,
    }
}

#[test]
fn stacking_order_and_round_trip() {
    let grid = BeamformGrid::covering(&GridSpec::with_size(16, 20).unwrap(), 1540.0);
    let same: Vec<IQImage> = [-8.0, 0.0, 8.0].iter().map(|&a| image(1, a, grid)).collect();
    let s = stack_model_input(&same).unwrap();
    assert_eq!(s.dim(), (6, 20, 16));
    for k in [2, 4] {
        assert_eq!(s.index_axis(ndarray::Axis(0), 0), s.index_axis(ndarray::Axis(0), k));
        assert_eq!(s.index_axis(ndarray::Axis(0), 1), s.index_axis(ndarray::Axis(0), k + 1));
    }

    let shuffled: Vec<IQImage> = [8.0, -8.0, 0.0].iter().enumerate().map(|(k, &a)| image(k as u64, a, grid)).collect();
    let stacked: Array3<f32> = stack_model_input(&shuffled).unwrap();
    let back = unstack_model_input(&stacked, &DEFAULT_ANGLES, &grid).unwrap();
    for im in &back {
        let orig = shuffled.iter().find(|o| o.angle == im.angle).unwrap();
        assert_eq!(orig, im);
    }
    assert_eq!(plane_names(&DEFAULT_ANGLES), ["-8deg:re", "-8deg:im", "+0deg:re", "+0deg:im", "+8deg:re", "+8deg:im"]);

    let other = BeamformGrid::covering(&GridSpec::with_size(16, 18).unwrap(), 1540.0);
    assert!(stack_model_input(&[image(0, 0.0, grid), image(0, 8.0, other)]).is_err());
    assert!(stack_model_input(&[image(0, 0.0, grid), image(1, 0.0, grid)]).is_err());
}

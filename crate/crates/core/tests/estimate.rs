use std::collections::BTreeMap;

use breastsos::estimate::*;
use breastsos::phantom::*;
use breastsos::rng::{stream, Stream};
use breastsos::sigproc::*;
use breastsos::wavesim::*;
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn random_labels(seed: u64, shape: (usize, usize), n_regions: u8) -> TissueLabelMap {
    let mut rng = stream(seed, Stream::Properties);
    TissueLabelMap {
        labels: Array2::from_shape_fn(shape, |_| Tissue::from_id(rng.random_range(0..n_regions)).unwrap()),
        class_kind: ClassKind::Lesion,
    }
}

fn random_map(seed: u64, shape: (usize, usize)) -> SoundSpeedMap {
    let mut rng = stream(seed, Stream::GlandField);
    SoundSpeedMap(Array2::from_shape_fn(shape, |_| rng.random_range(1400.0..1700.0)))
}

#[test]
fn perfect_and_offset_estimates() {
    let labels = random_labels(1, (30, 20), 4);
    let target = random_map(2, (30, 20));
    let r = regional_mean_error(&target, &target, &labels).unwrap();
    let s = &r.samples[0];
    assert_eq!(s.pixel_mae(), 0.0);
    assert!(s.regions.iter().all(|g| g.error == 0.0));
    assert_eq!(r.per_class[&ClassKind::Lesion].region_mae, 0.0);

    let shifted = SoundSpeedMap(&target.0 + 10.0);
    let r = regional_mean_error(&shifted, &target, &labels).unwrap();
    let c = &r.per_class[&ClassKind::Lesion];
    assert!((c.pixel_mae - 10.0).abs() < 1e-9);
    assert!((c.region_mae - 10.0).abs() < 1e-9);
    assert!(c.pixel_error_std < 1e-9);
    for g in &r.samples[0].regions {
        assert!((g.error - 10.0).abs() < 1e-9);
        assert!((g.relative_error - 10.0 / g.mean_target).abs() < 1e-12);
    }
}

#[test]
fn region_without_valid_pixels_is_excluded() {
    let mut labels = random_labels(3, (20, 20), 2);
    labels.labels.row_mut(0).fill(Tissue::Lesion);
    let target = random_map(4, (20, 20));
    let mut est = target.clone();
    for (e, l) in est.0.iter_mut().zip(labels.labels.iter()) {
        if *l == Tissue::Lesion {
            *e = f64::NAN;
        }
    }
    let s = &regional_mean_error(&est, &target, &labels).unwrap().samples[0];
    assert!(s.regions.iter().all(|g| g.tissue != Tissue::Lesion));
    assert_eq!(s.regions.len(), 2);
    assert!(regional_mean_error(&est, &random_map(0, (20, 21)), &labels).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_match_brute_force(seed in any::<u64>(), nz in 4usize..40, nx in 4usize..40, n_regions in 1u8..5) {
        let labels = random_labels(seed, (nz, nx), n_regions);
        let (a, b) = (random_map(seed ^ 1, (nz, nx)), random_map(seed ^ 2, (nz, nx)));
        let r = regional_mean_error(&a, &b, &labels).unwrap();
        let mae: f64 = a.0.iter().zip(b.0.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>() / (nz * nx) as f64;
        prop_assert!((r.per_class[&ClassKind::Lesion].pixel_mae - mae).abs() <= 1e-9 * mae);
        let mut sums: BTreeMap<Tissue, (f64, f64, usize)> = BTreeMap::new();
        for ((x, y), l) in a.0.iter().zip(b.0.iter()).zip(labels.labels.iter()) {
            let e = sums.entry(*l).or_default();
            e.0 += x;
            e.1 += y;
            e.2 += 1;
        }
        prop_assert_eq!(r.samples[0].regions.len(), sums.len());
        for g in &r.samples[0].regions {
            let (x, y, n) = sums[&g.tissue];
            let err = (x - y) / n as f64;
            prop_assert!((g.error - err).abs() <= 1e-9 * err.abs().max(1.0));
            prop_assert_eq!(g.pixels, n);
        }
    }

    #[test]
    fn mae_is_a_metric(seed in any::<u64>(), n in 2usize..30) {
        let labels = random_labels(seed, (n, n), 3);
        let (a, b) = (random_map(seed ^ 5, (n, n)), random_map(seed ^ 6, (n, n)));
        let mae = |x: &SoundSpeedMap, y: &SoundSpeedMap| regional_mean_error(x, y, &labels).unwrap().samples[0].pixel_mae();
        prop_assert!(mae(&a, &b) >= 0.0);
        prop_assert_eq!(mae(&a, &a), 0.0);
        prop_assert!(mae(&a, &b) > 0.0);
        prop_assert_eq!(mae(&a, &b), mae(&b, &a));
    }
}

#[test]
fn depth_profiles_of_constructed_biases() {
    let (nz, nx) = (160, 24);
    let targets: Vec<SoundSpeedMap> = (0..3).map(|k| random_map(k, (nz, nx))).collect();
    let p = error_vs_depth(&targets, &targets, DEFAULT_DEPTH_BINS).unwrap();
    assert_eq!(p.bins.len(), 16);
    assert_eq!((p.bins[0].0, p.bins[15].1), (0, nz));
    assert!(p.mean_relative_error.iter().all(|&v| v == 0.0));

    let biased: Vec<SoundSpeedMap> = targets.iter().map(|t| SoundSpeedMap(&t.0 * 1.01)).collect();
    let p = error_vs_depth(&biased, &targets, 8).unwrap();
    assert!(p.mean_relative_error.iter().all(|v| (v - 0.01).abs() < 1e-9));

    let slope = 2e-4;
    let linear: Vec<SoundSpeedMap> = targets
        .iter()
        .map(|t| SoundSpeedMap(Array2::from_shape_fn((nz, nx), |(i, j)| t.0[[i, j]] * (1.0 + slope * i as f64))))
        .collect();
    let p = error_vs_depth(&linear, &targets, DEFAULT_DEPTH_BINS).unwrap();
    // least-squares line through the bin centres
    let centres: Vec<f64> = p.bins.iter().map(|&(lo, hi)| 0.5 * (lo + hi - 1) as f64).collect();
    let (mx, my) = (
        centres.iter().sum::<f64>() / 16.0,
        p.mean_relative_error.iter().sum::<f64>() / 16.0,
    );
    let num: f64 = centres.iter().zip(&p.mean_relative_error).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = centres.iter().map(|x| (x - mx).powi(2)).sum();
    assert!((num / den / slope - 1.0).abs() < 0.05, "{}", num / den);
}

#[test]
fn unbiased_profile_is_consistent_with_the_global_error() {
    let (nz, nx) = (128, 64);
    let mut rng = stream(8, Stream::ThermalNoise);
    let targets: Vec<SoundSpeedMap> = (0..4).map(|k| random_map(10 + k, (nz, nx))).collect();
    let estimates: Vec<SoundSpeedMap> = targets
        .iter()
        .map(|t| SoundSpeedMap(t.0.mapv(|v| v + 8.0 * rng.sample::<f64, _>(StandardNormal))))
        .collect();
    let p = error_vs_depth(&estimates, &targets, DEFAULT_DEPTH_BINS).unwrap();
    let global: f64 = estimates
        .iter()
        .zip(&targets)
        .flat_map(|(e, t)| e.0.iter().zip(t.0.iter()).map(|(a, b)| ((a - b) / b).abs()).collect::<Vec<_>>())
        .sum::<f64>()
        / (4 * nz * nx) as f64;
    for v in &p.mean_abs_relative_error {
        assert!(*v <= 2.0 * global && *v >= 0.5 * global, "{v} vs {global}");
    }
}

#[test]
fn temporal_statistics() {
    let roi = PixelRoi { rows: 5..15, cols: 2..12 };
    let frame = random_map(1, (20, 16));
    let same = vec![frame.clone(); 5];
    let s = temporal_consistency(&same, &roi, false).unwrap();
    assert_eq!(s.std, 0.0);
    assert!(temporal_consistency(&same[..1], &roi, false).is_err());

    let sigma = 6.0;
    let mut rng = stream(3, Stream::ThermalNoise);
    let noisy: Vec<SoundSpeedMap> = (0..400)
        .map(|_| SoundSpeedMap(Array2::from_shape_fn((20, 16), |_| 1540.0 + sigma * rng.sample::<f64, _>(StandardNormal))))
        .collect();
    let s = temporal_consistency(&noisy, &roi, false).unwrap();
    let expected = sigma / 100f64.sqrt();
    assert!((s.std / expected - 1.0).abs() < 0.2, "{} vs {expected}", s.std);

    let mut corrupted = noisy[..50].to_vec();
    corrupted[17].0.fill(1700.0);
    let raw = temporal_consistency(&corrupted, &roi, false).unwrap();
    let trimmed = temporal_consistency(&corrupted, &roi, true).unwrap();
    assert!(trimmed.std < raw.std);
    assert!(!trimmed.kept[17]);
}

fn speckle_channels() -> Vec<IqChannels> {
    let grid = GridSpec::with_size(192, 256).unwrap();
    let p = homogeneous_phantom(&PhantomParams::default(), &grid, 1540.0, 2).unwrap();
    let tx = TransducerSpec::default();
    DEFAULT_ANGLES
        .iter()
        .map(|&a| {
            let pw = PlaneWaveTx::standard(&tx, a).unwrap();
            let ch = simulate_planewave(&p, &tx, &pw, &SolverConfig::default()).unwrap();
            process_channels(&ch, &ChainSpec::default(), 0).unwrap()
        })
        .collect()
}

#[test]
fn sweep_properties_on_simulated_speckle() {
    let tx = TransducerSpec::default();
    let iqs = speckle_channels();
    let coarse = SweepSpec {
        roi: Roi {
            x_min: -2.5e-3,
            x_max: 2.5e-3,
            z_min: 4e-3,
            z_max: 10e-3,
        },
        ..SweepSpec::default()
    };
    let r = speckle_brightness_sweep(&iqs, &tx, &coarse).unwrap();
    let c5 = r.c_hat.expect("speckle gives a peak");

    let fine = SweepSpec { c_step: 1.0, ..coarse };
    let r1 = speckle_brightness_sweep(&iqs, &tx, &fine).unwrap();
    let (k, _) = r1.brightness.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    assert!((c5 - r1.speeds[k]).abs() <= 2.5, "{c5} vs {}", r1.speeds[k]);

    let scaled: Vec<IqChannels> = iqs
        .iter()
        .map(|iq| IqChannels {
            data: iq.data.mapv(|z| z * 3.7),
            ..iq.clone()
        })
        .collect();
    let rs = speckle_brightness_sweep(&scaled, &tx, &coarse).unwrap();
    let argmax = |b: &[f64]| b.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
    assert_eq!(argmax(&rs.brightness), argmax(&r.brightness));
    // images are stored in single precision
    assert!((rs.c_hat.unwrap() - c5).abs() < 1e-2, "{} vs {c5}", rs.c_hat.unwrap());

    let anechoic: Vec<IqChannels> = iqs
        .iter()
        .map(|iq| IqChannels {
            data: Array2::from_elem(iq.data.dim(), Complex64::default()),
            ..iq.clone()
        })
        .collect();
    assert_eq!(speckle_brightness_sweep(&anechoic, &tx, &coarse).unwrap().c_hat, None);
}

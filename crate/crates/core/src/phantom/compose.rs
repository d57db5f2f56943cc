use std::collections::BTreeMap;

use log::debug;
use ndarray::{Array2, Zip};
use rand::Rng;

use super::{
    ellipse_mask, gen_grf_gland, gen_scatterers, gen_skin_band, ClassKind, EllipseParams,
    GridSpec, Phantom, PhantomDraws, PhantomParams, PropertyMaps, SoundSpeedMap, Tissue,
    TissueLabelMap,
};
use crate::rng::{stream, Stream};
use crate::{Error, Result};

/// Admissible sound speed anywhere in a phantom, m/s.
pub const SPEED_BOUNDS: (f64, f64) = (1400.0, 1750.0);

/// Replaces every labelled region of `c` by its arithmetic mean.
pub fn region_average_target(labels: &Array2<Tissue>, c: &Array2<f64>) -> Result<SoundSpeedMap> {
    if labels.dim() != c.dim() {
        return Err(Error::Shape(format!(
            "labels {:?} vs sound speed {:?}",
            labels.dim(),
            c.dim()
        )));
    }
    let mut sums = [0.0f64; 5];
    let mut counts = [0usize; 5];
    Zip::from(labels).and(c).for_each(|&t, &v| {
        sums[t as usize] += v;
        counts[t as usize] += 1;
    });
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect();
    Ok(SoundSpeedMap(labels.mapv(|t| means[t as usize])))
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Samples an inclusion that fits inside the grid below `top` metres.
fn sample_inclusion<R: Rng + ?Sized>(
    grid: &GridSpec,
    params: &PhantomParams,
    top: f64,
    rng: &mut R,
) -> Result<EllipseParams> {
    let (w, h) = (grid.width(), grid.height());
    let margin = 2.0 * grid.dz.max(grid.dx);
    let room = ((w - 2.0 * margin) / 2.0).min((h - top - 2.0 * margin) / 2.0);
    let a_lo = params.inclusion_extent.0 / 2.0;
    let a_hi = (params.inclusion_extent.1 / 2.0).min(room);
    if a_hi < a_lo {
        return Err(Error::param(
            "grid",
            format!(
                "too small for a {:.1} mm inclusion below {:.2} mm",
                params.inclusion_extent.0 * 1e3,
                top * 1e3
            ),
        ));
    }
    for _ in 0..64 {
        let a = uniform(rng, (a_lo, a_hi));
        let b = uniform(rng, (a_lo, a_hi));
        let theta = uniform(rng, (0.0, std::f64::consts::PI));
        let mut e = EllipseParams::from_semi_axes(0.0, 0.0, a, b, theta);
        let (hx, hy) = e.half_extents();
        let x_rng = (margin + hx, w - margin - hx);
        let y_rng = (top + margin + hy, h - margin - hy);
        if x_rng.0 > x_rng.1 || y_rng.0 > y_rng.1 {
            continue;
        }
        e.xc = uniform(rng, x_rng);
        e.yc = uniform(rng, y_rng);
        if e.validate(grid).is_ok() && ellipse_mask(grid, &e).iter().any(|&m| m) {
            return Ok(e);
        }
    }
    Err(Error::param("grid", "could not place an inclusion"))
}

/// Composes a phantom of `class` with the default recipe.
pub fn compose_phantom(class: ClassKind, grid: &GridSpec, seed: u64) -> Result<Phantom> {
    compose_phantom_with(&PhantomParams::default(), class, grid, seed)
}

pub fn compose_phantom_with(
    params: &PhantomParams,
    class: ClassKind,
    grid: &GridSpec,
    seed: u64,
) -> Result<Phantom> {
    if class == ClassKind::Homogeneous {
        return Err(Error::param(
            "class",
            "use homogeneous_phantom for single-speed fixtures",
        ));
    }
    grid.validate()?;
    let mut geo = stream(seed, Stream::Geometry);
    let mut props_rng = stream(seed, Stream::Properties);

    let quantile = uniform(&mut geo, params.grf_quantile);
    let gland = gen_grf_gland(
        grid,
        params.grf_filter,
        params.grf_sigma,
        quantile,
        &mut stream(seed, Stream::GlandField),
    )?;
    let mut labels = gland
        .foreground
        .mapv(|fg| if fg { Tissue::GlandFg } else { Tissue::GlandBg });

    let mut draws = PhantomDraws {
        gland_threshold_quantile: quantile,
        gland_threshold: gland.threshold,
        skin_thickness: None,
        skin_rows: None,
        inclusion: None,
        inclusion_contrast_db: None,
        alpha_rho: 0.0,
    };

    let mut top = 0.0;
    if class.has_skin() {
        let thickness = uniform(&mut geo, params.skin_thickness);
        let rows = gen_skin_band(grid, thickness)?;
        labels.slice_mut(ndarray::s![..rows, ..]).fill(Tissue::Skin);
        draws.skin_thickness = Some(thickness);
        draws.skin_rows = Some(rows);
        top = rows as f64 * grid.dz;
    }

    if let Some(tissue) = class.inclusion() {
        let e = sample_inclusion(grid, params, top, &mut geo)?;
        let mask = ellipse_mask(grid, &e);
        Zip::from(&mut labels).and(&mask).for_each(|l, &m| {
            if m {
                *l = tissue;
            }
        });
        draws.inclusion = Some(e);
    }

    // Region means. Gland fg/bg are redrawn until they are distinguishable.
    let mut mean_speeds = BTreeMap::new();
    let gland_range = Tissue::GlandBg.speed_range();
    let (bg, fg) = loop {
        let bg = uniform(&mut props_rng, gland_range);
        let fg = uniform(&mut props_rng, gland_range);
        if (bg - fg).abs() >= params.gland_min_separation {
            break (bg, fg);
        }
    };
    let present: Vec<Tissue> = {
        let mut seen = [false; 5];
        labels.iter().for_each(|&t| seen[t as usize] = true);
        Tissue::ALL.into_iter().filter(|t| seen[*t as usize]).collect()
    };
    for &t in &present {
        let speed = match t {
            Tissue::GlandBg => bg,
            Tissue::GlandFg => fg,
            other => uniform(&mut props_rng, other.speed_range()),
        };
        mean_speeds.insert(t, speed);
    }

    let mut contrast_db = [0.0, params.gland_fg_db, params.skin_db, f64::NEG_INFINITY, 0.0];
    if class.inclusion() == Some(Tissue::Lesion) {
        let magnitude = uniform(&mut props_rng, params.lesion_db);
        let sign = if props_rng.random::<bool>() { 1.0 } else { -1.0 };
        contrast_db[Tissue::Lesion as usize] = sign * magnitude;
        draws.inclusion_contrast_db = Some(sign * magnitude);
    }
    let alpha_rho = uniform(&mut props_rng, params.alpha_rho);
    draws.alpha_rho = alpha_rho;

    let mut scatterers = gen_scatterers(
        grid,
        params.scatterers_per_cell,
        params.wavelength,
        &mut stream(seed, Stream::Scatterers),
    )?;
    let anechoic = labels.mapv(|t| contrast_db[t as usize] == f64::NEG_INFINITY);
    scatterers.clear_where(&anechoic);

    let c = assemble_speed(
        &labels,
        &scatterers.amplitude,
        &mean_speeds,
        &contrast_db,
        params.scatter_speed_scale,
    );
    finish(
        grid,
        params,
        TissueLabelMap {
            labels,
            class_kind: class,
        },
        c,
        scatterers,
        seed,
        mean_speeds,
        draws,
    )
}

/// Mean speed per region plus the contrast-scaled scatterer perturbation,
/// with the perturbation re-centred to zero mean inside every region.
fn assemble_speed(
    labels: &Array2<Tissue>,
    amplitude: &Array2<f64>,
    mean_speeds: &BTreeMap<Tissue, f64>,
    contrast_db: &[f64; 5],
    scale: f64,
) -> Array2<f64> {
    let gain: Vec<f64> = contrast_db
        .iter()
        .map(|&db| if db.is_finite() { scale * 10f64.powf(db / 20.0) } else { 0.0 })
        .collect();
    let delta = Zip::from(labels)
        .and(amplitude)
        .map_collect(|&t, &a| a * gain[t as usize]);
    let mut sums = [0.0f64; 5];
    let mut counts = [0usize; 5];
    Zip::from(labels).and(&delta).for_each(|&t, &d| {
        sums[t as usize] += d;
        counts[t as usize] += 1;
    });
    let offsets: Vec<f64> = (0..5)
        .map(|i| if counts[i] > 0 { sums[i] / counts[i] as f64 } else { 0.0 })
        .collect();
    Zip::from(labels).and(&delta).map_collect(|&t, &d| {
        mean_speeds.get(&t).copied().unwrap_or(f64::NAN) + d - offsets[t as usize]
    })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    grid: &GridSpec,
    params: &PhantomParams,
    labels: TissueLabelMap,
    c: Array2<f64>,
    scatterers: super::ScattererField,
    seed: u64,
    mean_speeds: BTreeMap<Tissue, f64>,
    draws: PhantomDraws,
) -> Result<Phantom> {
    let (lo, hi) = SPEED_BOUNDS;
    if let Some(bad) = c.iter().find(|&&v| !(lo..=hi).contains(&v)) {
        return Err(Error::param(
            "sound speed",
            format!("{bad} m/s outside [{lo}, {hi}]"),
        ));
    }
    let rho = c.mapv(|v| v / draws.alpha_rho);
    let target = region_average_target(&labels.labels, &c)?;
    debug!(
        "phantom seed={seed} class={} means={:?}",
        labels.class_kind, mean_speeds
    );
    Ok(Phantom {
        grid: *grid,
        labels,
        props: PropertyMaps {
            c,
            rho,
            alpha_coeff: params.alpha_coeff,
            alpha_power: params.alpha_power,
            b_over_a: params.b_over_a,
        },
        scatterers,
        target,
        seed,
        mean_speeds,
        draws,
    })
}

/// Single-speed speckle phantom used to verify estimators.
///
/// Scatterers sit at the gland foreground level so the speckle is bright.
pub fn homogeneous_phantom(
    params: &PhantomParams,
    grid: &GridSpec,
    speed: f64,
    seed: u64,
) -> Result<Phantom> {
    grid.validate()?;
    let mut props_rng = stream(seed, Stream::Properties);
    let alpha_rho = uniform(&mut props_rng, params.alpha_rho);
    let labels = Array2::from_elem(grid.shape(), Tissue::GlandBg);
    let scatterers = gen_scatterers(
        grid,
        params.scatterers_per_cell,
        params.wavelength,
        &mut stream(seed, Stream::Scatterers),
    )?;
    let mean_speeds = BTreeMap::from([(Tissue::GlandBg, speed)]);
    let contrast_db = [params.gland_fg_db, 0.0, 0.0, 0.0, 0.0];
    let c = assemble_speed(
        &labels,
        &scatterers.amplitude,
        &mean_speeds,
        &contrast_db,
        params.scatter_speed_scale,
    );
    let draws = PhantomDraws {
        gland_threshold_quantile: 0.0,
        gland_threshold: 0.0,
        skin_thickness: None,
        skin_rows: None,
        inclusion: None,
        inclusion_contrast_db: None,
        alpha_rho,
    };
    finish(
        grid,
        params,
        TissueLabelMap {
            labels,
            class_kind: ClassKind::Homogeneous,
        },
        c,
        scatterers,
        seed,
        mean_speeds,
        draws,
    )
}

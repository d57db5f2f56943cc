//! Randomized in-silico breast phantoms.
//!
//! A phantom is built from three layers: a tissue label map (gland texture,
//! optional skin band, optional elliptical cyst or lesion), a sparse random
//! scatterer field, and a property model that turns labels and scatterers
//! into sound-speed and density maps. The training target is the
//! region-averaged sound-speed map.

mod compose;
mod ellipse;
mod grf;
mod io;
mod scatter;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use compose::{compose_phantom, compose_phantom_with, homogeneous_phantom, region_average_target};
pub use ellipse::{ellipse_mask, EllipseParams};
pub use grf::{gen_grf_gland, GlandField};
pub use io::{load_phantom, save_phantom};
pub use scatter::{gen_scatterers, scatterer_density, ScattererField};

/// Grid spacing used by default, five nodes per 293 µm array element.
pub const DEFAULT_SPACING: f64 = 58.594e-6;

/// Cartesian simulation grid. `nx` is lateral, `nz` axial (depth).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub nz: usize,
    pub dx: f64,
    pub dz: f64,
    /// Lateral offset of the grid centre relative to the transducer centre.
    #[serde(default)]
    pub origin: f64,
}

impl GridSpec {
    pub fn new(nx: usize, nz: usize, dx: f64, dz: f64) -> Result<Self> {
        let grid = GridSpec {
            nx,
            nz,
            dx,
            dz,
            origin: 0.0,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid of `nx × nz` nodes at the default spacing.
    pub fn with_size(nx: usize, nz: usize) -> Result<Self> {
        Self::new(nx, nz, DEFAULT_SPACING, DEFAULT_SPACING)
    }

    /// Desk-scale default: 256 lateral × 384 axial nodes.
    pub fn desk() -> Self {
        GridSpec {
            nx: 256,
            nz: 384,
            dx: DEFAULT_SPACING,
            dz: DEFAULT_SPACING,
            origin: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 16 || self.nz < 16 {
            return Err(Error::param(
                "grid",
                format!("need at least 16 nodes per axis, got {}x{}", self.nx, self.nz),
            ));
        }
        if !(self.dx > 0.0 && self.dz > 0.0) || !self.dx.is_finite() || !self.dz.is_finite() {
            return Err(Error::param("grid", "spacing must be positive and finite"));
        }
        if !self.origin.is_finite() {
            return Err(Error::param("grid", "origin must be finite"));
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nz, self.nx)
    }

    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lateral coordinate of column `ix` relative to the transducer centre.
    pub fn lateral(&self, ix: usize) -> f64 {
        self.origin + (ix as f64 - (self.nx as f64 - 1.0) / 2.0) * self.dx
    }

    /// Depth of row `iz` below the transducer face.
    pub fn depth(&self, iz: usize) -> f64 {
        iz as f64 * self.dz
    }

    /// Lateral extent covered by node centres.
    pub fn width(&self) -> f64 {
        (self.nx - 1) as f64 * self.dx
    }

    /// Axial extent covered by node centres.
    pub fn height(&self) -> f64 {
        (self.nz - 1) as f64 * self.dz
    }
}

/// Tissue label of one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[repr(u8)]
pub enum Tissue {
    GlandBg = 0,
    GlandFg = 1,
    Skin = 2,
    Cyst = 3,
    Lesion = 4,
}

impl Tissue {
    pub const ALL: [Tissue; 5] = [
        Tissue::GlandBg,
        Tissue::GlandFg,
        Tissue::Skin,
        Tissue::Cyst,
        Tissue::Lesion,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Tissue> {
        Tissue::ALL.get(id as usize).copied()
    }

    /// Range of the sampled mean sound speed in m/s.
    pub fn speed_range(self) -> (f64, f64) {
        match self {
            Tissue::Cyst => (1500.0, 1620.0),
            Tissue::Lesion => (1488.0, 1512.0),
            Tissue::Skin => (1540.0, 1670.0),
            Tissue::GlandBg | Tissue::GlandFg => (1480.0, 1528.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Tissue::GlandBg => "gland-bg",
            Tissue::GlandFg => "gland-fg",
            Tissue::Skin => "skin",
            Tissue::Cyst => "cyst",
            Tissue::Lesion => "lesion",
        }
    }
}

/// Phantom composition. The first six variants are the dataset classes;
/// `Homogeneous` is a single-speed speckle fixture used for verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassKind {
    CystSkin,
    LesionSkin,
    Skin,
    Gland,
    Lesion,
    Cyst,
    Homogeneous,
}

impl ClassKind {
    pub const DATASET: [ClassKind; 6] = [
        ClassKind::CystSkin,
        ClassKind::LesionSkin,
        ClassKind::Skin,
        ClassKind::Gland,
        ClassKind::Lesion,
        ClassKind::Cyst,
    ];

    pub fn has_skin(self) -> bool {
        matches!(self, ClassKind::CystSkin | ClassKind::LesionSkin | ClassKind::Skin)
    }

    pub fn inclusion(self) -> Option<Tissue> {
        match self {
            ClassKind::CystSkin | ClassKind::Cyst => Some(Tissue::Cyst),
            ClassKind::LesionSkin | ClassKind::Lesion => Some(Tissue::Lesion),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassKind::CystSkin => "cyst-skin",
            ClassKind::LesionSkin => "lesion-skin",
            ClassKind::Skin => "skin",
            ClassKind::Gland => "gland",
            ClassKind::Lesion => "lesion",
            ClassKind::Cyst => "cyst",
            ClassKind::Homogeneous => "homogeneous",
        }
    }
}

impl fmt::Display for ClassKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = ClassKind::DATASET
            .iter()
            .chain(std::iter::once(&ClassKind::Homogeneous));
        for class in all {
            if class.name() == s {
                return Ok(*class);
            }
        }
        match s {
            "cyst-with-skin" => Ok(ClassKind::CystSkin),
            "lesion-with-skin" => Ok(ClassKind::LesionSkin),
            "breast-gland" => Ok(ClassKind::Gland),
            _ => Err(Error::param("class", format!("unknown class `{s}`"))),
        }
    }
}

/// Real-valued `nz × nx` sound-speed map in m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundSpeedMap(pub Array2<f64>);

impl SoundSpeedMap {
    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn filled(shape: (usize, usize), c: f64) -> Self {
        SoundSpeedMap(Array2::from_elem(shape, c))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TissueLabelMap {
    pub labels: Array2<Tissue>,
    pub class_kind: ClassKind,
}

impl TissueLabelMap {
    pub fn shape(&self) -> (usize, usize) {
        self.labels.dim()
    }

    /// Pixel count per tissue label present in the map.
    pub fn counts(&self) -> BTreeMap<Tissue, usize> {
        let mut counts = BTreeMap::new();
        for &t in self.labels.iter() {
            *counts.entry(t).or_insert(0) += 1;
        }
        counts
    }
}

/// Acoustic properties per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyMaps {
    pub c: Array2<f64>,
    pub rho: Array2<f64>,
    /// dB/(MHz^y·cm)
    pub alpha_coeff: f64,
    pub alpha_power: f64,
    /// Stored for completeness; the linear solver ignores it.
    pub b_over_a: f64,
}

/// Parameters sampled while composing a phantom, kept for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomDraws {
    pub gland_threshold_quantile: f64,
    pub gland_threshold: f64,
    pub skin_thickness: Option<f64>,
    pub skin_rows: Option<usize>,
    pub inclusion: Option<EllipseParams>,
    /// Scatter level of the inclusion relative to the gland reference, dB.
    pub inclusion_contrast_db: Option<f64>,
    pub alpha_rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub grid: GridSpec,
    pub labels: TissueLabelMap,
    pub props: PropertyMaps,
    /// Scatterer positions and raw amplitudes; cleared inside anechoic regions.
    pub scatterers: ScattererField,
    pub target: SoundSpeedMap,
    pub seed: u64,
    pub mean_speeds: BTreeMap<Tissue, f64>,
    pub draws: PhantomDraws,
}

impl Phantom {
    pub fn class_kind(&self) -> ClassKind {
        self.labels.class_kind
    }

    pub fn c_max(&self) -> f64 {
        self.props.c.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn c_min(&self) -> f64 {
        self.props.c.iter().copied().fold(f64::MAX, f64::min)
    }
}

/// Knobs of the phantom generator. Defaults follow the dataset recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomParams {
    /// Gaussian filter support (lateral, axial) in grid points.
    pub grf_filter: (usize, usize),
    /// Gaussian filter standard deviation in grid points.
    pub grf_sigma: f64,
    /// Range of the gland threshold quantile.
    pub grf_quantile: (f64, f64),
    /// Scatterers per imaging resolution cell.
    pub scatterers_per_cell: f64,
    /// Wavelength defining the resolution cell, m.
    pub wavelength: f64,
    /// Sound-speed perturbation of a unit scatterer amplitude at the gland
    /// reference level, m/s.
    pub scatter_speed_scale: f64,
    pub gland_fg_db: f64,
    pub skin_db: f64,
    /// Magnitude range of the lesion contrast; the sign is drawn at random.
    pub lesion_db: (f64, f64),
    /// Minimum separation of the two gland mean speeds, m/s.
    pub gland_min_separation: f64,
    pub skin_thickness: (f64, f64),
    /// Range of the full extent (2 × semi-axis) of inclusions, m.
    pub inclusion_extent: (f64, f64),
    pub alpha_rho: (f64, f64),
    pub alpha_coeff: f64,
    pub alpha_power: f64,
    pub b_over_a: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        PhantomParams {
            grf_filter: (400, 400),
            grf_sigma: 600.0,
            grf_quantile: (0.3, 0.7),
            scatterers_per_cell: 4.0,
            wavelength: 1540.0 / 5.0e6,
            scatter_speed_scale: 5.0,
            gland_fg_db: 12.0,
            skin_db: 10.0,
            lesion_db: (10.0, 30.0),
            gland_min_separation: 5.0,
            skin_thickness: (0.7e-3, 3.0e-3),
            inclusion_extent: (2.0e-3, 15.0e-3),
            alpha_rho: (1.35, 1.65),
            alpha_coeff: 0.75,
            alpha_power: 1.5,
            b_over_a: 6.0,
        }
    }
}

/// Number of rows covered by a skin band of `thickness` metres.
///
/// Fails outside the anatomical range of 0.7 to 3 mm.
pub fn gen_skin_band(grid: &GridSpec, thickness: f64) -> Result<usize> {
    let (lo, hi) = PhantomParams::default().skin_thickness;
    if !(thickness >= lo - 1e-12 && thickness <= hi + 1e-12) {
        return Err(Error::param(
            "skin thickness",
            format!("{:.3} mm is outside [0.7, 3] mm", thickness * 1e3),
        ));
    }
    let rows = (thickness / grid.dz - 1e-9).ceil() as usize;
    Ok(rows.clamp(1, grid.nz))
}

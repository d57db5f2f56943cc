use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{
    ClassKind, GridSpec, Phantom, PhantomDraws, PropertyMaps, ScattererField, SoundSpeedMap,
    Tissue, TissueLabelMap,
};
use crate::dataset::tensor::{read_f32, write_atomic, write_f32};
use crate::{Error, Result, PIPELINE_VERSION};

/// `meta.json` of a phantom directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomMeta {
    pub pipeline_version: String,
    pub seed: u64,
    pub class: ClassKind,
    pub grid: GridSpec,
    pub mean_speeds: BTreeMap<Tissue, f64>,
    pub draws: PhantomDraws,
    pub alpha_coeff: f64,
    pub alpha_power: f64,
    pub b_over_a: f64,
    pub rho_s: f64,
    pub n_s: f64,
    /// Array files, all `nz × nx` float32.
    pub arrays: Vec<String>,
}

const ARRAYS: [&str; 5] = ["c", "rho", "labels", "scatterers", "target"];

fn to_f32(a: &Array2<f64>) -> Array2<f32> {
    a.mapv(|v| v as f32)
}

/// Writes `meta.json` and one `.ustn` file per map into `dir`.
///
/// Maps are stored as float32, so a reloaded phantom carries rounded values.
pub fn save_phantom(dir: &Path, p: &Phantom) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let labels = p.labels.labels.mapv(|t| t.id() as f32);
    write_f32(&dir.join("c.ustn"), &to_f32(&p.props.c))?;
    write_f32(&dir.join("rho.ustn"), &to_f32(&p.props.rho))?;
    write_f32(&dir.join("labels.ustn"), &labels)?;
    write_f32(&dir.join("scatterers.ustn"), &to_f32(&p.scatterers.amplitude))?;
    write_f32(&dir.join("target.ustn"), &to_f32(&p.target.0))?;
    let meta = PhantomMeta {
        pipeline_version: PIPELINE_VERSION.to_string(),
        seed: p.seed,
        class: p.labels.class_kind,
        grid: p.grid,
        mean_speeds: p.mean_speeds.clone(),
        draws: p.draws.clone(),
        alpha_coeff: p.props.alpha_coeff,
        alpha_power: p.props.alpha_power,
        b_over_a: p.props.b_over_a,
        rho_s: p.scatterers.rho_s,
        n_s: p.scatterers.n_s,
        arrays: ARRAYS.iter().map(|n| format!("{n}.ustn")).collect(),
    };
    let path = dir.join("meta.json");
    let json = serde_json::to_vec_pretty(&meta).map_err(|e| Error::json(&path, e))?;
    write_atomic(&path, &json)
}

pub fn load_phantom(dir: &Path) -> Result<Phantom> {
    let path = dir.join("meta.json");
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let meta: PhantomMeta = serde_json::from_slice(&text).map_err(|e| Error::json(&path, e))?;
    meta.grid.validate()?;
    let load = |name: &str| -> Result<Array2<f64>> {
        let file = dir.join(format!("{name}.ustn"));
        let a = read_f32::<ndarray::Ix2>(&file)?;
        if a.dim() != meta.grid.shape() {
            return Err(Error::Shape(format!(
                "{}: {:?} does not match grid {:?}",
                file.display(),
                a.dim(),
                meta.grid.shape()
            )));
        }
        Ok(a.mapv(f64::from))
    };
    let c = load("c")?;
    let rho = load("rho")?;
    let ids = load("labels")?;
    let amplitude = load("scatterers")?;
    let target = load("target")?;
    let mut labels = Array2::from_elem(meta.grid.shape(), Tissue::GlandBg);
    for (l, &id) in labels.iter_mut().zip(ids.iter()) {
        *l = Tissue::from_id(id as u8)
            .filter(|_| id.fract() == 0.0 && id >= 0.0)
            .ok_or_else(|| Error::param("labels", format!("invalid tissue id {id}")))?;
    }
    Ok(Phantom {
        grid: meta.grid,
        labels: TissueLabelMap {
            labels,
            class_kind: meta.class,
        },
        props: PropertyMaps {
            c,
            rho,
            alpha_coeff: meta.alpha_coeff,
            alpha_power: meta.alpha_power,
            b_over_a: meta.b_over_a,
        },
        scatterers: ScattererField {
            occupancy: amplitude.mapv(|a| a != 0.0),
            amplitude,
            rho_s: meta.rho_s,
            n_s: meta.n_s,
        },
        target: SoundSpeedMap(target),
        seed: meta.seed,
        mean_speeds: meta.mean_speeds,
        draws: meta.draws,
    })
}

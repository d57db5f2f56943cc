use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3, Ix2, Ix3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tensor::{read_f32, write_atomic, write_f32};
use crate::phantom::{compose_phantom_with, ClassKind, GridSpec, Phantom, PhantomDraws, PhantomParams, Tissue};
use crate::rng::{self, Stream};
use crate::sigproc::{
    das_beamform, plane_names, process_channels, stack_model_input, BandpassSpec, BeamformGrid, ChainSpec,
    TnaDraw, TnaSpec, BANDWIDTH_RANGE, PROCESSING_FS,
};
use crate::wavesim::{simulate_planewave, PlaneWaveTx, SolverConfig, TransducerSpec, DEFAULT_ANGLES};
use crate::{Error, Result, PIPELINE_VERSION};

const NOISE_TAG: u64 = 0x4E01;

/// Everything that determines a sample besides its seed and class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub grid: GridSpec,
    pub phantom: PhantomParams,
    pub transducer: TransducerSpec,
    /// Steering angles, ascending.
    pub angles: Vec<f64>,
    pub c_ref: f64,
    /// Relative half-width of the uniform transmit-frequency draw.
    pub tx_freq_jitter: f64,
    pub solver: SolverConfig,
    pub target_fs: f64,
    pub bandwidth_range: (f64, f64),
    /// Thermal noise augmentation at build time, if any.
    pub tna: Option<TnaSpec>,
    /// Beamforming speed.
    pub c0: f64,
    /// Attempts per sample before the build fails.
    pub max_attempts: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            grid: GridSpec::desk(),
            phantom: PhantomParams::default(),
            transducer: TransducerSpec::default(),
            angles: DEFAULT_ANGLES.to_vec(),
            c_ref: 1540.0,
            tx_freq_jitter: 0.1,
            solver: SolverConfig::default(),
            target_fs: PROCESSING_FS,
            bandwidth_range: BANDWIDTH_RANGE,
            tna: Some(TnaSpec::default()),
            c0: 1540.0,
            max_attempts: 3,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.transducer.validate()?;
        self.solver.validate()?;
        if self.angles.is_empty() || self.angles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("angles", "need at least one angle, strictly ascending"));
        }
        if !(0.0..1.0).contains(&self.tx_freq_jitter) {
            return Err(Error::param("tx_freq_jitter", "must lie in [0, 1)"));
        }
        let (lo, hi) = self.bandwidth_range;
        if !(lo > 0.0 && lo <= hi && hi < 2.0) {
            return Err(Error::param("bandwidth_range", "need 0 < lo <= hi < 2"));
        }
        if let Some(t) = &self.tna {
            t.validate()?;
        }
        if self.max_attempts == 0 {
            return Err(Error::param("max_attempts", "must be positive"));
        }
        self.beamform_grid().validate(&self.transducer)
    }

    pub fn beamform_grid(&self) -> BeamformGrid {
        BeamformGrid::covering(&self.grid, self.c0)
    }

    /// SHA-256 of the JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("plain data serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Provenance and sampled parameters of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub pipeline_version: String,
    pub id: String,
    pub index: usize,
    pub master_seed: u64,
    /// Retry number that produced the sample.
    pub attempt: u32,
    /// Seed of every random draw of the sample.
    pub seed: u64,
    pub class: ClassKind,
    pub mean_speeds: BTreeMap<Tissue, f64>,
    pub phantom_draws: PhantomDraws,
    pub tx_freq: f64,
    pub fractional_bandwidth: f64,
    pub tna: TnaDraw,
    pub angles: Vec<f64>,
    /// Time origin of each transmission, s.
    pub t0: Vec<f64>,
    /// Names of the input planes in storage order.
    pub input_planes: Vec<String>,
    pub input_shape: Vec<usize>,
    pub target_shape: Vec<usize>,
    pub beamform_grid: BeamformGrid,
    /// Processing steps of the first angle, in order.
    pub processing: Vec<String>,
    pub config_hash: String,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSample {
    /// `2·n_angles × N × M`, see [`SampleMeta::input_planes`].
    pub input: Array3<f32>,
    /// Region-averaged sound speed, `N × M`, m/s.
    pub target: Array2<f32>,
    pub meta: SampleMeta,
}

/// Where a sample comes from: its place in a corpus and its retry number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleKey {
    pub master_seed: u64,
    pub index: usize,
    pub attempt: u32,
}

impl SampleKey {
    pub fn seed(&self) -> u64 {
        rng::sample_seed(self.master_seed, self.index as u64, self.attempt)
    }

    pub fn id(&self) -> String {
        sample_id(self.index)
    }
}

pub fn sample_id(index: usize) -> String {
    format!("s{index:06}")
}

/// Runs phantom → simulation → processing → beamforming for one key.
pub fn generate_sample(cfg: &PipelineConfig, class: ClassKind, key: SampleKey) -> Result<DatasetSample> {
    cfg.validate()?;
    let seed = key.seed();
    let phantom = compose_phantom_with(&cfg.phantom, class, &cfg.grid, seed)?;
    let tx = &cfg.transducer;
    let j = cfg.tx_freq_jitter;
    let tx_freq = if j > 0.0 {
        tx.center_freq * rng::stream(seed, Stream::Transmit).random_range(1.0 - j..=1.0 + j)
    } else {
        tx.center_freq
    };
    let bandpass = BandpassSpec::draw(tx.center_freq, cfg.bandwidth_range, seed);
    let tna = match &cfg.tna {
        Some(spec) => spec.draw(seed),
        None => TnaDraw { level_db: None },
    };
    let chain = ChainSpec {
        target_fs: cfg.target_fs,
        bandpass: Some(bandpass),
        noise_db: tna.level_db,
    };
    let grid = cfg.beamform_grid();
    let mut images = Vec::with_capacity(cfg.angles.len());
    let mut t0 = Vec::with_capacity(cfg.angles.len());
    let mut processing = Vec::new();
    for (k, &angle) in cfg.angles.iter().enumerate() {
        let pw = PlaneWaveTx::new(tx, angle, cfg.c_ref, tx_freq)?;
        let ch = simulate_planewave(&phantom, tx, &pw, &cfg.solver)?;
        let iq = process_channels(&ch, &chain, rng::derive(seed, NOISE_TAG + k as u64))?;
        if k == 0 {
            processing = iq.processing.clone();
        }
        t0.push(pw.t0);
        images.push(das_beamform(&iq, tx, &grid)?);
    }
    let input = stack_model_input(&images)?;
    if let Some(pos) = input.iter().position(|v| !v.is_finite()) {
        return Err(Error::param("input", format!("non-finite value at flat index {pos}")));
    }
    let target = phantom.target.0.mapv(|v| v as f32);
    let meta = SampleMeta {
        pipeline_version: PIPELINE_VERSION.into(),
        id: key.id(),
        index: key.index,
        master_seed: key.master_seed,
        attempt: key.attempt,
        seed,
        class,
        mean_speeds: phantom.mean_speeds.clone(),
        phantom_draws: phantom.draws.clone(),
        tx_freq,
        fractional_bandwidth: bandpass.fractional_bandwidth,
        tna,
        angles: cfg.angles.clone(),
        t0,
        input_planes: plane_names(&cfg.angles),
        input_shape: input.shape().to_vec(),
        target_shape: target.shape().to_vec(),
        beamform_grid: grid,
        processing,
        config_hash: cfg.hash(),
        config: cfg.clone(),
    };
    Ok(DatasetSample { input, target, meta })
}

/// Rebuilds a sample from its metadata alone.
pub fn regenerate(meta: &SampleMeta) -> Result<DatasetSample> {
    generate_sample(
        &meta.config,
        meta.class,
        SampleKey {
            master_seed: meta.master_seed,
            index: meta.index,
            attempt: meta.attempt,
        },
    )
}

/// Phantom of a sample, for inspection.
pub fn sample_phantom(meta: &SampleMeta) -> Result<Phantom> {
    compose_phantom_with(&meta.config.phantom, meta.class, &meta.config.grid, meta.seed)
}

/// Writes `input.ustn`, `target.ustn` and `meta.json` into `dir`.
pub fn write_sample(dir: &Path, sample: &DatasetSample) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_f32(&dir.join("input.ustn"), &sample.input)?;
    write_f32(&dir.join("target.ustn"), &sample.target)?;
    let path = dir.join("meta.json");
    let json = serde_json::to_vec_pretty(&sample.meta).map_err(|e| Error::json(&path, e))?;
    write_atomic(&path, &json)
}

pub fn read_sample(dir: &Path) -> Result<DatasetSample> {
    let path = dir.join("meta.json");
    let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let meta: SampleMeta = serde_json::from_slice(&text).map_err(|e| Error::json(&path, e))?;
    let input = read_f32::<Ix3>(&dir.join("input.ustn"))?;
    let target = read_f32::<Ix2>(&dir.join("target.ustn"))?;
    if input.shape() != meta.input_shape.as_slice() || target.shape() != meta.target_shape.as_slice() {
        return Err(Error::Shape(format!(
            "{}: input {:?} / target {:?} disagree with meta.json",
            dir.display(),
            input.shape(),
            target.shape()
        )));
    }
    if input.shape()[1..] != *target.shape() {
        return Err(Error::Shape(format!(
            "{}: input planes {:?} vs target {:?}",
            dir.display(),
            &input.shape()[1..],
            target.shape()
        )));
    }
    Ok(DatasetSample { input, target, meta })
}

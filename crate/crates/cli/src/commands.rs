use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use breastsos::dataset::{self, read_sample, sample_phantom, ClassMix, SplitManifest};
use breastsos::estimate::{aggregate, error_vs_depth, evaluate_sample, speckle_brightness_sweep, SweepSpec, DEFAULT_DEPTH_BINS};
use breastsos::phantom::{compose_phantom_with, homogeneous_phantom, save_phantom, load_phantom, ClassKind, GridSpec, SoundSpeedMap};
use breastsos::rng;
use breastsos::sigproc::{
    das_beamform, plane_names, process_channels, stack_model_input, BandpassSpec, BeamformGrid, ChainSpec, TnaDraw,
    TnaSpec,
};
use breastsos::wavesim::{load_channels, save_channels, simulate_planewave, ChannelData, PlaneWaveTx};
use clap::Args;
use ndarray::{s, Array2, Array3, Axis, Ix2, Ix3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{write_run_config, ConfigFile};
use crate::render;
use crate::Failure;

const GRID_FILE: &str = "grid.json";
const PREDICTION: &str = "prediction.ustn";

#[derive(Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenPhantomArgs {
    /// cyst-skin, lesion-skin, skin, gland, lesion, cyst or homogeneous.
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Lateral x axial node count, e.g. 256x384 (arrays are axial-major).
    #[arg(long)]
    pub grid: Option<String>,
    /// Speed of the homogeneous class, m/s.
    #[arg(long)]
    pub speed: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[arg(long)]
    pub phantom: Option<PathBuf>,
    /// Comma-separated steering angles in degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub angles: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ProcessArgs {
    /// Output directory of `simulate`, or a single channel directory.
    #[arg(long)]
    pub channels: Option<PathBuf>,
    /// Probability of thermal noise augmentation.
    #[arg(long)]
    pub tna_prob: Option<f64>,
    /// Fractional bandwidth of the band-pass.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Beamforming speed, m/s.
    #[arg(long)]
    pub c0: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct BuildArgs {
    #[arg(long)]
    pub n: Option<usize>,
    /// `equal` or weights such as `gland:1,cyst:0.5`.
    #[arg(long)]
    pub mix: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Run directory; the corpus goes to `<out>/corpus`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EstimateArgs {
    #[arg(long, conflicts_with = "corpus")]
    pub channels: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Speed sweep as min:max:step, m/s.
    #[arg(long)]
    pub sweep: Option<String>,
    /// JSON output path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RenderArgs {
    /// Dataset sample or `process` output directory.
    #[arg(long)]
    pub sample: Option<PathBuf>,
    #[arg(long)]
    pub dynamic_range_db: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn require(path: Option<&PathBuf>, flag: &str) -> Result<PathBuf, Failure> {
    let p = path.ok_or_else(|| Failure::usage(format!("--{flag} is required")))?;
    if !p.exists() {
        return Err(Failure::usage(format!("missing input: {}", p.display())));
    }
    Ok(p.clone())
}

fn out_dir(out: Option<&PathBuf>, root: &Path, default: &str) -> PathBuf {
    out.cloned().unwrap_or_else(|| root.join(default))
}

pub fn parse_grid(s: &str) -> Result<GridSpec, Failure> {
    let bad = || Failure::usage(format!("--grid `{s}`: expected <nx>x<nz>, e.g. 256x384"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let nx = a.trim().parse().map_err(|_| bad())?;
    let nz = b.trim().parse().map_err(|_| bad())?;
    GridSpec::with_size(nx, nz).map_err(Failure::from)
}

pub fn parse_angles(s: &str) -> Result<Vec<f64>, Failure> {
    let mut v = s
        .split(',')
        .map(|a| a.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| Failure::usage(format!("--angles `{s}`: expected comma-separated degrees")))?;
    v.sort_by(f64::total_cmp);
    if v.is_empty() || v.windows(2).any(|w| w[0] == w[1]) || v.iter().any(|a| !a.is_finite()) {
        return Err(Failure::usage(format!("--angles `{s}`: need distinct finite angles")));
    }
    Ok(v)
}

pub fn parse_sweep(s: &str) -> Result<SweepSpec, Failure> {
    let bad = || Failure::usage(format!("--sweep `{s}`: expected min:max:step"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let [c_min, c_max, c_step] = parts[..] else {
        return Err(bad());
    };
    let spec = SweepSpec {
        c_min,
        c_max,
        c_step,
        ..SweepSpec::default()
    };
    spec.validate()?;
    Ok(spec)
}

fn angle_dir(angle: f64) -> String {
    format!("angle_{angle:+}")
}

pub fn gen_phantom(a: &GenPhantomArgs, file: &ConfigFile, root: &Path) -> Result<(), Failure> {
    let class: ClassKind = a
        .class
        .as_deref()
        .ok_or_else(|| Failure::usage("--class is required"))?
        .parse()
        .map_err(|e: breastsos::Error| Failure::usage(e))?;
    let grid = parse_grid(a.grid.as_deref().unwrap_or("256x384"))?;
    let seed = a.seed.unwrap_or(0);
    let pipeline = file.pipeline()?;
    let phantom = if class == ClassKind::Homogeneous {
        homogeneous_phantom(&pipeline.phantom, &grid, a.speed.unwrap_or(1540.0), seed)?
    } else {
        if a.speed.is_some() {
            return Err(Failure::usage("--speed applies only to the homogeneous class"));
        }
        compose_phantom_with(&pipeline.phantom, class, &grid, seed)?
    };
    let out = out_dir(a.out.as_ref(), root, "phantom");
    save_phantom(&out, &phantom)?;
    write_run_config(&out, "gen-phantom", file, a, Some(&pipeline))?;
    println!("{class} phantom ({}x{}) written to {}", grid.nz, grid.nx, out.display());
    Ok(())
}

pub fn simulate(a: &SimulateArgs, file: &ConfigFile, root: &Path) -> Result<(), Failure> {
    let dir = require(a.phantom.as_ref(), "phantom")?;
    let angles = match &a.angles {
        Some(s) => parse_angles(s)?,
        None => file.pipeline()?.angles,
    };
    let pipeline = file.pipeline()?;
    let phantom = load_phantom(&dir)?;
    let tx = &pipeline.transducer;
    let out = out_dir(a.out.as_ref(), root, "channels");
    for &angle in &angles {
        let pw = PlaneWaveTx::new(tx, angle, pipeline.c_ref, tx.center_freq)?;
        let ch = simulate_planewave(&phantom, tx, &pw, &pipeline.solver)?;
        save_channels(&out.join(angle_dir(angle)), &ch)?;
        log::info!("{angle}°: {} samples at {:.1} MHz", ch.n_samples(), ch.fs / 1e6);
    }
    let grid_json = serde_json::to_vec_pretty(&phantom.grid).map_err(anyhow::Error::from)?;
    fs::write(out.join(GRID_FILE), grid_json).context("writing grid.json")?;
    write_run_config(&out, "simulate", file, a, Some(&pipeline))?;
    println!("{} transmissions written to {}", angles.len(), out.display());
    Ok(())
}

/// Channel sets under `dir`, by ascending angle.
fn load_channel_sets(dir: &Path) -> Result<Vec<ChannelData>, Failure> {
    if dir.join("meta.json").exists() {
        return Ok(vec![load_channels(dir)?]);
    }
    let mut sets = Vec::new();
    let entries = fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
    for entry in entries {
        let p = entry.map_err(anyhow::Error::from)?.path();
        if p.join("meta.json").exists() && p.join("samples.ustn").exists() {
            sets.push(load_channels(&p)?);
        }
    }
    if sets.is_empty() {
        return Err(Failure::usage(format!("no channel data under {}", dir.display())));
    }
    sets.sort_by(|a, b| a.angle.total_cmp(&b.angle));
    Ok(sets)
}

#[derive(Serialize)]
struct ProcessMeta {
    angles: Vec<f64>,
    input_planes: Vec<String>,
    c0: f64,
    fractional_bandwidth: f64,
    tna: TnaDraw,
    beamform_grid: BeamformGrid,
    processing: Vec<Vec<String>>,
}

pub fn process(a: &ProcessArgs, file: &ConfigFile, root: &Path) -> Result<(), Failure> {
    let dir = require(a.channels.as_ref(), "channels")?;
    let pipeline = file.pipeline()?;
    let tx = &pipeline.transducer;
    let sets = load_channel_sets(&dir)?;
    let c0 = a.c0.unwrap_or(pipeline.c0);
    let bp = BandpassSpec {
        center_freq: tx.center_freq,
        fractional_bandwidth: a.bandwidth.unwrap_or(BandpassSpec::default().fractional_bandwidth),
    };
    bp.validate()?;
    let tna_spec = TnaSpec {
        probability: a.tna_prob.unwrap_or(0.0),
        ..pipeline.tna.unwrap_or_default()
    };
    tna_spec.validate()?;
    let seed = sets[0].provenance.phantom_seed;
    let tna = tna_spec.draw(seed);
    let grid = match fs::read(dir.join(GRID_FILE)) {
        Ok(bytes) => {
            let g: GridSpec = serde_json::from_slice(&bytes).map_err(|e| Failure::usage(format!("grid.json: {e}")))?;
            BeamformGrid::covering(&g, c0)
        }
        Err(_) => BeamformGrid::standard().with_c0(c0),
    };
    let chain = ChainSpec {
        target_fs: pipeline.target_fs,
        bandpass: Some(bp),
        noise_db: tna.level_db,
    };
    let out = out_dir(a.out.as_ref(), root, "iq");
    let mut images = Vec::new();
    let mut processing = Vec::new();
    for (k, ch) in sets.iter().enumerate() {
        let iq = process_channels(ch, &chain, rng::derive(seed, 0x4E01 + k as u64))?;
        let img = das_beamform(&iq, tx, &grid)?;
        img.save(&out, &format!("iq_{:+}", ch.angle))?;
        processing.push(iq.processing);
        images.push(img);
    }
    let input = stack_model_input(&images)?;
    dataset::tensor::write_f32(&out.join("input.ustn"), &input)?;
    let angles: Vec<f64> = images.iter().map(|i| i.angle).collect();
    let meta = ProcessMeta {
        input_planes: plane_names(&angles),
        angles,
        c0,
        fractional_bandwidth: bp.fractional_bandwidth,
        tna,
        beamform_grid: grid,
        processing,
    };
    fs::write(out.join("meta.json"), serde_json::to_vec_pretty(&meta).map_err(anyhow::Error::from)?)
        .context("writing meta.json")?;
    write_run_config(&out, "process", file, a, Some(&pipeline))?;
    println!("{} IQ images written to {}", images.len(), out.display());
    Ok(())
}

pub fn build_dataset(a: &BuildArgs, file: &ConfigFile, root: &Path) -> Result<(), Failure> {
    let n = a.n.ok_or_else(|| Failure::usage("--n is required"))?;
    let mix: ClassMix = a.mix.as_deref().unwrap_or("equal").parse()?;
    let seed = a.seed.unwrap_or(0);
    let jobs = a.jobs.unwrap_or(1);
    let pipeline = file.pipeline()?;
    if n < 1 || jobs < 1 {
        return Err(Failure::usage("--n and --jobs must be positive"));
    }
    let out = out_dir(a.out.as_ref(), root, "dataset");
    let corpus = out.join("corpus");
    write_run_config(&out, "build-dataset", file, a, Some(&pipeline))?;
    let manifest = dataset::build_dataset(&corpus, &pipeline, n, &mix, seed, jobs)?;
    let stats = dataset::corpus_stats(&corpus)?;
    fs::write(out.join("stats.json"), serde_json::to_vec_pretty(&stats).map_err(anyhow::Error::from)?)
        .context("writing stats.json")?;
    println!(
        "{n} samples ({} train, {} val) written to {}",
        manifest.train.len(),
        manifest.val.len(),
        corpus.display()
    );
    Ok(())
}

pub fn estimate(a: &EstimateArgs, file: &ConfigFile, root: &Path) -> Result<(), Failure> {
    let pipeline = file.pipeline()?;
    let report = a.report.clone();
    if let Some(dir) = &a.channels {
        let dir = require(Some(dir), "channels")?;
        let sweep = parse_sweep(a.sweep.as_deref().unwrap_or("1400:1700:5"))?;
        let sets = load_channel_sets(&dir)?;
        let iqs = sets
            .iter()
            .map(|ch| process_channels(ch, &ChainSpec::default(), 0))
            .collect::<breastsos::Result<Vec<_>>>()?;
        let result = speckle_brightness_sweep(&iqs, &pipeline.transducer, &sweep)?;
        if let Some(path) = &report {
            write_json(path, &result)?;
        }
        write_run_config(&run_dir(report.as_deref(), root), "estimate", file, a, Some(&pipeline))?;
        return match result.c_hat {
            Some(c) => {
                println!("c_hat = {c:.2} m/s");
                Ok(())
            }
            None => Err(Failure::Runtime(anyhow!("brightness curve has no clear peak"))),
        };
    }
    let corpus = require(a.corpus.as_ref(), "channels or --corpus")?;
    let manifest = SplitManifest::load(&corpus)?;
    let mut evals = Vec::new();
    let (mut ests, mut tgts) = (Vec::new(), Vec::new());
    let mut baseline = 0;
    for entry in &manifest.samples {
        let sdir = manifest.sample_dir(&corpus, &entry.id);
        let sample = read_sample(&sdir)?;
        let target = SoundSpeedMap(sample.target.mapv(f64::from));
        let est = if sdir.join(PREDICTION).exists() {
            let p = dataset::tensor::read_f32::<Ix2>(&sdir.join(PREDICTION))?;
            SoundSpeedMap(p.mapv(f64::from))
        } else {
            baseline += 1;
            SoundSpeedMap::filled(target.shape(), sample.meta.beamform_grid.c0)
        };
        let labels = sample_phantom(&sample.meta)?.labels;
        evals.push(evaluate_sample(&est, &target, &labels)?);
        ests.push(est);
        tgts.push(target);
    }
    if baseline > 0 {
        log::warn!("{baseline} samples have no {PREDICTION}; scored the constant beamforming speed instead");
    }
    let bins = DEFAULT_DEPTH_BINS.min(tgts[0].shape().0);
    let profile = error_vs_depth(&ests, &tgts, bins)?;
    let rep = aggregate(evals, Some(profile));
    for (class, e) in &rep.per_class {
        println!(
            "{class}: {} samples, pixel MAE {:.2} m/s, region MAE {:.2} ± {:.2} m/s",
            e.samples, e.pixel_mae, e.region_mae, e.region_error_std
        );
    }
    if let Some(path) = &report {
        write_json(path, &rep)?;
    }
    write_run_config(&run_dir(report.as_deref(), root), "estimate", file, a, Some(&pipeline))?;
    Ok(())
}

fn run_dir(report: Option<&Path>, root: &Path) -> PathBuf {
    match report.and_then(Path::parent) {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => root.to_path_buf(),
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), Failure> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    let mut json = serde_json::to_vec_pretty(v).map_err(anyhow::Error::from)?;
    json.push(b'\n');
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Complex image of plane pair `k` of a stacked input.
fn plane_pair(input: &Array3<f32>, k: usize) -> Array2<Complex64> {
    let re = input.index_axis(Axis(0), 2 * k);
    let im = input.index_axis(Axis(0), 2 * k + 1);
    ndarray::Zip::from(&re)
        .and(&im)
        .map_collect(|&r, &i| Complex64::new(f64::from(r), f64::from(i)))
}

pub fn render(a: &RenderArgs, file: &ConfigFile, root: &Path) -> Result<(), Failure> {
    let dir = require(a.sample.as_ref(), "sample")?;
    let dr = a.dynamic_range_db.unwrap_or(60.0);
    if !(dr > 0.0 && dr.is_finite()) {
        return Err(Failure::usage("--dynamic-range-db must be positive"));
    }
    let input = dataset::tensor::read_f32::<Ix3>(&dir.join("input.ustn"))?;
    if input.shape()[0] % 2 != 0 || input.shape()[0] == 0 {
        return Err(Failure::usage(format!("input.ustn has {} planes, expected re/im pairs", input.shape()[0])));
    }
    let n_angles = input.shape()[0] / 2;
    let labels: Vec<String> = fs::read(dir.join("meta.json"))
        .ok()
        .and_then(|b| serde_json::from_slice::<serde_json::Value>(&b).ok())
        .and_then(|v| serde_json::from_value::<Vec<String>>(v.get("input_planes")?.clone()).ok())
        .filter(|names| names.len() == 2 * n_angles)
        .map(|names| names.iter().step_by(2).map(|n| n.split(':').next().unwrap_or("").to_string()).collect())
        .unwrap_or_else(|| (0..n_angles).map(|k| format!("plane{k}")).collect());
    let out = out_dir(a.out.as_ref(), root, "render");
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut compound = Array2::<Complex64>::zeros((input.shape()[1], input.shape()[2]));
    for (k, label) in labels.iter().enumerate() {
        let img = plane_pair(&input, k);
        compound += &img;
        let env = img.mapv(|z| z.norm());
        render::save_gray(&out.join(format!("bmode_{label}.png")), &render::bmode(env.view(), dr))?;
    }
    let env = compound.mapv(|z| z.norm());
    render::save_gray(&out.join("bmode.png"), &render::bmode(env.view(), dr))?;
    for (name, png) in [("target.ustn", "speed.png"), (PREDICTION, "prediction.png")] {
        let p = dir.join(name);
        if p.exists() {
            let speed = dataset::tensor::read_f32::<Ix2>(&p)?;
            render::save_speed(&out.join(png), speed.slice(s![.., ..]))?;
        }
    }
    write_run_config(&out, "render", file, a, None)?;
    println!("rendered {} to {}", dir.display(), out.display());
    Ok(())
}

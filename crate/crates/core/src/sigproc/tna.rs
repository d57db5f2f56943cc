use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, Stream};
use crate::wavesim::ChannelData;
use crate::{Error, Result};

/// Thermal noise augmentation settings. Levels are in dB relative to the
/// RMS of the transmitted pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TnaSpec {
    pub min_db: f64,
    pub max_db: f64,
    pub probability: f64,
}

impl Default for TnaSpec {
    fn default() -> Self {
        TnaSpec {
            min_db: -120.0,
            max_db: -80.0,
            probability: 0.2,
        }
    }
}

/// Outcome of the augmentation decision for one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TnaDraw {
    /// Noise level in dB, `None` when no noise was added.
    pub level_db: Option<f64>,
}

impl TnaDraw {
    pub fn applied(&self) -> bool {
        self.level_db.is_some()
    }
}

impl TnaSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_db <= self.max_db) || !self.min_db.is_finite() || !self.max_db.is_finite() {
            return Err(Error::param("tna", "need finite min_db <= max_db"));
        }
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::param("tna probability", "must lie in [0, 1]"));
        }
        Ok(())
    }

    fn decide(&self, rng: &mut ChaCha8Rng) -> TnaDraw {
        let hit = rng.random::<f64>() < self.probability;
        let level = rng.random_range(self.min_db..=self.max_db);
        TnaDraw {
            level_db: hit.then_some(level),
        }
    }

    /// The augmentation decision and level for `seed`, without noise.
    pub fn draw(&self, seed: u64) -> TnaDraw {
        self.decide(&mut stream(seed, Stream::ThermalNoise))
    }
}

/// Randomized thermal noise augmentation.
///
/// With probability `spec.probability` white Gaussian noise of RMS
/// `pulse_rms · 10^(A/20)` is added to every recorded trace, `A` uniform in
/// `[min_db, max_db]`. The decision, the level and the noise all come from
/// the thermal-noise stream of `seed`.
pub fn apply_tna(ch: &ChannelData, spec: &TnaSpec, pulse_rms: f64, seed: u64) -> Result<(ChannelData, TnaDraw)> {
    spec.validate()?;
    if !(pulse_rms > 0.0) {
        return Err(Error::param("pulse_rms", "must be positive"));
    }
    let mut rng = stream(seed, Stream::ThermalNoise);
    let draw = spec.decide(&mut rng);
    match draw.level_db {
        Some(db) => Ok((add_noise(ch, pulse_rms, db, &mut rng), draw)),
        None => Ok((ch.clone(), draw)),
    }
}

/// Adds noise at exactly `level_db`, bypassing the random decision.
pub fn apply_tna_forced(ch: &ChannelData, level_db: f64, pulse_rms: f64, seed: u64) -> Result<ChannelData> {
    if !(pulse_rms > 0.0) || !level_db.is_finite() {
        return Err(Error::param("tna", "need a positive pulse RMS and a finite level"));
    }
    let mut rng = stream(seed, Stream::ThermalNoise);
    Ok(add_noise(ch, pulse_rms, level_db, &mut rng))
}

fn add_noise(ch: &ChannelData, pulse_rms: f64, level_db: f64, rng: &mut ChaCha8Rng) -> ChannelData {
    let sigma = pulse_rms * 10f64.powf(level_db / 20.0);
    let mut out = ch.samples.clone();
    for (mut row, _) in out.outer_iter_mut().zip(&ch.active).filter(|(_, &a)| a) {
        for v in row.iter_mut() {
            *v += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    ch.with_samples(out, ch.fs, ch.t_start, format!("tna:{level_db}dB"))
}

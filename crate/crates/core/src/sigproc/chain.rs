use serde::{Deserialize, Serialize};

use super::{align_t0, analytic_signal, apply_tna_forced, bandpass, resample, BandpassSpec, IqChannels, PROCESSING_FS};
use crate::wavesim::ChannelData;
use crate::Result;

/// Settings of the channel processing chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub target_fs: f64,
    pub bandpass: Option<BandpassSpec>,
    /// Thermal noise level in dB re the pulse RMS, if noise is added.
    pub noise_db: Option<f64>,
}

impl Default for ChainSpec {
    fn default() -> Self {
        ChainSpec {
            target_fs: PROCESSING_FS,
            bandpass: Some(BandpassSpec::default()),
            noise_db: None,
        }
    }
}

/// Resample, band-pass, add noise, align to t0 and take the analytic
/// signal, in that order. `noise_seed` keys the noise realization.
pub fn process_channels(ch: &ChannelData, spec: &ChainSpec, noise_seed: u64) -> Result<IqChannels> {
    let mut cur = resample(ch, spec.target_fs)?;
    if let Some(bp) = &spec.bandpass {
        cur = bandpass(&cur, bp)?;
    }
    if let Some(db) = spec.noise_db {
        cur = apply_tna_forced(&cur, db, ch.pulse_rms, noise_seed)?;
    }
    cur = align_t0(&cur, cur.t0)?;
    analytic_signal(&cur)
}

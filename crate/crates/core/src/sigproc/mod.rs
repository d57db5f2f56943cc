//! Channel data to beamformed IQ images.
//!
//! The processing chain used for dataset samples is, in order:
//! [`resample`] → [`bandpass`] → [`apply_tna`] → [`align_t0`] →
//! [`analytic_signal`] → [`das_beamform`], once per steering angle, and
//! finally [`stack_model_input`].

mod align;
mod bandpass;
mod beamform;
mod chain;
pub mod filters;
mod hilbert;
mod iq;
mod resample;
mod stack;
mod tna;

pub use align::align_t0;
pub use bandpass::{bandpass, BandpassSpec, BANDWIDTH_RANGE};
pub use chain::{process_channels, ChainSpec};
pub use beamform::{das_beamform, BeamformGrid, IQImage, TransmitModel};
pub use hilbert::analytic_trace;
pub use iq::{analytic_signal, IqChannels};
pub use resample::resample;
pub use stack::{plane_names, stack_model_input, unstack_model_input};
pub use tna::{apply_tna, apply_tna_forced, TnaDraw, TnaSpec};

/// Rate of the processed channel data, Hz.
pub const PROCESSING_FS: f64 = 40e6;

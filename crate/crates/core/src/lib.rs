//! Synthetic breast-ultrasound data for learned sound-speed regression.
//!
//! The crate covers the whole batch pipeline:
//!
//! * [`phantom`] builds randomized 2D breast phantoms (gland texture, skin,
//!   cysts and lesions) with sound-speed, density and scatterer maps plus a
//!   region-averaged sound-speed target.
//! * [`wavesim`] fires steered plane waves from a modeled linear array into a
//!   phantom and records per-element RF channel data with a staggered-grid
//!   acoustic solver.
//! * [`sigproc`] turns channel data into beamformed complex IQ images:
//!   resampling, impulse-response band-pass, thermal noise augmentation,
//!   t0 alignment, analytic signal and delay-and-sum.
//! * [`estimate`] holds the speckle-brightness sound-speed estimator and the
//!   error metrics used to score sound-speed maps.
//! * [`dataset`] assembles reproducible corpora on disk in the `USTN` tensor
//!   format with class-balanced validation splits.
//!
//! Array convention: every 2D map is stored row-major as `nz × nx`
//! (axial rows, lateral columns).

pub mod dataset;
pub mod error;
pub mod estimate;
pub mod phantom;
pub mod rng;
pub mod sigproc;
pub mod wavesim;

pub use error::{Error, Result};

/// Version tag written into every metadata file produced by the pipeline.
pub const PIPELINE_VERSION: &str = concat!("breastsos-", env!("CARGO_PKG_VERSION"));

//! Sound-speed estimation by speckle brightness, and error metrics for
//! sound-speed maps.

mod metrics;
mod sweep;

pub use metrics::{
    aggregate, error_vs_depth, evaluate_sample, regional_mean_error, temporal_consistency, ClassErrors,
    DepthProfile, ErrorReport, PixelRoi, RegionError, SampleEvaluation, TemporalStats, DEFAULT_DEPTH_BINS,
};
pub use sweep::{speckle_brightness_sweep, Roi, SweepResult, SweepSpec, MIN_CONTRAST, ROI_PIXEL, ROI_REFERENCE_SPEED};

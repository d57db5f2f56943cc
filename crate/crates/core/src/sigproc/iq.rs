use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::analytic_trace;
use crate::wavesim::ChannelData;
use crate::{Error, Result};

/// Analytic (complex RF) channel data of one transmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqChannels {
    #[serde(skip)]
    pub data: Array2<Complex64>,
    pub fs: f64,
    pub t_start: f64,
    pub t0: f64,
    pub angle: f64,
    pub c_ref: f64,
    pub pulse_duration: f64,
    pub active: Vec<bool>,
    /// Processing steps applied since simulation, in order.
    pub processing: Vec<String>,
}

impl IqChannels {
    pub fn n_elements(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }
}

/// Per-trace analytic signal. The real part reproduces the input.
pub fn analytic_signal(ch: &ChannelData) -> Result<IqChannels> {
    if ch.n_samples() < 16 {
        return Err(Error::param(
            "samples",
            format!("{} samples per trace, need at least 16", ch.n_samples()),
        ));
    }
    let mut data = Array2::zeros(ch.samples.dim());
    for (src, mut dst) in ch.samples.outer_iter().zip(data.outer_iter_mut()) {
        let z = analytic_trace(src.as_slice().expect("channel rows are contiguous"));
        dst.iter_mut().zip(z).for_each(|(d, z)| *d = z);
    }
    Ok(IqChannels {
        data,
        fs: ch.fs,
        t_start: ch.t_start,
        t0: ch.t0,
        angle: ch.angle,
        c_ref: ch.c_ref,
        pulse_duration: ch.pulse_duration,
        active: ch.active.clone(),
        processing: ch.provenance.processing.clone(),
    })
}

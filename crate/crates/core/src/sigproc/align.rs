use crate::wavesim::ChannelData;
use crate::{Error, Result};

/// Drops every sample recorded before `t0`.
///
/// The clock is kept: sample 0 of the result is the first sample at or
/// after `t0`, and `t_start` records its exact time, so it trails `t0` by
/// less than one sample period. This removes the transmitted pulse, which
/// ends at `t0`.
pub fn align_t0(ch: &ChannelData, t0: f64) -> Result<ChannelData> {
    let offset = (t0 - ch.t_start) * ch.fs;
    if !(offset > -0.5) {
        return Err(Error::param(
            "t0",
            format!("{t0} s precedes the first sample at {} s", ch.t_start),
        ));
    }
    // tolerate rounding in t0 itself
    let k0 = (offset - 1e-6).ceil().max(0.0) as usize;
    if k0 >= ch.n_samples() {
        return Err(Error::param(
            "t0",
            format!("{t0} s is beyond the recording, which ends at {} s", ch.time(ch.n_samples())),
        ));
    }
    let samples = ch.samples.slice(ndarray::s![.., k0..]).to_owned();
    Ok(ch.with_samples(samples, ch.fs, ch.time(k0), format!("align_t0:{t0}")))
}

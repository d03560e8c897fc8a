//! Serialization time over a link.

use crate::error::{Error, Result};
use crate::fabric::frame::FRAME_HEADER_BYTES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub bytes_per_sec: f64,
    /// Header bytes added to every frame.
    pub frame_overhead: usize,
    /// Payload bytes per frame; 0 sends the data unframed.
    pub max_payload: usize,
    pub latency_s: f64,
}

impl LinkParams {
    pub fn optical(bits_per_sec: f64, latency_s: f64, max_payload: usize) -> Self {
        LinkParams { bytes_per_sec: bits_per_sec / 8.0, frame_overhead: FRAME_HEADER_BYTES, max_payload, latency_s }
    }

    pub fn raw(bytes_per_sec: f64) -> Self {
        LinkParams { bytes_per_sec, frame_overhead: 0, max_payload: 0, latency_s: 0.0 }
    }
}

/// `latency + (bytes + frames * overhead) / bandwidth`.
pub fn transfer_time(bytes: usize, link: &LinkParams) -> Result<f64> {
    if !(link.bytes_per_sec > 0.0) || !link.bytes_per_sec.is_finite() {
        return Err(Error::Link(format!("link bandwidth must be positive, got {}", link.bytes_per_sec)));
    }
    if bytes == 0 {
        return Err(Error::Link("transfer of zero bytes".into()));
    }
    let frames = if link.max_payload == 0 { 0 } else { bytes.div_ceil(link.max_payload) };
    let wire = bytes + frames * link.frame_overhead;
    Ok(link.latency_s + wire as f64 / link.bytes_per_sec)
}

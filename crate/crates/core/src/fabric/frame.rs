//! MAC framing of stream payloads for the board-to-board links.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::MacAddr;
use crate::error::{Error, Result};
use crate::fabric::ip::BEAT_BYTES;

pub const DEFAULT_MAX_PAYLOAD: usize = 1500;
pub const JUMBO_MAX_PAYLOAD: usize = 9000;
/// dst + src + type/length.
pub const FRAME_HEADER_BYTES: usize = 14;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacFrame {
    pub dst_mac: MacAddr,
    pub src_mac: MacAddr,
    pub type_length: u16,
    pub payload: Vec<u8>,
}

impl MacFrame {
    pub fn wire_bytes(&self) -> usize {
        FRAME_HEADER_BYTES + self.payload.len()
    }
}

/// Splits `payload` into frames of `max_payload` bytes, the last one shorter.
pub fn mfh_encap(payload: &[u8], src_mac: MacAddr, dst_mac: MacAddr, max_payload: usize) -> Result<Vec<MacFrame>> {
    if payload.is_empty() {
        return Err(Error::Frame("empty payload".into()));
    }
    if max_payload < BEAT_BYTES || max_payload > usize::from(u16::MAX) {
        return Err(Error::Frame(format!("max payload {max_payload} outside {BEAT_BYTES}..=65535")));
    }
    Ok(payload
        .chunks(max_payload)
        .map(|p| MacFrame { dst_mac, src_mac, type_length: p.len() as u16, payload: p.to_vec() })
        .collect())
}

/// Reassembles one transfer. All frames must carry the MAC pair of the first.
pub fn mfh_decap(frames: &[MacFrame]) -> Result<Vec<u8>> {
    let first = frames.first().ok_or_else(|| Error::Frame("no frames".into()))?;
    let mut out = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        if (f.src_mac, f.dst_mac) != (first.src_mac, first.dst_mac) {
            return Err(Error::Frame(format!(
                "frame {i} from {} to {} interleaved into transfer {} -> {}",
                f.src_mac, f.dst_mac, first.src_mac, first.dst_mac
            )));
        }
        if f.payload.is_empty() {
            return Err(Error::Frame(format!("frame {i} has an empty payload")));
        }
        if usize::from(f.type_length) != f.payload.len() {
            return Err(Error::Frame(format!(
                "frame {i}: type/length {} but {} payload bytes",
                f.type_length,
                f.payload.len()
            )));
        }
        out.extend_from_slice(&f.payload);
    }
    Ok(out)
}

/// What a board does with an arriving frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameAction {
    Deliver,
    Forward,
}

/// Receive side of a board's NET ports: accepts frames for local MACs and,
/// when enabled, passes the rest on.
#[derive(Debug, Clone)]
pub struct MacFrameHandler {
    local: BTreeSet<MacAddr>,
    forwarding: bool,
}

impl MacFrameHandler {
    pub fn new(local_macs: impl IntoIterator<Item = MacAddr>, forwarding: bool) -> Self {
        MacFrameHandler { local: local_macs.into_iter().collect(), forwarding }
    }

    pub fn classify(&self, frame: &MacFrame) -> Result<FrameAction> {
        if self.local.contains(&frame.dst_mac) {
            Ok(FrameAction::Deliver)
        } else if self.forwarding {
            Ok(FrameAction::Forward)
        } else {
            Err(Error::Misrouted(format!(
                "misrouted frame: {} is not local and forwarding is disabled",
                frame.dst_mac
            )))
        }
    }

    /// Decapsulates frames addressed to this board.
    pub fn receive(&self, frames: &[MacFrame]) -> Result<Vec<u8>> {
        for f in frames {
            if self.classify(f)? != FrameAction::Deliver {
                return Err(Error::Misrouted(format!("frame for {} reached the wrong board", f.dst_mac)));
            }
        }
        mfh_decap(frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn macs() -> (MacAddr, MacAddr) {
        (MacAddr::for_port(0, 0), MacAddr::for_port(1, 1))
    }

    #[test]
    fn segmentation() {
        let (s, d) = macs();
        let f = mfh_encap(&[7; 64], s, d, DEFAULT_MAX_PAYLOAD).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].type_length, 64);
        let p: Vec<u8> = (0..4000).map(|i| i as u8).collect();
        let f = mfh_encap(&p, s, d, DEFAULT_MAX_PAYLOAD).unwrap();
        assert_eq!(f.iter().map(|x| x.payload.len()).collect::<Vec<_>>(), vec![1500, 1500, 1000]);
        assert_eq!(mfh_decap(&f).unwrap(), p);
        assert!(mfh_encap(&[], s, d, 1500).is_err());
        assert!(mfh_encap(&[1], s, d, 16).is_err());
    }

    #[test]
    fn decap_errors() {
        let (s, d) = macs();
        let mut f = mfh_encap(&[1; 3000], s, d, 1500).unwrap();
        f[1].type_length = 10;
        assert!(mfh_decap(&f).is_err());
        let mut f = mfh_encap(&[1; 3000], s, d, 1500).unwrap();
        f[1].src_mac = MacAddr::for_port(2, 0);
        assert!(mfh_decap(&f).is_err());
        let empty = MacFrame { dst_mac: d, src_mac: s, type_length: 0, payload: vec![] };
        assert!(mfh_decap(&[empty]).is_err());
        assert!(mfh_decap(&[]).is_err());
    }

    #[test]
    fn handler_routing() {
        let (s, d) = macs();
        let f = mfh_encap(&[1; 100], s, d, 1500).unwrap();
        let board1 = MacFrameHandler::new((0..4).map(|p| MacAddr::for_port(1, p)), false);
        assert_eq!(board1.receive(&f).unwrap(), vec![1; 100]);
        let board2 = MacFrameHandler::new((0..4).map(|p| MacAddr::for_port(2, p)), false);
        let err = board2.receive(&f).unwrap_err();
        assert!(err.to_string().contains("misrouted frame"));
        let relay = MacFrameHandler::new((0..4).map(|p| MacAddr::for_port(2, p)), true);
        assert_eq!(relay.classify(&f[0]).unwrap(), FrameAction::Forward);
    }
}

//! Keyframe codec abstraction and the built-in 16-bit raw codec.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Frame, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum CodecId {
    Raw16 = 0,
    PngLossless = 1,
    External = 2,
}

impl CodecId {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(CodecId::Raw16),
            1 => Ok(CodecId::PngLossless),
            2 => Ok(CodecId::External),
            _ => Err(Error::Malformed(format!("unknown keyframe codec id {v}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CodecId::Raw16 => "raw16",
            CodecId::PngLossless => "png",
            CodecId::External => "external",
        }
    }
}

/// Stores keyframes standalone. Implementations must be deterministic.
pub trait KeyframeCodec: Sync {
    fn id(&self) -> CodecId;
    fn encode(&self, frame: &Frame) -> Result<Vec<u8>>;
    fn decode(&self, bytes: &[u8]) -> Result<Frame>;
}

/// Width and height as little-endian `u32`s.
pub const RAW16_HEADER_LEN: usize = 8;

/// Fixed-point 16 bits per channel, little-endian, after an 8-byte
/// dimension header. Values are clamped to `[0, 1]` first.
#[derive(Debug, Clone, Copy, Default)]
pub struct Raw16;

impl KeyframeCodec for Raw16 {
    fn id(&self) -> CodecId {
        CodecId::Raw16
    }

    fn encode(&self, frame: &Frame) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(RAW16_HEADER_LEN + frame.data.len() * 2);
        out.extend_from_slice(&(frame.width as u32).to_le_bytes());
        out.extend_from_slice(&(frame.height as u32).to_le_bytes());
        for v in &frame.data {
            let q = libm::roundf(v.clamp(0.0, 1.0) * 65535.0) as u16;
            out.extend_from_slice(&q.to_le_bytes());
        }
        Ok(out)
    }

    fn decode(&self, bytes: &[u8]) -> Result<Frame> {
        if bytes.len() < RAW16_HEADER_LEN {
            return Err(Error::Codec("raw16 payload shorter than its header".into()));
        }
        let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let body = &bytes[RAW16_HEADER_LEN..];
        if body.len() != w * h * 6 {
            return Err(Error::Codec(format!(
                "raw16 payload has {} bytes for {w}x{h}",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f32 / 65535.0)
            .collect();
        Frame::from_data(w, h, data)
    }
}

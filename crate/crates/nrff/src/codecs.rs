//! Keyframe codecs that need the standard library.

use std::path::Path;
use std::process::Command;

use nrff_core::codec::{CodecId, KeyframeCodec, Raw16};
use nrff_core::Frame;

use crate::error::{Error, Result};
use crate::frame_io::{decode_png, decode_ppm, encode_png, encode_ppm};

/// Lossless 8-bit RGB PNG. Keyframes are quantized to 8 bits on encode.
#[derive(Debug, Clone, Copy, Default)]
pub struct PngLossless;

impl KeyframeCodec for PngLossless {
    fn id(&self) -> CodecId {
        CodecId::PngLossless
    }

    fn encode(&self, frame: &Frame) -> nrff_core::Result<Vec<u8>> {
        encode_png(frame).map_err(nrff_core::Error::Codec)
    }

    fn decode(&self, bytes: &[u8]) -> nrff_core::Result<Frame> {
        decode_png(bytes).map_err(nrff_core::Error::Codec)
    }
}

pub const EXTERNAL_ENCODE_VAR: &str = "NRFF_EXTERNAL_ENCODE";
pub const EXTERNAL_DECODE_VAR: &str = "NRFF_EXTERNAL_DECODE";

/// Shells out to user commands, run with `sh -c` after substituting
/// `{input}` and `{output}` with file paths. The encoder reads a PPM and
/// writes any payload; the decoder reads that payload and writes a PPM. The
/// commands must be deterministic for encodes to be reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct External {
    pub encode_cmd: Option<String>,
    pub decode_cmd: Option<String>,
}

impl External {
    pub fn from_env() -> Self {
        Self {
            encode_cmd: std::env::var(EXTERNAL_ENCODE_VAR).ok().filter(|s| !s.is_empty()),
            decode_cmd: std::env::var(EXTERNAL_DECODE_VAR).ok().filter(|s| !s.is_empty()),
        }
    }

    fn run(
        &self,
        cmd: Option<&String>,
        var: &str,
        input: &[u8],
        in_name: &str,
        out_name: &str,
    ) -> nrff_core::Result<Vec<u8>> {
        let cmd = cmd
            .ok_or_else(|| nrff_core::Error::Codec(format!("external keyframe codec is not configured (set {var})")))?;
        let codec_err = |m: String| nrff_core::Error::Codec(m);
        let dir = tempfile::tempdir().map_err(|e| codec_err(format!("temporary directory: {e}")))?;
        let (inp, out) = (dir.path().join(in_name), dir.path().join(out_name));
        std::fs::write(&inp, input).map_err(|e| codec_err(format!("{}: {e}", inp.display())))?;
        let line = cmd.replace("{input}", &quote(&inp)).replace("{output}", &quote(&out));
        let status = Command::new("sh")
            .arg("-c")
            .arg(&line)
            .status()
            .map_err(|e| codec_err(format!("running {line:?}: {e}")))?;
        if !status.success() {
            return Err(codec_err(format!("{line:?} exited with {status}")));
        }
        std::fs::read(&out).map_err(|e| codec_err(format!("{} after {line:?}: {e}", out.display())))
    }
}

fn quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

impl KeyframeCodec for External {
    fn id(&self) -> CodecId {
        CodecId::External
    }

    fn encode(&self, frame: &Frame) -> nrff_core::Result<Vec<u8>> {
        self.run(
            self.encode_cmd.as_ref(),
            EXTERNAL_ENCODE_VAR,
            &encode_ppm(frame),
            "key.ppm",
            "key.bin",
        )
    }

    fn decode(&self, bytes: &[u8]) -> nrff_core::Result<Frame> {
        let ppm = self.run(
            self.decode_cmd.as_ref(),
            EXTERNAL_DECODE_VAR,
            bytes,
            "key.bin",
            "key.ppm",
        )?;
        decode_ppm(&ppm).map_err(|m| nrff_core::Error::Codec(format!("external decoder output: {m}")))
    }
}

pub fn parse_codec(name: &str) -> Result<CodecId> {
    match name {
        "raw16" => Ok(CodecId::Raw16),
        "png" | "png_lossless" => Ok(CodecId::PngLossless),
        "external" => Ok(CodecId::External),
        _ => Err(Error::Usage(format!(
            "unknown keyframe codec {name:?} (raw16, png, external)"
        ))),
    }
}

/// The codec implementation for `id`; external commands come from the
/// environment.
pub fn codec_for(id: CodecId) -> Box<dyn KeyframeCodec> {
    match id {
        CodecId::Raw16 => Box::new(Raw16),
        CodecId::PngLossless => Box::new(PngLossless),
        CodecId::External => Box::new(External::from_env()),
    }
}

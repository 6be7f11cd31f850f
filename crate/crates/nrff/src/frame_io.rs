//! Videos as numbered image sequences: binary PPM (P6) or 8-bit PNG.
//!
//! Files are ordered by the last run of digits in their name, and loading
//! fails on gaps, duplicates or mixed frame sizes. Saved sequences are named
//! `frame_0000.ppm`, `frame_0001.ppm`, ...

use std::fs;
use std::path::{Path, PathBuf};

use nrff_core::Frame;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImageFormat {
    #[default]
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Ppm => "ppm",
            ImageFormat::Png => "png",
        }
    }

    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "ppm" => Some(ImageFormat::Ppm),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ppm" => Ok(ImageFormat::Ppm),
            "png" => Ok(ImageFormat::Png),
            _ => Err(Error::Usage(format!(
                "unknown image format {s:?} (expected ppm or png)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoSequence {
    pub frames: Vec<Frame>,
    pub fps: Option<f64>,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>) -> Self {
        Self { frames, fps: None }
    }
}

/// 8-bit value of a real channel: clamped, then rounded to nearest.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn to_bytes(frame: &Frame) -> Vec<u8> {
    frame.data.iter().map(|v| quantize(*v)).collect()
}

fn from_bytes(width: usize, height: usize, rgb: &[u8]) -> Result<Frame, String> {
    let data = rgb.iter().map(|b| *b as f32 / 255.0).collect();
    Frame::from_data(width, height, data).map_err(|e| e.to_string())
}

pub fn encode_ppm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend(to_bytes(frame));
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Frame, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PPM header".into());
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| "PPM header is not ASCII")?);
    }
    if fields[0] != "P6" {
        return Err(format!("not a binary PPM (magic {:?})", fields[0]));
    }
    let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("bad PPM {what} {s:?}"));
    let (w, h, maxval) = (
        num(fields[1], "width")?,
        num(fields[2], "height")?,
        num(fields[3], "maxval")?,
    );
    if maxval != 255 {
        return Err(format!("PPM maxval {maxval} unsupported (only 8-bit 255)"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let body = bytes.get(pos + 1..).unwrap_or_default();
    let n = w * h * 3;
    if body.len() < n {
        return Err(format!("PPM raster has {} bytes, {w}x{h} needs {n}", body.len()));
    }
    from_bytes(w, h, &body[..n])
}

pub fn encode_png(frame: &Frame) -> Result<Vec<u8>, String> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, frame.width as u32, frame.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| e.to_string())?;
        w.write_image_data(&to_bytes(frame)).map_err(|e| e.to_string())?;
        w.finish().map_err(|e| e.to_string())?;
    }
    Ok(out)
}

/// Decodes any PNG to 8-bit RGB: palettes and low bit depths are expanded,
/// 16-bit samples are reduced, gray is replicated and alpha is dropped.
pub fn decode_png(bytes: &[u8]) -> Result<Frame, String> {
    let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(|e| e.to_string())?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or("PNG too large")?];
    let info = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    let (w, h) = (info.width as usize, info.height as usize);
    let px = &buf[..info.buffer_size()];
    let rgb: Vec<u8> = match info.color_type {
        png::ColorType::Rgb => px.to_vec(),
        png::ColorType::Rgba => px.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => px.iter().flat_map(|g| [*g; 3]).collect(),
        png::ColorType::GrayscaleAlpha => px.chunks_exact(2).flat_map(|p| [p[0]; 3]).collect(),
        png::ColorType::Indexed => return Err("indexed PNG was not expanded".into()),
    };
    from_bytes(w, h, &rgb)
}

pub fn load_frame(path: &Path) -> Result<Frame> {
    let format = ImageFormat::from_path(path).ok_or_else(|| Error::file(path, "not a .ppm or .png file"))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        ImageFormat::Ppm => decode_ppm(&bytes),
        ImageFormat::Png => decode_png(&bytes),
    }
    .map_err(|m| Error::file(path, m))
}

pub fn save_frame(frame: &Frame, path: &Path) -> Result<()> {
    let format = ImageFormat::from_path(path).ok_or_else(|| Error::file(path, "not a .ppm or .png file"))?;
    let bytes = match format {
        ImageFormat::Ppm => encode_ppm(frame),
        ImageFormat::Png => encode_png(frame).map_err(|m| Error::file(path, m))?,
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// `frame_0007.ppm` style names.
pub fn frame_name(index: usize, format: ImageFormat) -> String {
    format!("frame_{index:04}.{}", format.extension())
}

/// Numeric index of a frame file: the last run of digits in its stem.
pub fn frame_index(path: &Path) -> Option<u64> {
    let stem = path.file_stem()?.to_str()?;
    let end = stem.rfind(|c: char| c.is_ascii_digit())? + 1;
    let start = stem[..end].rfind(|c: char| !c.is_ascii_digit()).map_or(0, |i| i + 1);
    stem[start..end].parse().ok()
}

/// Expands a printf-style `%d` / `%04d` in `pattern` for `index`.
fn expand_pattern(pattern: &str, index: usize) -> Option<String> {
    let at = pattern.find('%')?;
    let rest = &pattern[at + 1..];
    let d = rest.find('d')?;
    let spec = &rest[..d];
    if !spec.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let width: usize = if spec.is_empty() { 0 } else { spec.parse().ok()? };
    Some(format!("{}{index:0width$}{}", &pattern[..at], &rest[d + 1..]))
}

fn pattern_files(pattern: &str) -> Result<Vec<PathBuf>> {
    let path = |i| expand_pattern(pattern, i).map(PathBuf::from);
    let first = path(0).ok_or_else(|| Error::Usage(format!("bad frame pattern {pattern:?}")))?;
    let start = if first.exists() { 0 } else { 1 };
    let files: Vec<PathBuf> = (start..).map_while(|i| path(i).filter(|p| p.exists())).collect();
    if files.is_empty() {
        return Err(Error::file(&first, "no frames match the pattern"));
    }
    Ok(files)
}

fn directory_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut indexed = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !path.is_file() || ImageFormat::from_path(&path).is_none() {
            continue;
        }
        let i = frame_index(&path).ok_or_else(|| Error::file(&path, "file name has no frame number"))?;
        indexed.push((i, path));
    }
    if indexed.is_empty() {
        return Err(Error::file(dir, "no .ppm or .png frames"));
    }
    indexed.sort();
    for pair in indexed.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.0 == b.0 {
            return Err(Error::file(
                &b.1,
                format!("duplicates frame number {} of {}", a.0, a.1.display()),
            ));
        }
        if b.0 != a.0 + 1 {
            return Err(Error::file(
                &b.1,
                format!("gap in numbering: frame {} follows {}", b.0, a.0),
            ));
        }
    }
    Ok(indexed.into_iter().map(|(_, p)| p).collect())
}

/// Loads every frame of a directory, or of a `frame_%04d.ppm` style pattern
/// counted up from 0 (or 1) until the first missing file.
pub fn load_sequence(source: &Path) -> Result<VideoSequence> {
    let files = if source.is_dir() {
        directory_files(source)?
    } else {
        let s = source.to_str().filter(|s| s.contains('%'));
        match s {
            Some(p) => pattern_files(p)?,
            None => return Err(Error::file(source, "not a directory or frame pattern")),
        }
    };
    let frames = files.par_iter().map(|p| load_frame(p)).collect::<Result<Vec<_>>>()?;
    let dims = frames[0].dims();
    if let Some(i) = frames.iter().position(|f| f.dims() != dims) {
        let (w, h) = frames[i].dims();
        return Err(Error::file(
            &files[i],
            format!("{w}x{h} differs from {}x{} of {}", dims.0, dims.1, files[0].display()),
        ));
    }
    Ok(VideoSequence::new(frames))
}

/// Writes `frame_0000.ext`... into `dir`, creating it if needed.
pub fn save_sequence(frames: &[Frame], dir: &Path, format: ImageFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths: Vec<PathBuf> = (0..frames.len()).map(|i| dir.join(frame_name(i, format))).collect();
    frames.par_iter().zip(&paths).try_for_each(|(f, p)| save_frame(f, p))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_endpoints_and_header_comments() {
        let f = decode_ppm(b"P6 # comment\n2 1\n# another\n255\n\xff\x00\x80\x00\xff\x00").unwrap();
        assert_eq!(f.get(0, 0), [1.0, 0.0, 128.0 / 255.0]);
        assert_eq!(f.get(1, 0), [0.0, 1.0, 0.0]);
        assert!(decode_ppm(b"P3\n1 1\n255\n").is_err());
        assert!(decode_ppm(b"P6\n2 2\n255\n\x00").is_err());
        assert!(decode_ppm(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00").is_err());
    }

    #[test]
    fn png_round_trip_is_exact_at_eight_bits() {
        let f = Frame::from_fn(5, 3, |x, y| [x as f32 / 4.0, y as f32 / 2.0, 0.5]);
        let q = decode_png(&encode_png(&f).unwrap()).unwrap();
        assert_eq!(decode_png(&encode_png(&q).unwrap()).unwrap(), q);
        assert_eq!(q.get(4, 2), [1.0, 1.0, 128.0 / 255.0]);
    }

    #[test]
    fn indices_and_patterns() {
        assert_eq!(frame_index(Path::new("a/frame_0012.ppm")), Some(12));
        assert_eq!(frame_index(Path::new("v2_shot_7.png")), Some(7));
        assert_eq!(frame_index(Path::new("frame.png")), None);
        assert_eq!(frame_name(3, ImageFormat::Png), "frame_0003.png");
        assert_eq!(expand_pattern("d/f_%04d.ppm", 7).unwrap(), "d/f_0007.ppm");
        assert_eq!(expand_pattern("%d.png", 12).unwrap(), "12.png");
        assert_eq!(expand_pattern("f_%x.png", 1), None);
    }

    #[test]
    fn quantization_clamps() {
        assert_eq!(quantize(-0.5), 0);
        assert_eq!(quantize(1.5), 255);
        assert_eq!(quantize(0.5), 128);
    }
}

//! Frames, flow maps, bicubic backward warping, two-reference blending and
//! residual completion.
//!
//! These are the frame-level forms of the operations; the training pipeline
//! records the same arithmetic on the tape.

pub mod bicubic;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::Tensor;
use crate::{Error, Real, Result};

/// `height x width` RGB raster, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut f = Self::new(width, height);
        for px in f.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        f
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::Dimensions(format!(
                "{} values for a {width}x{height} RGB frame",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let p = (y * self.width + x) * 3;
        [self.data[p], self.data[p + 1], self.data[p + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let p = (y * self.width + x) * 3;
        self.data[p..p + 3].copy_from_slice(&rgb);
    }

    /// Copy with every value clamped to `[0, 1]`.
    pub fn clamped(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_vec(
            self.pixel_count(),
            3,
            self.data.iter().map(|v| T::of(*v as f64)).collect(),
        )
    }

    pub fn from_tensor<T: Real>(width: usize, height: usize, t: &Tensor<T>) -> Result<Self> {
        if t.shape() != (width * height, 3) {
            return Err(Error::Dimensions(format!(
                "tensor {:?} is not a {width}x{height} frame",
                t.shape()
            )));
        }
        Ok(Self {
            width,
            height,
            data: t.data.iter().map(|v| v.as_f64() as f32).collect(),
        })
    }

    fn check_same(&self, other: &Frame, what: &str) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::Dimensions(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Per-pixel displacements in pixels, one field per reference, plus the
/// mixing weight of the first reference when there are two.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    pub width: usize,
    pub height: usize,
    /// Interleaved `(dx, dy)` per pixel, one vector per reference.
    pub flows: Vec<Vec<f32>>,
    pub weight: Option<Vec<f32>>,
}

impl FlowMap {
    pub fn single(width: usize, height: usize, flow: Vec<f32>) -> Result<Self> {
        let m = Self {
            width,
            height,
            flows: vec![flow],
            weight: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn uniform(width: usize, height: usize, dx: f32, dy: f32) -> Self {
        let mut flow = Vec::with_capacity(width * height * 2);
        for _ in 0..width * height {
            flow.push(dx);
            flow.push(dy);
        }
        Self {
            width,
            height,
            flows: vec![flow],
            weight: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        if self.flows.is_empty() || self.flows.len() > 2 {
            return Err(Error::Dimensions(format!("{} flow fields", self.flows.len())));
        }
        if self.flows.iter().any(|f| f.len() != 2 * n) {
            return Err(Error::Dimensions("flow field length".into()));
        }
        match (&self.weight, self.flows.len()) {
            (None, 1) => Ok(()),
            (Some(w), 2) if w.len() == n => Ok(()),
            _ => Err(Error::Dimensions(
                "mixing weight must be present iff there are two references".into(),
            )),
        }
    }
}

/// Bicubic sample of `image` at pixel position `(x, y)`.
pub fn bicubic_sample(image: &Frame, x: f32, y: f32) -> Result<[f32; 3]> {
    if image.data.is_empty() {
        return Err(Error::Dimensions("empty image".into()));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::NonFinite {
            what: "sample coordinate",
            index: 0,
        });
    }
    Ok(bicubic::sample(&image.data, image.width, image.height, x, y))
}

/// Backward warp: `out(x, y) = reference(x + dx, y + dy)` using the first
/// flow field.
pub fn warp_frame(reference: &Frame, flow: &FlowMap) -> Result<Frame> {
    flow.validate()?;
    warp_with(reference, flow.width, flow.height, &flow.flows[0])
}

fn warp_with(reference: &Frame, width: usize, height: usize, flow: &[f32]) -> Result<Frame> {
    if (width, height) != reference.dims() {
        return Err(Error::Dimensions(format!(
            "flow {width}x{height} vs reference {}x{}",
            reference.width, reference.height
        )));
    }
    let mut out = Frame::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let sx = x as f32 + flow[2 * i];
            let sy = y as f32 + flow[2 * i + 1];
            out.set(x, y, bicubic_sample(reference, sx, sy)?);
        }
    }
    Ok(out)
}

/// `weight * warp1 + (1 - weight) * warp2` per pixel and channel.
pub fn blend_multi(warp1: &Frame, warp2: &Frame, weight: &[f32]) -> Result<Frame> {
    warp1.check_same(warp2, "blend")?;
    if weight.len() != warp1.pixel_count() {
        return Err(Error::Dimensions("blend weight length".into()));
    }
    let mut out = warp1.clone();
    for (i, w) in weight.iter().enumerate() {
        for c in 0..3 {
            let k = 3 * i + c;
            out.data[k] = w * warp1.data[k] + (1.0 - w) * warp2.data[k];
        }
    }
    Ok(out)
}

/// Warps with every reference in `flow` and blends when there are two.
pub fn warp_multi(refs: &[&Frame], flow: &FlowMap) -> Result<Frame> {
    flow.validate()?;
    if refs.len() != flow.flows.len() {
        return Err(Error::Dimensions("reference count vs flow fields".into()));
    }
    let w1 = warp_with(refs[0], flow.width, flow.height, &flow.flows[0])?;
    match &flow.weight {
        None => Ok(w1),
        Some(w) => {
            let w2 = warp_with(refs[1], flow.width, flow.height, &flow.flows[1])?;
            blend_multi(&w1, &w2, w)
        }
    }
}

/// `warped + residual`, left unclamped. Call [`Frame::clamped`] for output.
pub fn complete_frame(warped: &Frame, residual: &[f32]) -> Result<Frame> {
    if residual.len() != warped.data.len() {
        return Err(Error::Dimensions("residual length".into()));
    }
    let mut out = warped.clone();
    for (o, r) in out.data.iter_mut().zip(residual) {
        *o += r;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Frame {
        Frame::from_fn(w, h, |x, y| [x as f32 / w as f32, 0.5, (x + y) as f32 * 0.01])
    }

    #[test]
    fn integer_sample_reproduces_pixel() {
        let f = Frame::from_fn(8, 8, |x, y| [x as f32 * 0.1, y as f32 * 0.1, 0.3]);
        assert_eq!(bicubic_sample(&f, 3.0, 5.0).unwrap(), f.get(3, 5));
    }

    #[test]
    fn constant_image_any_position() {
        let f = Frame::filled(5, 4, [0.25, 0.5, 0.75]);
        for &(x, y) in &[(0.3, 0.7), (-3.2, 1.5), (4.9, 10.0), (2.5, 2.5)] {
            let s = bicubic_sample(&f, x, y).unwrap();
            for c in 0..3 {
                assert!((s[c] - f.get(0, 0)[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn catmull_rom_midpoint_closed_form() {
        // Row [0, 1, 1, 0]; midpoint between the two ones:
        // -1/16 * 0 + 9/16 * 1 + 9/16 * 1 - 1/16 * 0 = 1.125.
        let vals = [0.0f32, 1.0, 1.0, 0.0];
        let f = Frame::from_fn(4, 1, |x, _| [vals[x]; 3]);
        let s = bicubic_sample(&f, 1.5, 0.0).unwrap();
        assert!((s[0] - 1.125).abs() < 1e-6);
    }

    #[test]
    fn non_finite_coordinates_rejected() {
        let f = Frame::filled(2, 2, [0.0; 3]);
        assert!(bicubic_sample(&f, f32::NAN, 0.0).is_err());
        assert!(bicubic_sample(&f, 0.0, f32::INFINITY).is_err());
    }

    #[test]
    fn zero_flow_is_bit_exact() {
        let f = ramp(7, 5);
        let out = warp_frame(&f, &FlowMap::uniform(7, 5, 0.0, 0.0)).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn integer_shift_matches_original_interior() {
        let orig = Frame::from_fn(12, 9, |x, y| {
            [((x * 7 + y * 3) % 11) as f32 / 10.0, (x % 3) as f32 * 0.3, 0.2]
        });
        // shifted(x) = orig(x - 1); sampling shifted at x + 1 recovers orig(x).
        let shifted = Frame::from_fn(12, 9, |x, y| orig.get(x.saturating_sub(1), y));
        let out = warp_frame(&shifted, &FlowMap::uniform(12, 9, 1.0, 0.0)).unwrap();
        for y in 0..9 {
            for x in 0..10 {
                for c in 0..3 {
                    assert!((out.get(x, y)[c] - orig.get(x, y)[c]).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn half_pixel_shift_on_linear_ramp() {
        let slope = 0.05f32;
        let f = Frame::from_fn(16, 3, |x, _| [slope * x as f32; 3]);
        let out = warp_frame(&f, &FlowMap::uniform(16, 3, 0.5, 0.0)).unwrap();
        for x in 1..14 {
            let expect = slope * (x as f32 + 0.5);
            assert!((out.get(x, 1)[0] - expect).abs() < 1e-5, "x={x}");
        }
    }

    #[test]
    fn blend_endpoints_and_midpoint() {
        let a = Frame::filled(3, 2, [0.2, 0.4, 0.6]);
        let b = Frame::filled(3, 2, [1.0, 0.0, 0.5]);
        assert_eq!(blend_multi(&a, &b, &[1.0; 6]).unwrap(), a);
        assert_eq!(blend_multi(&a, &b, &[0.0; 6]).unwrap(), b);
        let m = blend_multi(&a, &b, &[0.5; 6]).unwrap();
        for (i, v) in m.data.iter().enumerate() {
            assert!((v - (a.data[i] + b.data[i]) / 2.0).abs() < 1e-7);
        }
        assert!(blend_multi(&a, &Frame::new(2, 2), &[0.5; 6]).is_err());
    }

    #[test]
    fn completion_and_clamp() {
        let w = Frame::filled(1, 1, [0.5, 0.9, 0.0]);
        let out = complete_frame(&w, &[0.2, 0.3, 0.0]).unwrap();
        assert!((out.data[0] - 0.7).abs() < 1e-6);
        assert!((out.data[1] - 1.2).abs() < 1e-6);
        assert_eq!(out.clamped().data[1], 1.0);
        assert_eq!(complete_frame(&w, &[0.0; 3]).unwrap(), w);
        assert!(complete_frame(&w, &[0.0; 6]).is_err());
    }

    #[test]
    fn flow_map_weight_presence() {
        let mut m = FlowMap::uniform(2, 2, 0.0, 0.0);
        assert!(m.validate().is_ok());
        m.weight = Some(vec![0.5; 4]);
        assert!(m.validate().is_err());
        m.flows.push(vec![0.0; 8]);
        assert!(m.validate().is_ok());
    }
}

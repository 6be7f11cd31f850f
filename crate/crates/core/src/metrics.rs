//! PSNR, SSIM, bits per pixel and rate-distortion tables.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Frame, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check(a: &Frame, b: &Frame) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Dimensions(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    check(a, b)?;
    let s: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum();
    Ok(s / a.data.len().max(1) as f64)
}

/// `10 log10(1 / mse)`; infinite when the inputs match exactly.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * libm::log10(1.0 / mse)
    }
}

pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

/// PSNR of the mean squared error over every pixel of every frame.
pub fn psnr_video(a: &[Frame], b: &[Frame]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Dimensions(format!("{} frames vs {}", a.len(), b.len())));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, y) in a.iter().zip(b) {
        total += mse(x, y)? * x.data.len() as f64;
        count += x.data.len();
    }
    Ok(psnr_from_mse(total / count.max(1) as f64))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filtering over valid positions only.
fn filter(img: &[f64], width: usize, height: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut rows = alloc::vec![0.0; ow * height];
    for y in 0..height {
        for x in 0..ow {
            let mut s = 0.0;
            for (k, gk) in g.iter().enumerate() {
                s += gk * img[y * width + x + k];
            }
            rows[y * ow + x] = s;
        }
    }
    let mut out = alloc::vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for (k, gk) in g.iter().enumerate() {
                s += gk * rows[(y + k) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    out
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), averaged
/// over valid window positions and over the three channels.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    check(a, b)?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::FrameTooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let g = gaussian_window();
    let c1 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
    let c2 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);
    let mut total = 0.0;
    for ch in 0..3 {
        let x: Vec<f64> = a.data.iter().skip(ch).step_by(3).map(|v| *v as f64).collect();
        let y: Vec<f64> = b.data.iter().skip(ch).step_by(3).map(|v| *v as f64).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mx = filter(&x, w, h, &g);
        let my = filter(&y, w, h, &g);
        let sxx = filter(&xx, w, h, &g);
        let syy = filter(&yy, w, h, &g);
        let sxy = filter(&xy, w, h, &g);
        let mut s = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            s += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += s / mx.len() as f64;
    }
    Ok(total / 3.0)
}

/// Mean of per-frame SSIM.
pub fn ssim_video(a: &[Frame], b: &[Frame]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Dimensions(format!("{} frames vs {}", a.len(), b.len())));
    }
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += ssim(x, y)?;
    }
    Ok(s / a.len() as f64)
}

/// `8 * bytes / (width * height * frames)`.
pub fn bpp(bytes: usize, width: usize, height: usize, frames: usize) -> Result<f64> {
    if width == 0 || height == 0 || frames == 0 {
        return Err(Error::Dimensions("bpp needs positive dimensions".into()));
    }
    Ok(8.0 * bytes as f64 / (width * height * frames) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdPoint {
    pub label: String,
    pub bpp: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

fn fmt_psnr(p: f64) -> String {
    if p.is_infinite() {
        "inf".into()
    } else {
        format!("{p:.6}")
    }
}

/// `label,bpp,psnr,ssim` with a header row.
pub fn rd_csv(points: &[RdPoint]) -> String {
    let mut s = String::from("label,bpp,psnr,ssim\n");
    for p in points {
        s += &format!("{},{:.6},{},{:.6}\n", p.label, p.bpp, fmt_psnr(p.psnr_db), p.ssim);
    }
    s
}

/// Whitespace-separated columns for gnuplot, one block per label.
pub fn rd_gnuplot(points: &[RdPoint]) -> String {
    let mut s = String::from("# bpp psnr ssim\n");
    let mut labels: Vec<&str> = Vec::new();
    for p in points {
        if !labels.contains(&p.label.as_str()) {
            labels.push(&p.label);
        }
    }
    for (i, l) in labels.iter().enumerate() {
        if i > 0 {
            s += "\n\n";
        }
        s += &format!("# {l}\n");
        for p in points.iter().filter(|p| p.label == *l) {
            s += &format!("{:.6} {} {:.6}\n", p.bpp, fmt_psnr(p.psnr_db), p.ssim);
        }
    }
    s
}

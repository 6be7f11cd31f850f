//! Analytic synthetic videos. Each scene is a continuous function of pixel
//! position and time, so frames can be rendered at any resolution or at
//! fractional times.

use alloc::vec::Vec;

use crate::Frame;

const BLOB_PERIOD: f64 = 16.0;

/// Smooth blobs on a periodic lattice plus a low-frequency wave.
pub fn texture(x: f64, y: f64) -> [f32; 3] {
    const BLOBS: [(f64, f64, f64, [f64; 3]); 8] = [
        (3.0, 4.0, 1.6, [0.45, 0.1, -0.2]),
        (11.0, 6.0, 1.2, [-0.35, 0.35, 0.1]),
        (6.0, 12.0, 1.8, [0.2, -0.3, 0.4]),
        (13.5, 13.0, 1.0, [0.35, 0.3, -0.3]),
        (8.0, 1.5, 1.1, [-0.3, -0.2, 0.35]),
        (1.0, 9.0, 1.3, [0.3, -0.35, -0.1]),
        (14.0, 1.0, 1.4, [0.1, 0.4, 0.3]),
        (9.5, 9.0, 1.0, [-0.4, 0.1, -0.35]),
    ];
    let mut c = [0.0f64; 3];
    for (ch, v) in c.iter_mut().enumerate() {
        let phase = ch as f64 * 1.3;
        *v = 0.5 + 0.1 * libm::sin(0.7 * x + 0.45 * y + phase);
    }
    for (bx, by, s, col) in BLOBS {
        let dx = wrap(x - bx);
        let dy = wrap(y - by);
        let g = libm::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
        for ch in 0..3 {
            c[ch] += col[ch] * g;
        }
    }
    c.map(|v| v.clamp(0.0, 1.0) as f32)
}

fn wrap(d: f64) -> f64 {
    d - BLOB_PERIOD * libm::floor(d / BLOB_PERIOD + 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scene {
    /// The texture moving by `(vx, vy)` pixels per frame.
    Translating { vx: f64, vy: f64 },
    /// The texture, unchanged over time.
    Static,
    /// Static texture behind an opaque vertical bar whose left edge sits at
    /// `start + speed * t`.
    Occlusion { start: f64, speed: f64, bar_width: f64 },
    /// A bright Gaussian on black whose center moves linearly.
    MovingBlob {
        start: (f64, f64),
        velocity: (f64, f64),
        sigma: f64,
    },
}

pub const BAR_COLOR: [f32; 3] = [0.9, 0.15, 0.1];
/// Subpixel, so every warp interpolates.
pub const UNIFORM_MOTION_SPEED: f64 = 1.3;
pub const BLOB_COLOR: [f32; 3] = [1.0, 0.9, 0.6];

impl Scene {
    pub fn translating() -> Self {
        Scene::Translating { vx: 1.0, vy: 0.0 }
    }

    /// Bar covering the left third at t = 0 and crossing the frame over
    /// `frames` frames.
    pub fn occlusion(width: usize, frames: usize) -> Self {
        let bar_width = libm::round(width as f64 / 3.0);
        let travel = width as f64 - bar_width;
        Scene::Occlusion {
            start: 0.0,
            speed: travel / (frames.max(2) - 1) as f64,
            bar_width,
        }
    }

    /// Blob crossing the middle row at [`UNIFORM_MOTION_SPEED`] pixels per
    /// frame, centered at frame `(frames - 1) / 2`.
    pub fn uniform_motion(width: usize, height: usize, frames: usize) -> Self {
        let v = UNIFORM_MOTION_SPEED;
        let cx = (width as f64 - 1.0) / 2.0 - v * (frames as f64 - 1.0) / 2.0;
        Scene::MovingBlob {
            start: (cx, (height as f64 - 1.0) / 2.0),
            velocity: (v, 0.0),
            sigma: 1.5,
        }
    }

    /// Color at pixel position `(x, y)` and time `t` (in frames).
    pub fn color(&self, x: f64, y: f64, t: f64) -> [f32; 3] {
        match *self {
            Scene::Translating { vx, vy } => texture(x - vx * t, y - vy * t),
            Scene::Static => texture(x, y),
            Scene::Occlusion {
                start,
                speed,
                bar_width,
            } => {
                let left = start + speed * t;
                let cover = (x - left + 0.5).min(left + bar_width - x + 0.5).clamp(0.0, 1.0) as f32;
                let bg = texture(x, y);
                core::array::from_fn(|c| bg[c] * (1.0 - cover) + BAR_COLOR[c] * cover)
            }
            Scene::MovingBlob { .. } => {
                let (cx, cy) = self.center(t).unwrap_or((0.0, 0.0));
                let Scene::MovingBlob { sigma, .. } = *self else {
                    unreachable!()
                };
                let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
                let g = libm::exp(-d2 / (2.0 * sigma * sigma)) as f32;
                BLOB_COLOR.map(|c| c * g)
            }
        }
    }

    /// Analytic object center for moving-blob scenes.
    pub fn center(&self, t: f64) -> Option<(f64, f64)> {
        match *self {
            Scene::MovingBlob { start, velocity, .. } => Some((start.0 + velocity.0 * t, start.1 + velocity.1 * t)),
            _ => None,
        }
    }

    pub fn frame(&self, width: usize, height: usize, t: f64) -> Frame {
        Frame::from_fn(width, height, |x, y| self.color(x as f64, y as f64, t))
    }

    /// Frame on a `scale`-times denser grid spanning the same corner-aligned
    /// extent as the `width x height` frame.
    pub fn frame_scaled(&self, width: usize, height: usize, t: f64, scale: usize) -> Frame {
        let (sw, sh) = (width * scale, height * scale);
        let map = |i: usize, n: usize, m: usize| {
            if n <= 1 {
                0.0
            } else {
                i as f64 * (m - 1) as f64 / (n - 1) as f64
            }
        };
        Frame::from_fn(sw, sh, |x, y| self.color(map(x, sw, width), map(y, sh, height), t))
    }

    pub fn render(&self, width: usize, height: usize, frames: usize) -> Vec<Frame> {
        (0..frames).map(|t| self.frame(width, height, t as f64)).collect()
    }
}

/// Intensity-weighted centroid of the summed channels.
pub fn centroid(frame: &Frame) -> (f64, f64) {
    let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
    for y in 0..frame.height {
        for x in 0..frame.width {
            let p = frame.get(x, y);
            let v = (p[0] + p[1] + p[2]).max(0.0) as f64;
            sx += v * x as f64;
            sy += v * y as f64;
            s += v;
        }
    }
    if s == 0.0 {
        (0.0, 0.0)
    } else {
        (sx / s, sy / s)
    }
}

//! Keys cubic convolution kernel with `a = -0.5` (Catmull-Rom) on RGB rasters
//! stored as `(y * width + x) * 3 + channel`. Taps outside the raster read
//! the nearest edge pixel.

use crate::Real;

/// Kernel parameter of the Keys cubic.
pub const KEYS_A: f64 = -0.5;

/// Tap weights for the four samples at offsets `-1, 0, 1, 2` from
/// `floor(x)`, where `t = x - floor(x)`.
#[inline]
pub fn weights<T: Real>(t: T) -> [T; 4] {
    let half = T::of(0.5);
    let t2 = t * t;
    let t3 = t2 * t;
    [
        half * (-t3 + T::of(2.0) * t2 - t),
        half * (T::of(3.0) * t3 - T::of(5.0) * t2 + T::of(2.0)),
        half * (T::of(-3.0) * t3 + T::of(4.0) * t2 + t),
        half * (t3 - t2),
    ]
}

/// Derivatives of [`weights`] with respect to `t`.
#[inline]
pub fn weight_derivatives<T: Real>(t: T) -> [T; 4] {
    let half = T::of(0.5);
    let t2 = t * t;
    [
        half * (T::of(-3.0) * t2 + T::of(4.0) * t - T::one()),
        half * (T::of(9.0) * t2 - T::of(10.0) * t),
        half * (T::of(-9.0) * t2 + T::of(8.0) * t + T::one()),
        half * (T::of(3.0) * t2 - T::of(2.0) * t),
    ]
}

/// The kernel itself as a function of distance; used by tests and docs.
pub fn kernel(d: f64) -> f64 {
    let a = KEYS_A;
    let d = d.abs();
    if d <= 1.0 {
        (a + 2.0) * d * d * d - (a + 3.0) * d * d + 1.0
    } else if d < 2.0 {
        a * d * d * d - 5.0 * a * d * d + 8.0 * a * d - 4.0 * a
    } else {
        0.0
    }
}

#[derive(Clone, Copy)]
pub(crate) struct Taps<T> {
    pub xs: [usize; 4],
    pub ys: [usize; 4],
    pub wx: [T; 4],
    pub wy: [T; 4],
    pub tx: T,
    pub ty: T,
}

#[inline]
fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

#[inline]
pub(crate) fn taps<T: Real>(width: usize, height: usize, x: T, y: T) -> Taps<T> {
    let fx = x.floor();
    let fy = y.floor();
    let tx = x - fx;
    let ty = y - fy;
    // Far outside the raster every tap reads the edge pixel, so clamping the
    // origin changes nothing and keeps the index arithmetic in range.
    let ix = (fx.as_f64() as i64).clamp(-4, width as i64 + 4);
    let iy = (fy.as_f64() as i64).clamp(-4, height as i64 + 4);
    let mut xs = [0; 4];
    let mut ys = [0; 4];
    for k in 0..4 {
        xs[k] = clamp_index(ix - 1 + k as i64, width);
        ys[k] = clamp_index(iy - 1 + k as i64, height);
    }
    Taps {
        xs,
        ys,
        wx: weights(tx),
        wy: weights(ty),
        tx,
        ty,
    }
}

/// Samples an RGB raster at a real-valued pixel position.
#[inline]
pub fn sample<T: Real>(data: &[T], width: usize, height: usize, x: T, y: T) -> [T; 3] {
    let tp = taps(width, height, x, y);
    let mut out = [T::zero(); 3];
    for j in 0..4 {
        let mut row = [T::zero(); 3];
        let base = tp.ys[j] * width;
        for i in 0..4 {
            let p = (base + tp.xs[i]) * 3;
            let w = tp.wx[i];
            row[0] += w * data[p];
            row[1] += w * data[p + 1];
            row[2] += w * data[p + 2];
        }
        for c in 0..3 {
            out[c] += tp.wy[j] * row[c];
        }
    }
    out
}

/// Sample value plus partial derivatives with respect to `x` and `y`.
#[inline]
pub fn sample_with_gradient<T: Real>(data: &[T], width: usize, height: usize, x: T, y: T) -> ([T; 3], [T; 3], [T; 3]) {
    let tp = taps(width, height, x, y);
    let dwx = weight_derivatives(tp.tx);
    let dwy = weight_derivatives(tp.ty);
    let mut v = [T::zero(); 3];
    let mut dx = [T::zero(); 3];
    let mut dy = [T::zero(); 3];
    for j in 0..4 {
        let mut row = [T::zero(); 3];
        let mut drow = [T::zero(); 3];
        let base = tp.ys[j] * width;
        for i in 0..4 {
            let p = (base + tp.xs[i]) * 3;
            for c in 0..3 {
                row[c] += tp.wx[i] * data[p + c];
                drow[c] += dwx[i] * data[p + c];
            }
        }
        for c in 0..3 {
            v[c] += tp.wy[j] * row[c];
            dx[c] += tp.wy[j] * drow[c];
            dy[c] += dwy[j] * row[c];
        }
    }
    (v, dx, dy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_match_kernel() {
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            let w = weights(t);
            let expect = [kernel(1.0 + t), kernel(t), kernel(1.0 - t), kernel(2.0 - t)];
            for i in 0..4 {
                assert!((w[i] - expect[i]).abs() < 1e-12, "t={t} i={i}");
            }
        }
    }

    #[test]
    fn integer_position_selects_single_tap() {
        assert_eq!(weights(0.0f32), [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn distant_coordinates_read_the_edge() {
        let data: alloc::vec::Vec<f32> = (0..12).map(|v| v as f32).collect();
        assert_eq!(sample(&data, 2, 2, 1e30, -1e30), [3.0, 4.0, 5.0]);
        assert_eq!(sample(&data, 2, 2, -3e9, 5e9), [6.0, 7.0, 8.0]);
    }

    #[test]
    fn midpoint_weights() {
        let w = weights(0.5f64);
        assert_eq!(w, [-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0]);
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        for k in 1..20 {
            let t = k as f64 / 20.0;
            let h = 1e-6;
            let d = weight_derivatives(t);
            let (p, m) = (weights(t + h), weights(t - h));
            for i in 0..4 {
                let fd = (p[i] - m[i]) / (2.0 * h);
                assert!((fd - d[i]).abs() < 1e-8);
            }
        }
    }
}

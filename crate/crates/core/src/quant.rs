//! IEEE half-precision storage of network parameters.

use alloc::vec::Vec;

use half::f16;

use crate::{Error, Result};

/// Largest finite half-precision magnitude.
pub const HALF_MAX: f32 = 65504.0;

/// Round-to-nearest-even conversion to half-precision bit patterns.
pub fn quantize_params(params: &[f32]) -> Result<Vec<u16>> {
    params
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if !value.is_finite() || value.abs() > HALF_MAX {
                return Err(Error::HalfOverflow { index, value });
            }
            Ok(f16::from_f32(value).to_bits())
        })
        .collect()
}

pub fn dequantize_params(bits: &[u16]) -> Vec<f32> {
    bits.iter().map(|b| f16::from_bits(*b).to_f32()).collect()
}

/// `dequantize(quantize(p))` without the error path, for values already
/// known to be in range.
pub fn round_trip(params: &[f32]) -> Result<Vec<f32>> {
    Ok(dequantize_params(&quantize_params(params)?))
}

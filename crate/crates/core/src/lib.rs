//! Video representation with neural residual flow fields.
//!
//! Each group of pictures (GOP) is stored as one keyframe plus small
//! coordinate networks. The networks map `(x, y, t)` to optical flows and
//! color residuals; non-key frames are rebuilt by bicubic backward warping of
//! reference frames followed by additive residual completion. Everything
//! between the network parameters and the reconstruction loss is
//! differentiable, and training runs per GOP on a small reverse-mode tape.
//!
//! The crate is `no_std` with `alloc`. File IO, PNG keyframes, external
//! codecs and the command line live in the companion `nrff` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod bitstream;
pub mod codec;
pub mod decode;
pub mod error;
pub mod fields;
pub mod gop;
pub mod metrics;
pub mod quant;
pub mod real;
pub mod synth;
pub mod trainer;
pub mod warp;

pub use error::{Error, Result};
pub use real::Real;
pub use warp::Frame;

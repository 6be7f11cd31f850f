//! File formats, keyframe codecs, settings and the command line for the
//! `nrff-core` video codec.

pub mod cli;
pub mod codecs;
pub mod error;
pub mod frame_io;
pub mod report;
pub mod settings;

pub use error::{Error, Result};

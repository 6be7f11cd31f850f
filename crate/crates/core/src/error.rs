use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch at node {node} ({op}): expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        node: usize,
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("backward called before forward")]
    BackwardBeforeForward,
    #[error("loss node {0} is not a scalar")]
    NonScalarLoss(usize),
    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("network head mismatch: {0}")]
    HeadMismatch(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("parameter {index} = {value} overflows half precision")]
    HalfOverflow { index: usize, value: f32 },
    #[error("keyframe codec error: {0}")]
    Codec(String),
    #[error("bad bitstream magic")]
    BadMagic,
    #[error("unsupported bitstream version {0}")]
    UnsupportedVersion(u16),
    #[error("bitstream truncated at byte {0}")]
    Truncated(usize),
    #[error("malformed bitstream: {0}")]
    Malformed(String),
    #[error("minibatch is empty after excluding keyframes")]
    EmptyBatch,
    #[error("frame {width}x{height} is smaller than the {window}x{window} SSIM window")]
    FrameTooSmall { width: usize, height: usize, window: usize },
    #[error("training diverged in GOP {gop} at iteration {iteration}")]
    Divergence { gop: usize, iteration: usize },
    #[error("time {0} is outside the encoded span")]
    TimeOutOfSpan(f64),
}

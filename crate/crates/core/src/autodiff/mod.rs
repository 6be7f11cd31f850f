//! Reverse-mode differentiation for the field networks and the warping
//! pipeline. Gradients are dense over a flat parameter vector.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport, RELATIVE_FLOOR};
pub use params::{ParamVector, Segment};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;

pub(crate) use tape::sigmoid;

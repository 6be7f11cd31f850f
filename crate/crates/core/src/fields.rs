//! Coordinate networks mapping normalized `(x, y, t)` to flows, residuals,
//! mixing weights or colors.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{NodeId, ParamVector, Segment, Tape, Tensor};
use crate::{Error, Real, Result};

pub const DEFAULT_OMEGA0: f32 = 30.0;
pub const DEFAULT_SWISH_BETA: f32 = 1.0;
pub const DEFAULT_POSENC_FREQS: usize = 6;

/// Final-layer weights of flow and residual heads are shrunk by this factor
/// so training starts near the identity warp with no correction.
pub const MOTION_HEAD_INIT_SCALE: f32 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sine,
    Swish,
}

/// What the last linear layer emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// `(dx, dy)`.
    FlowSingle,
    /// `(dx1, dy1, dx2, dy2, weight_logit)`.
    FlowMulti,
    /// `(dr, dg, db)`.
    Residual,
    /// Raw color before `(tanh + 1) / 2`.
    Color,
    /// Flow columns followed by residual columns: 5 outputs for one
    /// reference, 8 for two.
    FlowAndResidualShared { multi: bool },
}

impl Head {
    pub fn output_dim(self) -> usize {
        match self {
            Head::FlowSingle => 2,
            Head::FlowMulti => 5,
            Head::Residual | Head::Color => 3,
            Head::FlowAndResidualShared { multi: false } => 5,
            Head::FlowAndResidualShared { multi: true } => 8,
        }
    }

    /// Columns holding flow outputs (and the weight logit for two references).
    pub fn flow_columns(self) -> Option<Range<usize>> {
        match self {
            Head::FlowSingle => Some(0..2),
            Head::FlowMulti => Some(0..5),
            Head::FlowAndResidualShared { multi: false } => Some(0..2),
            Head::FlowAndResidualShared { multi: true } => Some(0..5),
            _ => None,
        }
    }

    pub fn residual_columns(self) -> Option<Range<usize>> {
        match self {
            Head::Residual => Some(0..3),
            Head::FlowAndResidualShared { multi: false } => Some(2..5),
            Head::FlowAndResidualShared { multi: true } => Some(5..8),
            _ => None,
        }
    }

    pub fn is_multi(self) -> bool {
        matches!(self, Head::FlowMulti | Head::FlowAndResidualShared { multi: true })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldNetworkSpec {
    pub input_dim: usize,
    pub hidden_width: usize,
    pub hidden_depth: usize,
    pub activation: Activation,
    pub sine_omega0: f32,
    pub swish_beta: f32,
    pub posenc_freqs: usize,
    pub head: Head,
}

impl FieldNetworkSpec {
    pub fn new(head: Head, activation: Activation, hidden_width: usize, hidden_depth: usize) -> Self {
        Self {
            input_dim: 3,
            hidden_width,
            hidden_depth,
            activation,
            sine_omega0: DEFAULT_OMEGA0,
            swish_beta: DEFAULT_SWISH_BETA,
            posenc_freqs: match activation {
                Activation::Sine => 0,
                Activation::Swish => DEFAULT_POSENC_FREQS,
            },
            head,
        }
    }

    pub fn with_posenc(mut self, freqs: usize) -> Self {
        self.posenc_freqs = freqs;
        self
    }

    pub fn with_width(mut self, width: usize) -> Self {
        self.hidden_width = width;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.hidden_depth == 0 || self.input_dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "network needs nonzero width and depth (width {}, depth {})",
                self.hidden_width, self.hidden_depth
            )));
        }
        Ok(())
    }

    /// Input width after positional encoding.
    pub fn encoded_dim(&self) -> usize {
        self.input_dim * (2 * self.posenc_freqs + 1)
    }

    pub fn output_dim(&self) -> usize {
        self.head.output_dim()
    }

    /// `(fan_in, fan_out)` of each linear layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_depth + 1);
        let mut fan_in = self.encoded_dim();
        for _ in 0..self.hidden_depth {
            dims.push((fan_in, self.hidden_width));
            fan_in = self.hidden_width;
        }
        dims.push((fan_in, self.output_dim()));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn layout(&self) -> Vec<Segment> {
        let mut segs = Vec::new();
        let mut offset = 0;
        for (l, (i, o)) in self.layer_dims().into_iter().enumerate() {
            segs.push(Segment {
                name: format!("l{l}.w"),
                offset,
                rows: i,
                cols: o,
            });
            offset += i * o;
            segs.push(Segment {
                name: format!("l{l}.b"),
                offset,
                rows: 1,
                cols: o,
            });
            offset += o;
        }
        segs
    }

    /// Records the network on `tape` reading parameters at `offset`, and
    /// returns the raw head output (`n x output_dim`).
    pub fn record<T: Real>(&self, tape: &mut Tape<T>, coords: NodeId, offset: usize) -> Result<NodeId> {
        self.validate()?;
        let mut h = if self.posenc_freqs > 0 {
            tape.posenc(coords, self.posenc_freqs)
        } else {
            coords
        };
        let dims = self.layer_dims();
        let mut off = offset;
        for (l, (i, o)) in dims.iter().copied().enumerate() {
            let w = tape.param(off, i, o);
            off += i * o;
            let b = tape.param(off, 1, o);
            off += o;
            h = tape.affine(h, w, b)?;
            if l + 1 < dims.len() {
                h = match self.activation {
                    Activation::Sine => tape.sine(h, T::of(self.sine_omega0 as f64)),
                    Activation::Swish => tape.swish(h, T::of(self.swish_beta as f64)),
                };
            }
        }
        Ok(h)
    }
}

/// `n x 3` normalized `(x, y, t)` coordinates, each in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateBatch {
    coords: Tensor<f32>,
}

impl CoordinateBatch {
    pub fn new(coords: Tensor<f32>) -> Result<Self> {
        if coords.cols != 3 {
            return Err(Error::Dimensions(format!(
                "coordinates need 3 columns, got {}",
                coords.cols
            )));
        }
        for (i, v) in coords.data.iter().enumerate() {
            if !v.is_finite() || v.abs() > 1.0 {
                return Err(Error::NonFinite {
                    what: "coordinate outside [-1, 1]",
                    index: i,
                });
            }
        }
        Ok(Self { coords })
    }

    pub fn from_points(points: &[[f32; 3]]) -> Result<Self> {
        let data = points.iter().flat_map(|p| p.iter().copied()).collect();
        Self::new(Tensor::from_vec(points.len(), 3, data))
    }

    pub fn len(&self) -> usize {
        self.coords.rows
    }

    pub fn is_empty(&self) -> bool {
        self.coords.rows == 0
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.coords
    }
}

/// Positional encoding of a coordinate batch; see [`Tape::posenc`] for the
/// column order.
pub fn posenc(coords: &CoordinateBatch, freqs: usize) -> Tensor<f32> {
    let mut tape = Tape::<f32>::new();
    let x = tape.input(coords.len(), 3);
    let e = tape.posenc(x, freqs);
    tape.forward(&[], core::slice::from_ref(coords.tensor()))
        .expect("posenc graph matches its input");
    tape.value(e).clone()
}

/// Seeded initialization. Sine networks follow the SIREN scheme (first layer
/// `U(-1/n, 1/n)`, later layers `U(-sqrt(6/n)/omega0, sqrt(6/n)/omega0)`),
/// swish networks use `U(-sqrt(6/n), sqrt(6/n))`, with `n` the layer fan-in.
/// Biases are `U(-1/sqrt(n), 1/sqrt(n))`.
pub fn init_network(spec: &FieldNetworkSpec, seed: u64) -> Result<ParamVector<f32>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = spec.layer_dims();
    let last = dims.len() - 1;
    let motion_head = !matches!(spec.head, Head::Color);
    let mut data = Vec::with_capacity(spec.param_count());
    for (l, (fan_in, fan_out)) in dims.into_iter().enumerate() {
        let n = fan_in as f32;
        let mut bound = match spec.activation {
            Activation::Sine if l == 0 => 1.0 / n,
            Activation::Sine => libm::sqrtf(6.0 / n) / spec.sine_omega0,
            Activation::Swish => libm::sqrtf(6.0 / n),
        };
        let mut bias_bound = 1.0 / libm::sqrtf(n);
        if l == last && motion_head {
            bound *= MOTION_HEAD_INIT_SCALE;
            bias_bound = 0.0;
        }
        for _ in 0..fan_in * fan_out {
            data.push(uniform(&mut rng, bound));
        }
        for _ in 0..fan_out {
            data.push(uniform(&mut rng, bias_bound));
        }
    }
    ParamVector::new(data, spec.layout())
}

fn uniform(rng: &mut ChaCha8Rng, bound: f32) -> f32 {
    if bound == 0.0 {
        0.0
    } else {
        rng.gen_range(-bound..=bound)
    }
}

/// Network spec together with its trained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldNetwork {
    pub spec: FieldNetworkSpec,
    pub params: ParamVector<f32>,
}

impl FieldNetwork {
    pub fn new(spec: FieldNetworkSpec, params: ParamVector<f32>) -> Result<Self> {
        if params.len() != spec.param_count() {
            return Err(Error::Dimensions(format!(
                "{} parameters for a network of {}",
                params.len(),
                spec.param_count()
            )));
        }
        Ok(Self { spec, params })
    }

    pub fn init(spec: FieldNetworkSpec, seed: u64) -> Result<Self> {
        let params = init_network(&spec, seed)?;
        Ok(Self { spec, params })
    }

    /// Raw head output for a batch.
    pub fn eval_raw(&self, coords: &CoordinateBatch) -> Result<Tensor<f32>> {
        let mut tape = Tape::<f32>::new();
        let x = tape.input(coords.len(), 3);
        let out = self.spec.record(&mut tape, x, 0)?;
        tape.forward(self.params.as_slice(), core::slice::from_ref(coords.tensor()))?;
        Ok(tape.value(out).clone())
    }

    /// `(dx, dy)` per coordinate in normalized units.
    pub fn eval_flow(&self, coords: &CoordinateBatch) -> Result<Tensor<f32>> {
        match self.spec.head {
            Head::FlowSingle | Head::FlowAndResidualShared { multi: false } => Ok(self.eval_raw(coords)?.columns(0, 2)),
            _ => Err(Error::HeadMismatch("eval_flow needs a single-reference flow head")),
        }
    }

    /// `(dx1, dy1, dx2, dy2, w)` with `w = sigmoid(logit)` in `[0, 1]`.
    pub fn eval_flow_multi(&self, coords: &CoordinateBatch) -> Result<Tensor<f32>> {
        match self.spec.head {
            Head::FlowMulti | Head::FlowAndResidualShared { multi: true } => {
                let mut out = self.eval_raw(coords)?.columns(0, 5);
                for r in 0..out.rows {
                    let l = out.data[r * 5 + 4];
                    out.data[r * 5 + 4] = crate::autodiff::sigmoid(l);
                }
                Ok(out)
            }
            _ => Err(Error::HeadMismatch("eval_flow_multi needs a two-reference flow head")),
        }
    }

    /// `(dr, dg, db)` per coordinate.
    pub fn eval_residual(&self, coords: &CoordinateBatch) -> Result<Tensor<f32>> {
        match self.spec.head.residual_columns() {
            Some(r) => Ok(self.eval_raw(coords)?.columns(r.start, 3)),
            None => Err(Error::HeadMismatch("eval_residual needs a residual head")),
        }
    }

    /// Colors in `[0, 1]` via `(tanh + 1) / 2`.
    pub fn eval_color(&self, coords: &CoordinateBatch) -> Result<Tensor<f32>> {
        if self.spec.head != Head::Color {
            return Err(Error::HeadMismatch("eval_color needs a color head"));
        }
        let mut out = self.eval_raw(coords)?;
        for v in out.data.iter_mut() {
            *v = 0.5 * (libm::tanhf(*v) + 1.0);
        }
        Ok(out)
    }
}

/// Layer width whose parameter count is closest to `budget` (ties go to the
/// smaller width).
pub fn width_for_budget(template: &FieldNetworkSpec, budget: usize) -> usize {
    let mut best = (1, usize::MAX);
    for w in 1..=4096 {
        let n = template.clone().with_width(w).param_count();
        let diff = n.abs_diff(budget);
        if diff < best.1 {
            best = (w, diff);
        }
        if n > budget {
            break;
        }
    }
    best.0
}

/// Widths for a flow and a residual network whose combined parameter count
/// is within 1% of `budget` (or as close as possible), preferring the pair
/// whose halves are most even.
pub fn split_widths(flow: &FieldNetworkSpec, residual: &FieldNetworkSpec, budget: usize) -> (usize, usize) {
    let mut best = (1, 1, usize::MAX, usize::MAX);
    for wf in 1..=4096 {
        let nf = flow.clone().with_width(wf).param_count();
        if nf >= budget {
            break;
        }
        let wr = width_for_budget(residual, budget - nf);
        for wr in [wr.saturating_sub(1).max(1), wr, wr + 1] {
            let nr = residual.clone().with_width(wr).param_count();
            let diff = (nf + nr).abs_diff(budget);
            let miss = if diff * 100 <= budget { 0 } else { diff };
            let imbalance = nf.abs_diff(nr);
            if (miss, imbalance) < (best.2, best.3) {
                best = (wf, wr, miss, imbalance);
            }
        }
    }
    (best.0, best.1)
}

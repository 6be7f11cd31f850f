//! Define-then-run reverse-mode tape over dense row-major tensors.
//!
//! A graph is recorded once with the builder methods, then `forward` fills
//! the value cache for a given parameter vector and input batch, and
//! `backward` sweeps the nodes in reverse to produce dLoss/dParam. All
//! reductions run in ascending index order so repeated passes are
//! bit-identical.

use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::warp::bicubic;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Input {
        slot: usize,
    },
    Const,
    Param {
        offset: usize,
    },
    Affine {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Sine {
        x: NodeId,
        omega: T,
    },
    Swish {
        x: NodeId,
        beta: T,
    },
    Sigmoid {
        x: NodeId,
    },
    Tanh {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    ScaleShift {
        x: NodeId,
        scale: T,
        shift: T,
    },
    ColAffine {
        x: NodeId,
        scale: Vec<T>,
        shift: Vec<T>,
    },
    ConcatCols {
        parts: Vec<NodeId>,
    },
    SliceCols {
        x: NodeId,
        start: usize,
    },
    SliceRows {
        x: NodeId,
        start: usize,
    },
    PosEnc {
        x: NodeId,
        freqs: usize,
    },
    Blend {
        a: NodeId,
        b: NodeId,
        w: NodeId,
    },
    Bicubic {
        image: NodeId,
        coords: NodeId,
        width: usize,
        height: usize,
    },
    SquaredError {
        a: NodeId,
        b: NodeId,
    },
    Sum {
        parts: Vec<NodeId>,
    },
    Detach {
        x: NodeId,
    },
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Const => "const",
            Op::Param { .. } => "param",
            Op::Affine { .. } => "affine",
            Op::Sine { .. } => "sine",
            Op::Swish { .. } => "swish",
            Op::Sigmoid { .. } => "sigmoid",
            Op::Tanh { .. } => "tanh",
            Op::Add { .. } => "add",
            Op::Mul { .. } => "mul",
            Op::ScaleShift { .. } => "scale_shift",
            Op::ColAffine { .. } => "col_affine",
            Op::ConcatCols { .. } => "concat",
            Op::SliceCols { .. } => "slice_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::PosEnc { .. } => "posenc",
            Op::Blend { .. } => "blend",
            Op::Bicubic { .. } => "bicubic_sample",
            Op::SquaredError { .. } => "squared_error",
            Op::Sum { .. } => "sum",
            Op::Detach { .. } => "detach",
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    rows: usize,
    cols: usize,
    requires_grad: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Recorded,
    Forwarded,
}

/// Recorded computation graph with its forward value cache and adjoints.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    values: Vec<Tensor<T>>,
    adjoints: Vec<Tensor<T>>,
    touched: Vec<bool>,
    inputs: Vec<NodeId>,
    param_len: usize,
    stage: Stage,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            values: Vec::new(),
            adjoints: Vec::new(),
            touched: Vec::new(),
            inputs: Vec::new(),
            param_len: 0,
            stage: Stage::Recorded,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest parameter vector length this graph can be run with.
    pub fn required_params(&self) -> usize {
        self.param_len
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    /// Operation name of a node, for diagnostics.
    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    fn push(&mut self, op: Op<T>, rows: usize, cols: usize, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            rows,
            cols,
            requires_grad,
        });
        self.values.push(Tensor::default());
        self.adjoints.push(Tensor::default());
        self.touched.push(false);
        self.stage = Stage::Recorded;
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn mismatch(&self, op: &'static str, expected: (usize, usize), found: (usize, usize)) -> Error {
        Error::ShapeMismatch {
            node: self.nodes.len(),
            op,
            expected,
            found,
        }
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(usize, usize)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(self.mismatch(op, sa, sb));
        }
        Ok(sa)
    }

    // ---- graph construction ----

    /// Placeholder bound by position in the `inputs` slice of [`Tape::forward`].
    pub fn input(&mut self, rows: usize, cols: usize) -> NodeId {
        let slot = self.inputs.len();
        let id = self.push(Op::Input { slot }, rows, cols, false);
        self.inputs.push(id);
        id
    }

    /// Like [`Tape::input`], but the adjoint is tracked and readable after
    /// backward.
    pub fn input_with_grad(&mut self, rows: usize, cols: usize) -> NodeId {
        let slot = self.inputs.len();
        let id = self.push(Op::Input { slot }, rows, cols, true);
        self.inputs.push(id);
        id
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        let (r, c) = value.shape();
        let id = self.push(Op::Const, r, c, false);
        self.values[id.0] = value;
        id
    }

    /// `rows x cols` block of the parameter vector starting at `offset`.
    pub fn param(&mut self, offset: usize, rows: usize, cols: usize) -> NodeId {
        self.param_len = self.param_len.max(offset + rows * cols);
        self.push(Op::Param { offset }, rows, cols, true)
    }

    /// `x * w + b` with `x: n x in`, `w: in x out`, `b: 1 x out`.
    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, k) = self.shape(x);
        let (wk, m) = self.shape(w);
        if wk != k {
            return Err(self.mismatch("affine", (k, m), (wk, m)));
        }
        if self.shape(b) != (1, m) {
            return Err(self.mismatch("affine", (1, m), self.shape(b)));
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Op::Affine { x, w, b }, n, m, rg))
    }

    /// `sin(omega * x)`.
    pub fn sine(&mut self, x: NodeId, omega: T) -> NodeId {
        let (r, c) = self.shape(x);
        let rg = self.rg(x);
        self.push(Op::Sine { x, omega }, r, c, rg)
    }

    /// `x * sigmoid(beta * x)`.
    pub fn swish(&mut self, x: NodeId, beta: T) -> NodeId {
        let (r, c) = self.shape(x);
        let rg = self.rg(x);
        self.push(Op::Swish { x, beta }, r, c, rg)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let rg = self.rg(x);
        self.push(Op::Sigmoid { x }, r, c, rg)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        let rg = self.rg(x);
        self.push(Op::Tanh { x }, r, c, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, c) = self.same_shape("add", a, b)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Add { a, b }, r, c, rg))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (r, c) = self.same_shape("mul", a, b)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::Mul { a, b }, r, c, rg))
    }

    /// `x * scale + shift` elementwise.
    pub fn scale_shift(&mut self, x: NodeId, scale: T, shift: T) -> NodeId {
        let (r, c) = self.shape(x);
        let rg = self.rg(x);
        self.push(Op::ScaleShift { x, scale, shift }, r, c, rg)
    }

    /// Per-column `x[:, c] * scale[c] + shift[c]`.
    pub fn col_affine(&mut self, x: NodeId, scale: Vec<T>, shift: Vec<T>) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if scale.len() != c || shift.len() != c {
            return Err(self.mismatch("col_affine", (r, c), (r, scale.len())));
        }
        let rg = self.rg(x);
        Ok(self.push(Op::ColAffine { x, scale, shift }, r, c, rg))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = parts.first().map(|p| self.shape(*p).0).unwrap_or(0);
        let mut cols = 0;
        let mut rg = false;
        for p in parts {
            let (r, c) = self.shape(*p);
            if r != rows {
                return Err(self.mismatch("concat", (rows, c), (r, c)));
            }
            cols += c;
            rg |= self.rg(*p);
        }
        Ok(self.push(Op::ConcatCols { parts: parts.to_vec() }, rows, cols, rg))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if start + len > c {
            return Err(self.mismatch("slice_cols", (r, start + len), (r, c)));
        }
        let rg = self.rg(x);
        Ok(self.push(Op::SliceCols { x, start }, r, len, rg))
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.shape(x);
        if start + len > r {
            return Err(self.mismatch("slice_rows", (start + len, c), (r, c)));
        }
        let rg = self.rg(x);
        Ok(self.push(Op::SliceRows { x, start }, len, c, rg))
    }

    /// Positional encoding: identity columns, then for `k = 0..freqs` and
    /// each input column `d`, the pair `sin(2^k pi x_d), cos(2^k pi x_d)`.
    pub fn posenc(&mut self, x: NodeId, freqs: usize) -> NodeId {
        let (r, c) = self.shape(x);
        let rg = self.rg(x);
        self.push(Op::PosEnc { x, freqs }, r, c * (2 * freqs + 1), rg)
    }

    /// `w * a + (1 - w) * b` with a per-row weight `w: n x 1`.
    pub fn blend(&mut self, a: NodeId, b: NodeId, w: NodeId) -> Result<NodeId> {
        let (r, c) = self.same_shape("blend", a, b)?;
        if self.shape(w) != (r, 1) {
            return Err(self.mismatch("blend", (r, 1), self.shape(w)));
        }
        let rg = self.rg(a) || self.rg(b) || self.rg(w);
        Ok(self.push(Op::Blend { a, b, w }, r, c, rg))
    }

    /// Bicubic samples of an RGB raster (`(height * width) x 3`) at pixel
    /// coordinates `coords: n x 2` (columns x, y).
    pub fn bicubic(&mut self, image: NodeId, width: usize, height: usize, coords: NodeId) -> Result<NodeId> {
        if self.shape(image) != (width * height, 3) || width == 0 || height == 0 {
            return Err(self.mismatch("bicubic_sample", (width * height, 3), self.shape(image)));
        }
        let (n, c) = self.shape(coords);
        if c != 2 {
            return Err(self.mismatch("bicubic_sample", (n, 2), (n, c)));
        }
        let rg = self.rg(image) || self.rg(coords);
        Ok(self.push(
            Op::Bicubic {
                image,
                coords,
                width,
                height,
            },
            n,
            3,
            rg,
        ))
    }

    /// `sum((a - b)^2)` as a `1 x 1` tensor.
    pub fn squared_error(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("squared_error", a, b)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Op::SquaredError { a, b }, 1, 1, rg))
    }

    /// Sum of `1 x 1` tensors.
    pub fn sum(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let mut rg = false;
        for p in parts {
            if self.shape(*p) != (1, 1) {
                return Err(self.mismatch("sum", (1, 1), self.shape(*p)));
            }
            rg |= self.rg(*p);
        }
        Ok(self.push(Op::Sum { parts: parts.to_vec() }, 1, 1, rg))
    }

    /// Identity in the forward pass; blocks gradient flow.
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let (r, c) = self.shape(x);
        self.push(Op::Detach { x }, r, c, false)
    }

    // ---- execution ----

    /// Runs the graph. `params` must hold at least
    /// [`Tape::required_params`] values and `inputs` must match the declared
    /// input shapes in declaration order.
    pub fn forward(&mut self, params: &[T], inputs: &[Tensor<T>]) -> Result<()> {
        if inputs.len() != self.inputs.len() {
            return Err(Error::ShapeMismatch {
                node: self.inputs.first().map(|n| n.0).unwrap_or(0),
                op: "input",
                expected: (self.inputs.len(), 0),
                found: (inputs.len(), 0),
            });
        }
        if params.len() < self.param_len {
            let node = self
                .nodes
                .iter()
                .position(|n| matches!(n.op, Op::Param { offset } if offset + n.rows * n.cols > params.len()))
                .unwrap_or(0);
            return Err(Error::ShapeMismatch {
                node,
                op: "param",
                expected: (self.param_len, 1),
                found: (params.len(), 1),
            });
        }
        self.stage = Stage::Recorded;
        for i in 0..self.nodes.len() {
            self.eval_node(i, params, inputs)?;
        }
        self.stage = Stage::Forwarded;
        Ok(())
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.values[id.0]
    }

    fn eval_node(&mut self, i: usize, params: &[T], inputs: &[Tensor<T>]) -> Result<()> {
        let (rows, cols) = (self.nodes[i].rows, self.nodes[i].cols);
        // Split so inputs (earlier nodes) can be read while writing node i.
        let (before, rest) = self.values.split_at_mut(i);
        let out = &mut rest[0];
        let v = |id: NodeId| &before[id.0];
        match &self.nodes[i].op {
            Op::Const => {}
            Op::Input { slot } => {
                let t = &inputs[*slot];
                if t.shape() != (rows, cols) {
                    return Err(Error::ShapeMismatch {
                        node: i,
                        op: "input",
                        expected: (rows, cols),
                        found: t.shape(),
                    });
                }
                out.reset(rows, cols);
                out.data.copy_from_slice(&t.data);
            }
            Op::Param { offset } => {
                out.reset(rows, cols);
                out.data.copy_from_slice(&params[*offset..*offset + rows * cols]);
            }
            Op::Affine { x, w, b } => {
                let (x, w, b) = (v(*x), v(*w), v(*b));
                out.reset(rows, cols);
                let k = x.cols;
                for r in 0..rows {
                    let o = &mut out.data[r * cols..(r + 1) * cols];
                    o.copy_from_slice(&b.data);
                    let xr = x.row(r);
                    for kk in 0..k {
                        let xv = xr[kk];
                        let wr = &w.data[kk * cols..(kk + 1) * cols];
                        for (oj, wj) in o.iter_mut().zip(wr) {
                            *oj += xv * *wj;
                        }
                    }
                }
            }
            Op::Sine { x, omega } => {
                let om = *omega;
                map_into(out, v(*x), |a| (om * a).sin());
            }
            Op::Swish { x, beta } => {
                let be = *beta;
                map_into(out, v(*x), |a| a * sigmoid(be * a));
            }
            Op::Sigmoid { x } => map_into(out, v(*x), sigmoid),
            Op::Tanh { x } => map_into(out, v(*x), |a| a.tanh()),
            Op::Add { a, b } => zip_into(out, v(*a), v(*b), |p, q| p + q),
            Op::Mul { a, b } => zip_into(out, v(*a), v(*b), |p, q| p * q),
            Op::ScaleShift { x, scale, shift } => {
                let (s, o) = (*scale, *shift);
                map_into(out, v(*x), |a| a * s + o);
            }
            Op::ColAffine { x, scale, shift } => {
                let x = v(*x);
                out.reset(rows, cols);
                for r in 0..rows {
                    for c in 0..cols {
                        out.data[r * cols + c] = x.data[r * cols + c] * scale[c] + shift[c];
                    }
                }
            }
            Op::ConcatCols { parts } => {
                out.reset(rows, cols);
                let mut c0 = 0;
                for p in parts {
                    let t = v(*p);
                    for r in 0..rows {
                        out.data[r * cols + c0..r * cols + c0 + t.cols].copy_from_slice(t.row(r));
                    }
                    c0 += t.cols;
                }
            }
            Op::SliceCols { x, start } => {
                let x = v(*x);
                out.reset(rows, cols);
                for r in 0..rows {
                    out.data[r * cols..(r + 1) * cols].copy_from_slice(&x.row(r)[*start..*start + cols]);
                }
            }
            Op::SliceRows { x, start } => {
                let x = v(*x);
                out.reset(rows, cols);
                out.data.copy_from_slice(&x.data[start * cols..(start + rows) * cols]);
            }
            Op::PosEnc { x, freqs } => {
                let x = v(*x);
                out.reset(rows, cols);
                let d = x.cols;
                for r in 0..rows {
                    let xr = x.row(r);
                    let o = &mut out.data[r * cols..(r + 1) * cols];
                    o[..d].copy_from_slice(xr);
                    let mut freq = T::PI();
                    for k in 0..*freqs {
                        for (j, &p) in xr.iter().enumerate() {
                            let (s, c) = (freq * p).sin_cos();
                            o[d + 2 * (k * d + j)] = s;
                            o[d + 2 * (k * d + j) + 1] = c;
                        }
                        freq = freq + freq;
                    }
                }
            }
            Op::Blend { a, b, w } => {
                let (a, b, w) = (v(*a), v(*b), v(*w));
                out.reset(rows, cols);
                for r in 0..rows {
                    let wr = w.data[r];
                    for c in 0..cols {
                        let idx = r * cols + c;
                        out.data[idx] = wr * a.data[idx] + (T::one() - wr) * b.data[idx];
                    }
                }
            }
            Op::Bicubic {
                image,
                coords,
                width,
                height,
            } => {
                let (img, co) = (v(*image), v(*coords));
                out.reset(rows, cols);
                for r in 0..rows {
                    let (x, y) = (co.data[2 * r], co.data[2 * r + 1]);
                    if !x.is_finite() || !y.is_finite() {
                        return Err(Error::NonFinite {
                            what: "bicubic coordinates",
                            index: r,
                        });
                    }
                    let s = bicubic::sample(&img.data, *width, *height, x, y);
                    out.data[3 * r..3 * r + 3].copy_from_slice(&s);
                }
            }
            Op::SquaredError { a, b } => {
                let (a, b) = (v(*a), v(*b));
                let mut acc = T::zero();
                for (p, q) in a.data.iter().zip(&b.data) {
                    let d = *p - *q;
                    acc += d * d;
                }
                out.reset(1, 1);
                out.data[0] = acc;
            }
            Op::Sum { parts } => {
                let mut acc = T::zero();
                for p in parts {
                    acc += v(*p).data[0];
                }
                out.reset(1, 1);
                out.data[0] = acc;
            }
            Op::Detach { x } => {
                let x = v(*x);
                out.reset(rows, cols);
                out.data.copy_from_slice(&x.data);
            }
        }
        Ok(())
    }

    /// Reverse sweep from a scalar `loss`. Returns dLoss/dParam with the
    /// length of the parameter slice given to the last forward.
    pub fn backward(&mut self, loss: NodeId, param_len: usize) -> Result<Vec<T>> {
        if self.stage != Stage::Forwarded {
            return Err(Error::BackwardBeforeForward);
        }
        if self.shape(loss) != (1, 1) {
            return Err(Error::NonScalarLoss(loss.0));
        }
        let mut grad = vec![T::zero(); param_len.max(self.param_len)];
        for t in self.touched.iter_mut() {
            *t = false;
        }
        self.seed(loss.0);
        self.adjoints[loss.0].data[0] = T::one();
        for i in (0..=loss.0).rev() {
            if !self.touched[i] || !self.nodes[i].requires_grad {
                continue;
            }
            let g = core::mem::take(&mut self.adjoints[i]);
            self.propagate(i, &g, &mut grad);
            self.adjoints[i] = g;
        }
        grad.truncate(param_len.max(self.param_len));
        Ok(grad)
    }

    /// Adjoint of a node after [`Tape::backward`]; zeros if unreachable.
    pub fn adjoint(&self, id: NodeId) -> Tensor<T> {
        let (r, c) = self.shape(id);
        if self.touched[id.0] {
            self.adjoints[id.0].clone()
        } else {
            Tensor::zeros(r, c)
        }
    }

    fn seed(&mut self, i: usize) {
        if !self.touched[i] {
            self.touched[i] = true;
            let (r, c) = (self.nodes[i].rows, self.nodes[i].cols);
            self.adjoints[i].reset(r, c);
        }
    }

    /// Adjoint buffer of `id`, zeroed on first touch this pass.
    fn adj(&mut self, id: NodeId) -> &mut Tensor<T> {
        self.seed(id.0);
        &mut self.adjoints[id.0]
    }

    fn propagate(&mut self, i: usize, g: &Tensor<T>, grad: &mut [T]) {
        let op = self.nodes[i].op.clone();
        let (rows, cols) = (self.nodes[i].rows, self.nodes[i].cols);
        match op {
            Op::Input { .. } | Op::Const | Op::Detach { .. } => {}
            Op::Param { offset } => {
                for (d, s) in grad[offset..offset + rows * cols].iter_mut().zip(&g.data) {
                    *d += *s;
                }
            }
            Op::Affine { x, w, b } => {
                let k = self.nodes[x.0].cols;
                if self.rg(b) {
                    let mut db = vec![T::zero(); cols];
                    for r in 0..rows {
                        for (d, s) in db.iter_mut().zip(g.row(r)) {
                            *d += *s;
                        }
                    }
                    add_into(&mut self.adj(b).data, &db);
                }
                if self.rg(w) {
                    let mut dw = vec![T::zero(); k * cols];
                    let xv = &self.values[x.0];
                    for r in 0..rows {
                        let gr = g.row(r);
                        let xr = xv.row(r);
                        for kk in 0..k {
                            let a = xr[kk];
                            let dr = &mut dw[kk * cols..(kk + 1) * cols];
                            for (d, s) in dr.iter_mut().zip(gr) {
                                *d += a * *s;
                            }
                        }
                    }
                    add_into(&mut self.adj(w).data, &dw);
                }
                if self.rg(x) {
                    let mut dx = vec![T::zero(); rows * k];
                    let wv = &self.values[w.0];
                    for r in 0..rows {
                        let gr = g.row(r);
                        for kk in 0..k {
                            let wr = &wv.data[kk * cols..(kk + 1) * cols];
                            let mut acc = T::zero();
                            for (a, s) in wr.iter().zip(gr) {
                                acc += *a * *s;
                            }
                            dx[r * k + kk] = acc;
                        }
                    }
                    add_into(&mut self.adj(x).data, &dx);
                }
            }
            Op::Sine { x, omega } => {
                let d = unary_grad(&self.values[x.0], g, |a, _| omega * (omega * a).cos(), &self.values[i]);
                add_into(&mut self.adj(x).data, &d);
            }
            Op::Swish { x, beta } => {
                let d = unary_grad(
                    &self.values[x.0],
                    g,
                    |a, _| {
                        let s = sigmoid(beta * a);
                        s + beta * a * s * (T::one() - s)
                    },
                    &self.values[i],
                );
                add_into(&mut self.adj(x).data, &d);
            }
            Op::Sigmoid { x } => {
                let d = unary_grad(&self.values[x.0], g, |_, y| y * (T::one() - y), &self.values[i]);
                add_into(&mut self.adj(x).data, &d);
            }
            Op::Tanh { x } => {
                let d = unary_grad(&self.values[x.0], g, |_, y| T::one() - y * y, &self.values[i]);
                add_into(&mut self.adj(x).data, &d);
            }
            Op::Add { a, b } => {
                if self.rg(a) {
                    add_into(&mut self.adj(a).data, &g.data);
                }
                if self.rg(b) {
                    add_into(&mut self.adj(b).data, &g.data);
                }
            }
            Op::Mul { a, b } => {
                if self.rg(a) {
                    let d: Vec<T> = g
                        .data
                        .iter()
                        .zip(&self.values[b.0].data)
                        .map(|(s, q)| *s * *q)
                        .collect();
                    add_into(&mut self.adj(a).data, &d);
                }
                if self.rg(b) {
                    let d: Vec<T> = g
                        .data
                        .iter()
                        .zip(&self.values[a.0].data)
                        .map(|(s, p)| *s * *p)
                        .collect();
                    add_into(&mut self.adj(b).data, &d);
                }
            }
            Op::ScaleShift { x, scale, .. } => {
                let d: Vec<T> = g.data.iter().map(|s| *s * scale).collect();
                add_into(&mut self.adj(x).data, &d);
            }
            Op::ColAffine { x, scale, .. } => {
                let mut d = vec![T::zero(); rows * cols];
                for r in 0..rows {
                    for c in 0..cols {
                        d[r * cols + c] = g.data[r * cols + c] * scale[c];
                    }
                }
                add_into(&mut self.adj(x).data, &d);
            }
            Op::ConcatCols { parts } => {
                let mut c0 = 0;
                for p in parts {
                    let pc = self.nodes[p.0].cols;
                    if self.rg(p) {
                        let dst = self.adj(p);
                        for r in 0..rows {
                            for c in 0..pc {
                                dst.data[r * pc + c] += g.data[r * cols + c0 + c];
                            }
                        }
                    }
                    c0 += pc;
                }
            }
            Op::SliceCols { x, start } => {
                let xc = self.nodes[x.0].cols;
                let dst = self.adj(x);
                for r in 0..rows {
                    for c in 0..cols {
                        dst.data[r * xc + start + c] += g.data[r * cols + c];
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let dst = self.adj(x);
                add_into(&mut dst.data[start * cols..(start + rows) * cols], &g.data);
            }
            Op::PosEnc { x, freqs } => {
                let xv = &self.values[x.0];
                let d = xv.cols;
                let mut dx = vec![T::zero(); xv.rows * d];
                for r in 0..rows {
                    let xr = xv.row(r);
                    let gr = g.row(r);
                    for j in 0..d {
                        let mut acc = gr[j];
                        let mut freq = T::PI();
                        for k in 0..freqs {
                            let (s, c) = (freq * xr[j]).sin_cos();
                            let gs = gr[d + 2 * (k * d + j)];
                            let gc = gr[d + 2 * (k * d + j) + 1];
                            acc += freq * (gs * c - gc * s);
                            freq = freq + freq;
                        }
                        dx[r * d + j] = acc;
                    }
                }
                add_into(&mut self.adj(x).data, &dx);
            }
            Op::Blend { a, b, w } => {
                if self.rg(a) || self.rg(b) {
                    let wv = &self.values[w.0];
                    let mut da = vec![T::zero(); rows * cols];
                    let mut db = vec![T::zero(); rows * cols];
                    for r in 0..rows {
                        let wr = wv.data[r];
                        for c in 0..cols {
                            let idx = r * cols + c;
                            da[idx] = g.data[idx] * wr;
                            db[idx] = g.data[idx] * (T::one() - wr);
                        }
                    }
                    if self.rg(a) {
                        add_into(&mut self.adj(a).data, &da);
                    }
                    if self.rg(b) {
                        add_into(&mut self.adj(b).data, &db);
                    }
                }
                if self.rg(w) {
                    let (av, bv) = (&self.values[a.0], &self.values[b.0]);
                    let mut dw = vec![T::zero(); rows];
                    for r in 0..rows {
                        let mut acc = T::zero();
                        for c in 0..cols {
                            let idx = r * cols + c;
                            acc += g.data[idx] * (av.data[idx] - bv.data[idx]);
                        }
                        dw[r] = acc;
                    }
                    add_into(&mut self.adj(w).data, &dw);
                }
            }
            Op::Bicubic {
                image,
                coords,
                width,
                height,
            } => {
                if self.rg(coords) {
                    let (img, co) = (&self.values[image.0], &self.values[coords.0]);
                    let mut dc = vec![T::zero(); rows * 2];
                    for r in 0..rows {
                        let (_, gx, gy) =
                            bicubic::sample_with_gradient(&img.data, width, height, co.data[2 * r], co.data[2 * r + 1]);
                        let gr = g.row(r);
                        dc[2 * r] = gr[0] * gx[0] + gr[1] * gx[1] + gr[2] * gx[2];
                        dc[2 * r + 1] = gr[0] * gy[0] + gr[1] * gy[1] + gr[2] * gy[2];
                    }
                    add_into(&mut self.adj(coords).data, &dc);
                }
                if self.rg(image) {
                    let co = self.values[coords.0].data.clone();
                    let dst = self.adj(image);
                    for r in 0..rows {
                        let tp = bicubic::taps(width, height, co[2 * r], co[2 * r + 1]);
                        let gr = g.row(r);
                        for j in 0..4 {
                            for ii in 0..4 {
                                let wgt = tp.wy[j] * tp.wx[ii];
                                let p = (tp.ys[j] * width + tp.xs[ii]) * 3;
                                for c in 0..3 {
                                    dst.data[p + c] += wgt * gr[c];
                                }
                            }
                        }
                    }
                }
            }
            Op::SquaredError { a, b } => {
                let s = g.data[0] + g.data[0];
                let d: Vec<T> = self.values[a.0]
                    .data
                    .iter()
                    .zip(&self.values[b.0].data)
                    .map(|(p, q)| s * (*p - *q))
                    .collect();
                if self.rg(a) {
                    add_into(&mut self.adj(a).data, &d);
                }
                if self.rg(b) {
                    let dst = self.adj(b);
                    for (o, v) in dst.data.iter_mut().zip(&d) {
                        *o -= *v;
                    }
                }
            }
            Op::Sum { parts } => {
                for p in parts {
                    if self.rg(p) {
                        self.adj(p).data[0] += g.data[0];
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(a: T) -> T {
    T::one() / (T::one() + (-a).exp())
}

fn map_into<T: Real>(out: &mut Tensor<T>, x: &Tensor<T>, f: impl Fn(T) -> T) {
    out.reset(x.rows, x.cols);
    for (o, a) in out.data.iter_mut().zip(&x.data) {
        *o = f(*a);
    }
}

fn zip_into<T: Real>(out: &mut Tensor<T>, a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) {
    out.reset(a.rows, a.cols);
    for ((o, p), q) in out.data.iter_mut().zip(&a.data).zip(&b.data) {
        *o = f(*p, *q);
    }
}

/// Elementwise chain rule; `f(input, output)` is the local derivative.
fn unary_grad<T: Real>(x: &Tensor<T>, g: &Tensor<T>, f: impl Fn(T, T) -> T, y: &Tensor<T>) -> Vec<T> {
    x.data
        .iter()
        .zip(&y.data)
        .zip(&g.data)
        .map(|((a, o), s)| *s * f(*a, *o))
        .collect()
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

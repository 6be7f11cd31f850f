//! The reconstruction graph of one GOP: network evaluation, warping,
//! blending, residual completion and the masked loss, recorded on a tape.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::gop::{FrameRefs, Gop};
use crate::{Error, Frame, Real, Result};

use super::config::{NetRole, NetworkSet};

/// Where a warped reference comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefSource {
    /// A decoded keyframe, by frame index.
    Key(usize),
    /// An earlier target of the same pipeline.
    Target(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Chain { reference: RefSource },
    Keys { own: usize, other: Option<usize> },
    Color,
}

/// One frame to reconstruct, at a possibly fractional time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub time: f64,
    pub kind: TargetKind,
}

/// Non-key frames of `gop` as pipeline targets, ordered so that every chain
/// reference precedes its dependents. Returns the targets and their frame
/// indices.
pub fn gop_targets(gop: &Gop, refs: &[FrameRefs], color: bool) -> Result<(Vec<Target>, Vec<usize>)> {
    let frames = gop.frames_by_distance();
    let mut targets = Vec::with_capacity(frames.len());
    for &f in &frames {
        let kind = if color {
            TargetKind::Color
        } else {
            match refs.get(f - gop.first) {
                Some(FrameRefs::Chain { reference }) if *reference == gop.key => TargetKind::Chain {
                    reference: RefSource::Key(gop.key),
                },
                Some(FrameRefs::Chain { reference }) => {
                    let j = frames
                        .iter()
                        .position(|g| g == reference)
                        .ok_or_else(|| Error::Malformed(format!("frame {f} references {reference} outside its GOP")))?;
                    TargetKind::Chain {
                        reference: RefSource::Target(j),
                    }
                }
                Some(FrameRefs::Keys { own, other }) => TargetKind::Keys {
                    own: *own,
                    other: *other,
                },
                _ => return Err(Error::Malformed(format!("frame {f} has no references"))),
            }
        };
        targets.push(Target { time: f as f64, kind });
    }
    Ok((targets, frames))
}

pub struct PipelineSpec<'a> {
    pub gop: Gop,
    pub nets: &'a NetworkSet,
    /// Output raster `(width, height)`.
    pub grid: (usize, usize),
    pub keyframes: &'a BTreeMap<usize, Frame>,
    pub targets: Vec<Target>,
    pub detach_references: bool,
}

pub struct Pipeline<T> {
    pub tape: Tape<T>,
    /// Unclamped reconstruction of each target (`(h * w) x 3`).
    pub outputs: Vec<NodeId>,
    /// Per-pixel weight of the own keyframe for two-reference targets.
    pub weights: Vec<Option<NodeId>>,
    /// Flow toward each reference in normalized units (`(h * w) x 2`).
    pub flows: Vec<Vec<NodeId>>,
    pub loss: Option<NodeId>,
    pub grid: (usize, usize),
    param_len: usize,
}

fn norm(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        2.0 * i as f64 / (n - 1) as f64 - 1.0
    }
}

fn to_pixel(i: usize, n: usize, m: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 * (m - 1) as f64 / (n - 1) as f64
    }
}

struct Sources {
    flow: (NodeId, usize),
    residual: Option<(NodeId, usize)>,
    color: Option<NodeId>,
}

impl<T: Real> Pipeline<T> {
    /// Records the graph. `supervision` pairs target indices with their ground
    /// truth; when present, `loss` is the mean squared error over all their
    /// channel values.
    pub fn build(spec: &PipelineSpec<'_>, supervision: Option<&[(usize, &Frame)]>) -> Result<Self> {
        let (gw, gh) = spec.grid;
        if gw == 0 || gh == 0 {
            return Err(Error::Dimensions("empty output grid".into()));
        }
        let hw = gw * gh;
        let n = spec.targets.len();
        let mut tape = Tape::new();

        let mut coords = Vec::with_capacity(n * hw * 3);
        for t in &spec.targets {
            let tn = spec.gop.normalized_time(t.time);
            if !(-1.0..=1.0).contains(&tn) {
                return Err(Error::TimeOutOfSpan(t.time));
            }
            for y in 0..gh {
                for x in 0..gw {
                    coords.push(T::of(norm(x, gw) as f32 as f64));
                    coords.push(T::of(norm(y, gh) as f32 as f64));
                    coords.push(T::of(tn as f32 as f64));
                }
            }
        }
        let coords = tape.constant(Tensor::from_vec(n * hw, 3, coords));

        let offsets = spec.nets.offsets();
        let mut raw = Vec::new();
        for ((_, s), off) in spec.nets.nets.iter().zip(&offsets) {
            raw.push(if n == 0 {
                coords
            } else {
                s.record(&mut tape, coords, *off)?
            });
        }
        let src = match spec.nets.nets.as_slice() {
            [(NetRole::Shared, s)] => Sources {
                flow: (raw[0], 0),
                residual: Some((raw[0], s.head.residual_columns().map_or(0, |r| r.start))),
                color: None,
            },
            [(NetRole::Flow, _), (NetRole::Residual, _)] => Sources {
                flow: (raw[0], 0),
                residual: Some((raw[1], 0)),
                color: None,
            },
            [(NetRole::Color, _)] => Sources {
                flow: (raw[0], 0),
                residual: None,
                color: Some(raw[0]),
            },
            _ => return Err(Error::HeadMismatch("unsupported network arrangement")),
        };

        let mut key_nodes: BTreeMap<usize, NodeId> = BTreeMap::new();
        let mut base_nodes: BTreeMap<(usize, usize), NodeId> = BTreeMap::new();
        let mut outputs: Vec<NodeId> = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut flows = Vec::with_capacity(n);

        for (i, t) in spec.targets.iter().enumerate() {
            let rows = |tape: &mut Tape<T>, node: NodeId, col: usize, len: usize| -> Result<NodeId> {
                let r = tape.slice_rows(node, i * hw, hw)?;
                tape.slice_cols(r, col, len)
            };
            let mut target_flows = Vec::new();
            let mut weight = None;
            let out = match t.kind {
                TargetKind::Color => {
                    let c = src
                        .color
                        .ok_or(Error::HeadMismatch("color target needs a color network"))?;
                    let c = rows(&mut tape, c, 0, 3)?;
                    let c = tape.tanh(c);
                    tape.scale_shift(c, T::of(0.5), T::of(0.5))
                }
                TargetKind::Chain { reference } => {
                    if src.color.is_some() {
                        return Err(Error::HeadMismatch("warp target needs a flow network"));
                    }
                    let (image, rw, rh) = match reference {
                        RefSource::Key(k) => {
                            let (node, f) = key_node(&mut tape, &mut key_nodes, spec.keyframes, k)?;
                            (node, f.0, f.1)
                        }
                        RefSource::Target(j) if j < i => {
                            let o = outputs[j];
                            let node = if spec.detach_references { tape.detach(o) } else { o };
                            (node, gw, gh)
                        }
                        RefSource::Target(j) => {
                            return Err(Error::Malformed(format!("target {i} references later target {j}")))
                        }
                    };
                    let d = rows(&mut tape, src.flow.0, src.flow.1, 2)?;
                    target_flows.push(d);
                    let warped = warp(&mut tape, &mut base_nodes, image, (rw, rh), (gw, gh), d)?;
                    complete(&mut tape, &src, warped, &rows)?
                }
                TargetKind::Keys { own, other } => {
                    if src.color.is_some() {
                        return Err(Error::HeadMismatch("warp target needs a flow network"));
                    }
                    let (img1, d1) = key_node(&mut tape, &mut key_nodes, spec.keyframes, own)?;
                    let f1 = rows(&mut tape, src.flow.0, src.flow.1, 2)?;
                    target_flows.push(f1);
                    let w1 = warp(&mut tape, &mut base_nodes, img1, d1, (gw, gh), f1)?;
                    let mixed = match other {
                        None => w1,
                        Some(k2) => {
                            let (img2, d2) = key_node(&mut tape, &mut key_nodes, spec.keyframes, k2)?;
                            let f2 = rows(&mut tape, src.flow.0, src.flow.1 + 2, 2)?;
                            target_flows.push(f2);
                            let w2 = warp(&mut tape, &mut base_nodes, img2, d2, (gw, gh), f2)?;
                            let logit = rows(&mut tape, src.flow.0, src.flow.1 + 4, 1)?;
                            let w = tape.sigmoid(logit);
                            weight = Some(w);
                            tape.blend(w1, w2, w)?
                        }
                    };
                    complete(&mut tape, &src, mixed, &rows)?
                }
            };
            outputs.push(out);
            weights.push(weight);
            flows.push(target_flows);
        }

        let loss = match supervision {
            None => None,
            Some(sup) => {
                if sup.is_empty() {
                    return Err(Error::EmptyBatch);
                }
                let mut terms = Vec::with_capacity(sup.len());
                for (i, gt) in sup {
                    if *i >= n {
                        return Err(Error::Dimensions(format!("supervised target {i} of {n}")));
                    }
                    if gt.dims() != (gw, gh) {
                        return Err(Error::Dimensions(format!(
                            "ground truth {}x{} for a {gw}x{gh} grid",
                            gt.width, gt.height
                        )));
                    }
                    let g = tape.constant(gt.to_tensor());
                    terms.push(tape.squared_error(outputs[*i], g)?);
                }
                let total = tape.sum(&terms)?;
                let z = (sup.len() * hw * 3) as f64;
                Some(tape.scale_shift(total, T::of(1.0 / z), T::zero()))
            }
        };

        Ok(Self {
            tape,
            outputs,
            weights,
            flows,
            loss,
            grid: spec.grid,
            param_len: spec.nets.param_count(),
        })
    }

    pub fn param_len(&self) -> usize {
        self.param_len
    }

    pub fn forward(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_len {
            return Err(Error::Dimensions(format!(
                "{} parameters for networks of {}",
                params.len(),
                self.param_len
            )));
        }
        self.tape.forward(params, &[])
    }

    /// Loss value after [`Pipeline::forward`].
    pub fn loss_value(&self) -> Option<T> {
        self.loss.map(|l| self.tape.value(l).data[0])
    }

    /// Gradient of the loss with respect to all parameters.
    pub fn gradient(&mut self) -> Result<Vec<T>> {
        let loss = self.loss.ok_or(Error::EmptyBatch)?;
        self.tape.backward(loss, self.param_len)
    }

    /// Unclamped reconstruction of target `i`.
    pub fn frame(&self, i: usize) -> Result<Frame> {
        Frame::from_tensor(self.grid.0, self.grid.1, self.tape.value(self.outputs[i]))
    }

    pub fn weight(&self, i: usize) -> Option<Vec<f32>> {
        self.weights[i].map(|w| self.tape.value(w).data.iter().map(|v| v.as_f64() as f32).collect())
    }

    /// Flow of target `i` toward reference `r` in normalized units.
    pub fn flow(&self, i: usize, r: usize) -> Option<Tensor<f32>> {
        self.flows[i].get(r).map(|f| self.tape.value(*f).cast())
    }
}

fn key_node<T: Real>(
    tape: &mut Tape<T>,
    cache: &mut BTreeMap<usize, NodeId>,
    keyframes: &BTreeMap<usize, Frame>,
    k: usize,
) -> Result<(NodeId, (usize, usize))> {
    let f = keyframes
        .get(&k)
        .ok_or_else(|| Error::Malformed(format!("keyframe {k} is not available")))?;
    let node = *cache.entry(k).or_insert_with(|| tape.constant(f.to_tensor()));
    Ok((node, f.dims()))
}

/// Samples `image` (`rw x rh`) at each grid pixel displaced by the
/// normalized flow `d`. Grid pixels map onto the reference with aligned
/// corners, so equal sizes give integer positions at zero flow.
fn warp<T: Real>(
    tape: &mut Tape<T>,
    base_cache: &mut BTreeMap<(usize, usize), NodeId>,
    image: NodeId,
    (rw, rh): (usize, usize),
    (gw, gh): (usize, usize),
    d: NodeId,
) -> Result<NodeId> {
    let base = *base_cache.entry((rw, rh)).or_insert_with(|| {
        let mut b = Vec::with_capacity(gw * gh * 2);
        for y in 0..gh {
            for x in 0..gw {
                b.push(T::of(to_pixel(x, gw, rw)));
                b.push(T::of(to_pixel(y, gh, rh)));
            }
        }
        tape.constant(Tensor::from_vec(gw * gh, 2, b))
    });
    let sx = T::of((rw.max(1) - 1) as f64 / 2.0);
    let sy = T::of((rh.max(1) - 1) as f64 / 2.0);
    let scaled = tape.col_affine(d, alloc::vec![sx, sy], alloc::vec![T::zero(), T::zero()])?;
    let pos = tape.add(scaled, base)?;
    tape.bicubic(image, rw, rh, pos)
}

/// Column slice of a node: `(tape, node, first column, count)`.
type RowsFn<'a, T> = dyn Fn(&mut Tape<T>, NodeId, usize, usize) -> Result<NodeId> + 'a;

fn complete<T: Real>(tape: &mut Tape<T>, src: &Sources, warped: NodeId, rows: &RowsFn<T>) -> Result<NodeId> {
    let (node, col) = src
        .residual
        .ok_or(Error::HeadMismatch("warp target needs a residual output"))?;
    let r = rows(tape, node, col, 3)?;
    tape.add(warped, r)
}

/// Mean squared error over the channel values of every non-key frame.
/// `key_indices` index into `reconstructions`.
pub fn loss_mse_masked(reconstructions: &[Frame], ground_truth: &[Frame], key_indices: &[usize]) -> Result<f64> {
    if reconstructions.len() != ground_truth.len() {
        return Err(Error::Dimensions(format!(
            "{} reconstructions for {} frames",
            reconstructions.len(),
            ground_truth.len()
        )));
    }
    if let Some(k) = key_indices.iter().find(|k| **k >= reconstructions.len()) {
        return Err(Error::Dimensions(format!("key index {k} out of range")));
    }
    let mut total = 0.0f64;
    let mut count = 0usize;
    for (i, (r, g)) in reconstructions.iter().zip(ground_truth).enumerate() {
        if key_indices.contains(&i) {
            continue;
        }
        if r.dims() != g.dims() {
            return Err(Error::Dimensions(format!("frame {i} shapes differ")));
        }
        for (a, b) in r.data.iter().zip(&g.data) {
            let d = *a as f64 - *b as f64;
            total += d * d;
        }
        count += r.data.len();
    }
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gop::{plan_gops, RefMode};
    use crate::trainer::config::{ArchConfig, Method};
    use alloc::vec;

    #[test]
    fn loss_examples() {
        let a = Frame::filled(3, 2, [0.2, 0.4, 0.6]);
        let b = Frame::filled(3, 2, [0.3, 0.5, 0.7]);
        assert_eq!(
            loss_mse_masked(core::slice::from_ref(&a), core::slice::from_ref(&a), &[]).unwrap(),
            0.0
        );
        let l = loss_mse_masked(&[a.clone(), b.clone()], &[b.clone(), b.clone()], &[1]).unwrap();
        assert!((l - 0.01).abs() < 1e-8);
        assert_eq!(
            loss_mse_masked(core::slice::from_ref(&a), &[b], &[0]),
            Err(Error::EmptyBatch)
        );
    }

    #[test]
    fn targets_chain_order() {
        let plan = plan_gops(5, 5, RefMode::SingleRef).unwrap();
        let (t, frames) = gop_targets(&plan.gops[0], &plan.refs, false).unwrap();
        assert_eq!(frames, vec![1, 3, 0, 4]);
        assert_eq!(
            t[0].kind,
            TargetKind::Chain {
                reference: RefSource::Key(2)
            }
        );
        assert_eq!(
            t[2].kind,
            TargetKind::Chain {
                reference: RefSource::Target(0)
            }
        );
        assert_eq!(
            t[3].kind,
            TargetKind::Chain {
                reference: RefSource::Target(1)
            }
        );
    }

    fn zero_motion_setup(method: Method) -> (NetworkSet, Vec<f32>) {
        let arch = ArchConfig::for_method(method);
        let nets = NetworkSet::for_budget(method, true, &arch, 300).unwrap();
        let p = vec![0.0; nets.param_count()];
        (nets, p)
    }

    #[test]
    fn zero_networks_copy_the_keyframe() {
        let key = Frame::from_fn(5, 4, |x, y| [x as f32 / 5.0, y as f32 / 4.0, 0.3]);
        let mut keys = BTreeMap::new();
        keys.insert(2, key.clone());
        let plan = plan_gops(5, 5, RefMode::SingleRef).unwrap();
        let (targets, _) = gop_targets(&plan.gops[0], &plan.refs, false).unwrap();
        let (nets, p) = zero_motion_setup(Method::NrffSingle);
        let spec = PipelineSpec {
            gop: plan.gops[0],
            nets: &nets,
            grid: (5, 4),
            keyframes: &keys,
            targets,
            detach_references: false,
        };
        let mut pipe = Pipeline::<f32>::build(&spec, None).unwrap();
        pipe.forward(&p).unwrap();
        for i in 0..4 {
            assert_eq!(pipe.frame(i).unwrap(), key);
        }
    }

    #[test]
    fn supervised_loss_matches_frame_loss() {
        let key = Frame::from_fn(4, 4, |x, y| [(x * y) as f32 / 9.0, 0.5, 0.1]);
        let mut keys = BTreeMap::new();
        keys.insert(1, key.clone());
        let plan = plan_gops(3, 3, RefMode::MultiRef).unwrap();
        let (targets, frames) = gop_targets(&plan.gops[0], &plan.refs, false).unwrap();
        let arch = ArchConfig::for_method(Method::NrffMulti);
        let nets = NetworkSet::for_budget(Method::NrffMulti, false, &arch, 400).unwrap();
        let p = nets.init(1).unwrap();
        let gts: Vec<Frame> = frames
            .iter()
            .map(|f| Frame::filled(4, 4, [0.1 * *f as f32, 0.2, 0.3]))
            .collect();
        let sup: Vec<(usize, &Frame)> = gts.iter().enumerate().collect();
        let spec = PipelineSpec {
            gop: plan.gops[0],
            nets: &nets,
            grid: (4, 4),
            keyframes: &keys,
            targets,
            detach_references: false,
        };
        let mut pipe = Pipeline::<f32>::build(&spec, Some(&sup)).unwrap();
        pipe.forward(&p).unwrap();
        let recon: Vec<Frame> = (0..2).map(|i| pipe.frame(i).unwrap()).collect();
        let expect = loss_mse_masked(&recon, &gts, &[]).unwrap();
        assert!((pipe.loss_value().unwrap() as f64 - expect).abs() < 1e-6);
        assert_eq!(pipe.gradient().unwrap().len(), nets.param_count());
    }

    #[test]
    fn missing_keyframe_is_an_error() {
        let keys = BTreeMap::new();
        let plan = plan_gops(3, 3, RefMode::SingleRef).unwrap();
        let (targets, _) = gop_targets(&plan.gops[0], &plan.refs, false).unwrap();
        let (nets, _) = zero_motion_setup(Method::NrffSingle);
        let spec = PipelineSpec {
            gop: plan.gops[0],
            nets: &nets,
            grid: (4, 4),
            keyframes: &keys,
            targets,
            detach_references: false,
        };
        assert!(Pipeline::<f32>::build(&spec, None).is_err());
    }
}

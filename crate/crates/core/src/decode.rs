//! Reconstruction from a bitstream alone, at the coded frame times and
//! resolution or on denser space and time grids.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::bitstream::Bitstream;
use crate::codec::KeyframeCodec;
use crate::fields::FieldNetwork;
use crate::gop::{plan_gops_with, GopPlan};
use crate::quant::dequantize_params;
use crate::trainer::{gop_targets, Method, NetRole, NetworkSet, Pipeline, PipelineSpec, Target, TargetKind};
use crate::warp::bicubic;
use crate::{Error, Frame, Result};

/// A validated bitstream with decoded keyframes and dequantized networks.
pub struct Decoder<'a> {
    pub bitstream: &'a Bitstream,
    pub plan: GopPlan,
    pub keyframes: BTreeMap<usize, Frame>,
    nets: Vec<(NetworkSet, Vec<f32>)>,
}

impl<'a> Decoder<'a> {
    pub fn new(bs: &'a Bitstream, codec: &dyn KeyframeCodec) -> Result<Self> {
        let h = &bs.header;
        if codec.id() != h.codec {
            return Err(Error::Codec(format!(
                "stream keyframes use {} but the {} codec was supplied",
                h.codec.name(),
                codec.id().name()
            )));
        }
        if h.width == 0 || h.height == 0 {
            return Err(Error::Malformed("zero frame size".into()));
        }
        let plan = plan_gops_with(h.frame_count, h.gop_size, h.method.ref_mode(), h.placement)
            .map_err(|e| Error::Malformed(format!("header: {e}")))?;
        if plan.gops.len() != bs.gops.len() {
            return Err(Error::Malformed(format!(
                "header implies {} GOPs, stream holds {}",
                plan.gops.len(),
                bs.gops.len()
            )));
        }
        let mut keyframes = BTreeMap::new();
        let mut nets = Vec::with_capacity(bs.gops.len());
        for (g, p) in plan.gops.iter().zip(&bs.gops) {
            if (g.first, g.last, g.key) != (p.first, p.last, p.key) {
                return Err(Error::Malformed(format!(
                    "GOP {}..={} key {} does not match the header plan",
                    p.first, p.last, p.key
                )));
            }
            let key = codec.decode(&p.keyframe)?;
            if key.dims() != (h.width, h.height) {
                return Err(Error::Malformed(format!("keyframe {} has the wrong size", g.key)));
            }
            keyframes.insert(g.key, key);
            let set = NetworkSet {
                nets: p.networks.iter().map(|n| (n.role, n.spec.clone())).collect(),
            };
            set.validate(h.method)?;
            if set.is_split() != h.split {
                return Err(Error::Malformed("network split flag disagrees with payload".into()));
            }
            let params: Vec<f32> = p.networks.iter().flat_map(|n| dequantize_params(&n.params)).collect();
            nets.push((set, params));
        }
        Ok(Self {
            bitstream: bs,
            plan,
            keyframes,
            nets,
        })
    }

    /// The dequantized networks of GOP `gop`.
    pub fn networks(&self, gop: usize) -> Result<Vec<(NetRole, FieldNetwork)>> {
        let (set, params) = self
            .nets
            .get(gop)
            .ok_or_else(|| Error::InvalidConfig(format!("no GOP {gop}")))?;
        set.networks(params)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.bitstream.header.width, self.bitstream.header.height)
    }

    /// Every coded frame at the coded resolution.
    pub fn decode_all(&self) -> Result<Vec<Frame>> {
        let times: Vec<f64> = (0..self.plan.frame_count()).map(|t| t as f64).collect();
        self.render(&times, 1)
    }

    /// Frames at arbitrary times in `[0, frame_count - 1]` on a grid `scale`
    /// times denser in each direction. Single-reference streams support
    /// whole frame times only, since each frame is built from its neighbor.
    pub fn render(&self, times: &[f64], scale: usize) -> Result<Vec<Frame>> {
        if scale == 0 {
            return Err(Error::InvalidConfig("scale must be at least 1".into()));
        }
        let (w, h) = self.dims();
        let grid = (w * scale, h * scale);
        let method = self.bitstream.header.method;
        let mut out: Vec<Option<Frame>> = alloc::vec![None; times.len()];
        let mut by_gop: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &t) in times.iter().enumerate() {
            let g = self.plan.gop_at_time(t).ok_or(Error::TimeOutOfSpan(t))?;
            if method == Method::NrffSingle && libm::trunc(t) != t {
                return Err(Error::InvalidConfig(format!(
                    "single-reference streams decode whole frame times only, got {t}"
                )));
            }
            by_gop.entry(g).or_default().push(i);
        }
        for (g, requests) in by_gop {
            let gop = self.plan.gops[g];
            let key = &self.keyframes[&gop.key];
            let (set, params) = &self.nets[g];
            let mut targets: Vec<Target> = Vec::new();
            let mut slot: Vec<(usize, usize)> = Vec::new();
            if method == Method::NrffSingle {
                let (chain, frames) = gop_targets(&gop, &self.plan.refs[gop.first..=gop.last], false)?;
                targets = chain;
                for &i in &requests {
                    let f = times[i] as usize;
                    if f == gop.key {
                        out[i] = Some(upsample(key, grid));
                    } else {
                        let j = frames.iter().position(|x| *x == f).expect("frame in GOP");
                        slot.push((i, j));
                    }
                }
            } else {
                for &i in &requests {
                    let t = times[i];
                    if t == gop.key as f64 {
                        out[i] = Some(upsample(key, grid));
                        continue;
                    }
                    let kind = if method == Method::BaselineColor {
                        TargetKind::Color
                    } else {
                        let other = if t < gop.key as f64 {
                            g.checked_sub(1).map(|p| self.plan.gops[p].key)
                        } else {
                            self.plan.gops.get(g + 1).map(|n| n.key)
                        };
                        TargetKind::Keys { own: gop.key, other }
                    };
                    slot.push((i, targets.len()));
                    targets.push(Target { time: t, kind });
                }
            }
            if slot.is_empty() {
                continue;
            }
            let spec = PipelineSpec {
                gop,
                nets: set,
                grid,
                keyframes: &self.keyframes,
                targets,
                detach_references: false,
            };
            let mut pipe = Pipeline::<f32>::build(&spec, None)?;
            pipe.forward(params)?;
            for (i, j) in slot {
                out[i] = Some(pipe.frame(j)?.clamped());
            }
        }
        Ok(out.into_iter().map(|f| f.expect("every request rendered")).collect())
    }
}

/// Bicubic resampling onto a `(width, height)` grid with aligned corners.
/// Same-size grids return the frame unchanged.
pub fn upsample(frame: &Frame, (gw, gh): (usize, usize)) -> Frame {
    if frame.dims() == (gw, gh) {
        return frame.clone();
    }
    let map = |i: usize, n: usize, m: usize| {
        if n <= 1 {
            0.0f32
        } else {
            (i as f64 * (m - 1) as f64 / (n - 1) as f64) as f32
        }
    };
    Frame::from_fn(gw, gh, |x, y| {
        bicubic::sample(
            &frame.data,
            frame.width,
            frame.height,
            map(x, gw, frame.width),
            map(y, gh, frame.height),
        )
    })
}

pub fn decode(bs: &Bitstream, codec: &dyn KeyframeCodec) -> Result<Vec<Frame>> {
    Decoder::new(bs, codec)?.decode_all()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Raw16;
    use crate::synth::Scene;
    use crate::trainer::{train_video, EncodeConfig};

    fn encode(method: Method) -> crate::trainer::EncodedVideo {
        let frames = Scene::translating().render(6, 5, 7);
        let mut cfg = EncodeConfig::new(method);
        cfg.gop_size = 4;
        cfg.train.iterations = 5;
        train_video(&frames, &cfg, &Raw16).unwrap()
    }

    #[test]
    fn decode_matches_trainer_reconstruction() {
        for m in [Method::NrffSingle, Method::NrffMulti, Method::BaselineColor] {
            let enc = encode(m);
            let back = decode(&enc.bitstream, &Raw16).unwrap();
            assert_eq!(back, enc.reconstruction, "{m:?}");
        }
    }

    #[test]
    fn scale_one_render_matches_decode() {
        let enc = encode(Method::NrffMulti);
        let d = Decoder::new(&enc.bitstream, &Raw16).unwrap();
        let all = d.decode_all().unwrap();
        assert_eq!(
            d.render(&[3.0, 0.0], 1).unwrap(),
            alloc::vec![all[3].clone(), all[0].clone()]
        );
        let up = d.render(&[2.5], 4).unwrap();
        assert_eq!(up[0].dims(), (24, 20));
    }

    #[test]
    fn time_outside_span_and_single_fraction() {
        let enc = encode(Method::NrffMulti);
        let d = Decoder::new(&enc.bitstream, &Raw16).unwrap();
        assert_eq!(d.render(&[6.5], 1), Err(Error::TimeOutOfSpan(6.5)));
        assert_eq!(d.render(&[-0.1], 1), Err(Error::TimeOutOfSpan(-0.1)));
        let enc = encode(Method::NrffSingle);
        let d = Decoder::new(&enc.bitstream, &Raw16).unwrap();
        assert!(d.render(&[1.5], 1).is_err());
        assert_eq!(d.render(&[4.0], 2).unwrap()[0].dims(), (12, 10));
    }

    #[test]
    fn upsample_keeps_corners() {
        let f = Scene::Static.frame(5, 4, 0.0);
        let u = upsample(&f, (20, 16));
        assert_eq!(u.get(0, 0), f.get(0, 0));
        assert_eq!(u.get(19, 15), f.get(4, 3));
    }
}

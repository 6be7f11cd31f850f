//! Per-GOP optimization of the field networks and whole-video encoding.

mod adam;
mod config;
mod pipeline;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use config::{
    ArchConfig, Batch, EncodeConfig, Method, NetRole, NetworkBudget, NetworkSet, RecursiveGradient, TrainConfig,
};
pub use pipeline::{gop_targets, loss_mse_masked, Pipeline, PipelineSpec, RefSource, Target, TargetKind};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bitstream::{self, Bitstream, GopPayload, Header, NetworkPayload, COORDS_CORNER_XY_CELL_T};
use crate::codec::KeyframeCodec;
use crate::gop::{plan_gops_with, FrameRefs, Gop, GopPlan};
use crate::metrics;
use crate::quant::{dequantize_params, quantize_params};
use crate::{Error, Frame, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub gop: usize,
    pub first: usize,
    pub last: usize,
    pub key: usize,
    pub iterations: usize,
    /// Loss after each iteration's forward pass.
    pub losses: Vec<f32>,
    /// Per-frame PSNR of the stored (half-precision) model, `first..=last`.
    pub psnr: Vec<f64>,
    /// Per-frame PSNR with full-precision parameters.
    pub psnr_fp32: Vec<f64>,
    /// Per-frame SSIM, absent for frames smaller than the SSIM window.
    pub ssim: Vec<Option<f64>>,
    pub param_count: usize,
    pub wall_time_s: Option<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f32> {
        self.losses.last().copied()
    }
}

/// Everything needed to train one GOP, independent of the other GOPs.
#[derive(Debug, Clone)]
pub struct GopJob {
    pub index: usize,
    pub gop: Gop,
    /// Ground truth for `first..=last`.
    pub frames: Vec<Frame>,
    /// Decoded keyframes this GOP references, including its own.
    pub keyframes: BTreeMap<usize, Frame>,
    /// References of `first..=last`.
    pub refs: Vec<FrameRefs>,
    pub nets: NetworkSet,
    pub config: TrainConfig,
}

#[derive(Debug, Clone)]
pub struct GopOutcome {
    pub index: usize,
    pub params: Vec<f32>,
    pub quantized: Vec<u16>,
    /// Clamped reconstruction of `first..=last` from the stored model.
    pub reconstruction: Vec<Frame>,
    pub reconstruction_fp32: Vec<Frame>,
    pub report: TrainReport,
}

fn mix_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

impl GopJob {
    fn targets(&self) -> Result<(Vec<Target>, Vec<usize>)> {
        gop_targets(&self.gop, &self.refs, self.config.method == Method::BaselineColor)
    }

    fn spec(&self, targets: Vec<Target>) -> PipelineSpec<'_> {
        PipelineSpec {
            gop: self.gop,
            nets: &self.nets,
            grid: self.frames[0].dims(),
            keyframes: &self.keyframes,
            targets,
            detach_references: self.config.recursive_gradient == RecursiveGradient::DetachReferences,
        }
    }

    fn validate(&self) -> Result<()> {
        self.config.validate()?;
        self.nets.validate(self.config.method)?;
        if self.frames.len() != self.gop.len() || self.refs.len() != self.gop.len() {
            return Err(Error::Dimensions(format!(
                "GOP {} spans {} frames but got {} frames and {} references",
                self.index,
                self.gop.len(),
                self.frames.len(),
                self.refs.len()
            )));
        }
        if !self.keyframes.contains_key(&self.gop.key) {
            return Err(Error::Malformed(format!(
                "GOP {} lacks its decoded keyframe",
                self.index
            )));
        }
        Ok(())
    }

    pub fn initial_params(&self) -> Result<Vec<f32>> {
        self.nets.init(mix_seed(self.config.seed, self.index))
    }

    /// Clamped reconstruction of every frame of the GOP with `params`.
    pub fn reconstruct(&self, params: &[f32]) -> Result<Vec<Frame>> {
        let (targets, frames) = self.targets()?;
        reconstruct_gop(&self.spec(targets), &frames, params)
    }

    /// Runs training from `params`, appending to `losses`.
    pub fn optimize(&self, params: &mut [f32], losses: &mut Vec<f32>) -> Result<()> {
        self.validate()?;
        let (targets, frames) = self.targets()?;
        // A GOP that is only its keyframe has nothing to fit.
        if targets.is_empty() {
            return Ok(());
        }
        let gt = |f: usize| &self.frames[f - self.gop.first];
        let lr = self.config.learning_rate;
        let mut state = AdamState::new(params.len());
        let fail = |iteration| Error::Divergence {
            gop: self.index,
            iteration,
        };
        let mut step = |pipe: &mut Pipeline<f32>, params: &mut [f32], it: usize, losses: &mut Vec<f32>| -> Result<()> {
            pipe.forward(params).map_err(|e| match e {
                Error::NonFinite { .. } => fail(it),
                e => e,
            })?;
            let loss = pipe.loss_value().ok_or(Error::EmptyBatch)?;
            if !loss.is_finite() {
                return Err(fail(it));
            }
            losses.push(loss);
            let g = pipe.gradient()?;
            adam_step(params, &g, &mut state, lr, &self.config.adam).map_err(|e| match e {
                Error::NonFinite { .. } => fail(it),
                e => e,
            })
        };
        match self.config.batch {
            Batch::AllFrames => {
                let sup: Vec<(usize, &Frame)> = frames.iter().enumerate().map(|(i, f)| (i, gt(*f))).collect();
                let mut pipe = Pipeline::build(&self.spec(targets), Some(&sup))?;
                for it in 0..self.config.iterations {
                    step(&mut pipe, params, it, losses)?;
                }
            }
            Batch::KFrames(k) => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.config.seed, self.index) ^ 0x5EED);
                let mut order: Vec<usize> = (0..targets.len()).collect();
                for it in 0..self.config.iterations {
                    order.shuffle(&mut rng);
                    let chosen = &order[..k.min(order.len())];
                    let (sub, map) = subset_with_ancestors(&targets, chosen);
                    let sup: Vec<(usize, &Frame)> = chosen.iter().map(|c| (map[*c].unwrap(), gt(frames[*c]))).collect();
                    let mut pipe = Pipeline::build(&self.spec(sub), Some(&sup))?;
                    step(&mut pipe, params, it, losses)?;
                }
            }
        }
        Ok(())
    }
}

/// Targets needed to evaluate `chosen` (chain references included), with
/// the new index of each original target.
fn subset_with_ancestors(targets: &[Target], chosen: &[usize]) -> (Vec<Target>, Vec<Option<usize>>) {
    let mut need = alloc::vec![false; targets.len()];
    for &c in chosen {
        let mut i = c;
        loop {
            need[i] = true;
            match targets[i].kind {
                TargetKind::Chain {
                    reference: RefSource::Target(j),
                } => i = j,
                _ => break,
            }
        }
    }
    let mut map = alloc::vec![None; targets.len()];
    let mut sub = Vec::new();
    for (i, t) in targets.iter().enumerate() {
        if need[i] {
            map[i] = Some(sub.len());
            let kind = match t.kind {
                TargetKind::Chain {
                    reference: RefSource::Target(j),
                } => TargetKind::Chain {
                    reference: RefSource::Target(map[j].expect("references precede dependents")),
                },
                k => k,
            };
            sub.push(Target { time: t.time, kind });
        }
    }
    (sub, map)
}

fn reconstruct_gop(spec: &PipelineSpec<'_>, frames: &[usize], params: &[f32]) -> Result<Vec<Frame>> {
    let gop = spec.gop;
    let key = spec
        .keyframes
        .get(&gop.key)
        .ok_or_else(|| Error::Malformed(format!("keyframe {} is not available", gop.key)))?;
    let mut out: Vec<Option<Frame>> = alloc::vec![None; gop.len()];
    out[gop.key - gop.first] = Some(key.clone());
    if !frames.is_empty() {
        let mut pipe = Pipeline::<f32>::build(spec, None)?;
        pipe.forward(params)?;
        for (i, f) in frames.iter().enumerate() {
            out[f - gop.first] = Some(pipe.frame(i)?.clamped());
        }
    }
    Ok(out.into_iter().map(|f| f.expect("every frame reconstructed")).collect())
}

#[cfg(feature = "std")]
fn now() -> Option<std::time::Instant> {
    Some(std::time::Instant::now())
}

#[cfg(not(feature = "std"))]
fn now() -> Option<()> {
    None
}

#[cfg(feature = "std")]
fn elapsed(t: Option<std::time::Instant>) -> Option<f64> {
    t.map(|t| t.elapsed().as_secs_f64())
}

#[cfg(not(feature = "std"))]
fn elapsed(_: Option<()>) -> Option<f64> {
    None
}

/// Trains one GOP from its seeded initialization and evaluates the result at
/// both precisions.
pub fn train_gop(job: &GopJob) -> Result<GopOutcome> {
    let start = now();
    let mut params = job.initial_params()?;
    let mut losses = Vec::with_capacity(job.config.iterations);
    job.optimize(&mut params, &mut losses)?;
    let quantized = quantize_params(&params)?;
    let stored = dequantize_params(&quantized);
    let reconstruction = job.reconstruct(&stored)?;
    let reconstruction_fp32 = job.reconstruct(&params)?;
    let mut psnr = Vec::new();
    let mut psnr_fp32 = Vec::new();
    let mut ssim = Vec::new();
    for ((r, r32), g) in reconstruction.iter().zip(&reconstruction_fp32).zip(&job.frames) {
        psnr.push(metrics::psnr(r, g)?);
        psnr_fp32.push(metrics::psnr(r32, g)?);
        ssim.push(metrics::ssim(r, g).ok());
    }
    let report = TrainReport {
        gop: job.index,
        first: job.gop.first,
        last: job.gop.last,
        key: job.gop.key,
        iterations: job.config.iterations,
        losses,
        psnr,
        psnr_fp32,
        ssim,
        param_count: params.len(),
        wall_time_s: elapsed(start),
    };
    Ok(GopOutcome {
        index: job.index,
        params,
        quantized,
        reconstruction,
        reconstruction_fp32,
        report,
    })
}

/// A video split into independent GOP jobs, with keyframes already coded.
#[derive(Debug, Clone)]
pub struct VideoJob {
    pub header: Header,
    pub plan: GopPlan,
    pub keyframe_payloads: Vec<Vec<u8>>,
    pub jobs: Vec<GopJob>,
    pub frames: Vec<Frame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoReport {
    pub gops: Vec<TrainReport>,
    pub psnr: f64,
    pub psnr_fp32: f64,
    /// Mean per-frame SSIM when frames are at least as large as the window.
    pub ssim: Option<f64>,
    pub bpp: f64,
    pub total_bytes: usize,
    pub keyframe_bytes: usize,
    pub network_bytes: usize,
    pub param_count: usize,
}

#[derive(Debug, Clone)]
pub struct EncodedVideo {
    pub bitstream: Bitstream,
    pub bytes: Vec<u8>,
    pub report: VideoReport,
    pub reconstruction: Vec<Frame>,
}

fn check_video(frames: &[Frame]) -> Result<(usize, usize)> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidConfig("video has no frames".into()))?;
    if let Some(i) = frames.iter().position(|f| f.dims() != first.dims()) {
        return Err(Error::Dimensions(format!("frame {i} differs in size from frame 0")));
    }
    Ok(first.dims())
}

/// Plans GOPs, codes every keyframe and sizes each GOP's networks.
pub fn prepare_video(frames: &[Frame], cfg: &EncodeConfig, codec: &dyn KeyframeCodec) -> Result<VideoJob> {
    cfg.validate()?;
    let (width, height) = check_video(frames)?;
    let method = cfg.train.method;
    let plan = plan_gops_with(frames.len(), cfg.gop_size, method.ref_mode(), cfg.placement)?;
    let mut payloads = Vec::with_capacity(plan.gops.len());
    let mut decoded = BTreeMap::new();
    for g in &plan.gops {
        let bytes = codec.encode(&frames[g.key])?;
        let back = codec.decode(&bytes)?;
        if back.dims() != (width, height) {
            return Err(Error::Codec(format!("keyframe {} decoded to a different size", g.key)));
        }
        decoded.insert(g.key, back);
        payloads.push(bytes);
    }
    let mut jobs = Vec::with_capacity(plan.gops.len());
    for (i, g) in plan.gops.iter().enumerate() {
        let budget = cfg.budget.params(payloads[i].len());
        let nets = NetworkSet::for_budget(method, cfg.train.split_networks, &cfg.arch, budget)?;
        let refs = plan.refs[g.first..=g.last].to_vec();
        let mut keyframes = BTreeMap::new();
        keyframes.insert(g.key, decoded[&g.key].clone());
        for r in &refs {
            if let FrameRefs::Keys { other: Some(k), .. } = r {
                keyframes.insert(*k, decoded[k].clone());
            }
        }
        jobs.push(GopJob {
            index: i,
            gop: *g,
            frames: frames[g.first..=g.last].to_vec(),
            keyframes,
            refs,
            nets,
            config: cfg.train.clone(),
        });
    }
    let header = Header {
        width,
        height,
        frame_count: frames.len(),
        gop_size: cfg.gop_size,
        method,
        placement: cfg.placement,
        split: cfg.train.split_networks && method != Method::BaselineColor,
        codec: codec.id(),
        coord_convention: COORDS_CORNER_XY_CELL_T,
        arch: cfg.arch,
    };
    Ok(VideoJob {
        header,
        plan,
        keyframe_payloads: payloads,
        jobs,
        frames: frames.to_vec(),
    })
}

/// Assembles the bitstream and aggregate report from per-GOP outcomes given
/// in any order.
pub fn finish_video(video: VideoJob, mut outcomes: Vec<GopOutcome>) -> Result<EncodedVideo> {
    outcomes.sort_by_key(|o| o.index);
    if outcomes.len() != video.jobs.len() || outcomes.iter().enumerate().any(|(i, o)| o.index != i) {
        return Err(Error::Malformed("missing or duplicate GOP outcomes".into()));
    }
    let mut gops = Vec::with_capacity(outcomes.len());
    let mut recon = Vec::with_capacity(video.frames.len());
    let mut recon32 = Vec::with_capacity(video.frames.len());
    for (job, o) in video.jobs.iter().zip(&outcomes) {
        let mut networks = Vec::new();
        let mut off = 0;
        for (role, spec) in &job.nets.nets {
            let n = spec.param_count();
            networks.push(NetworkPayload {
                role: *role,
                spec: spec.clone(),
                params: o.quantized[off..off + n].to_vec(),
            });
            off += n;
        }
        gops.push(GopPayload {
            first: job.gop.first,
            last: job.gop.last,
            key: job.gop.key,
            keyframe: video.keyframe_payloads[job.index].clone(),
            networks,
        });
        recon.extend(o.reconstruction.iter().cloned());
        recon32.extend(o.reconstruction_fp32.iter().cloned());
    }
    let bs = Bitstream {
        header: video.header.clone(),
        gops,
    };
    let bytes = bitstream::serialize(&bs)?;
    let h = &bs.header;
    let ssim = metrics::ssim_video(&recon, &video.frames).ok();
    let report = VideoReport {
        psnr: metrics::psnr_video(&recon, &video.frames)?,
        psnr_fp32: metrics::psnr_video(&recon32, &video.frames)?,
        ssim,
        bpp: metrics::bpp(bytes.len(), h.width, h.height, h.frame_count)?,
        total_bytes: bytes.len(),
        keyframe_bytes: bs.keyframe_bytes(),
        network_bytes: bs.network_bytes(),
        param_count: outcomes.iter().map(|o| o.params.len()).sum(),
        gops: outcomes.into_iter().map(|o| o.report).collect(),
    };
    Ok(EncodedVideo {
        bitstream: bs,
        bytes,
        report,
        reconstruction: recon,
    })
}

/// Sequential whole-video encode.
pub fn train_video(frames: &[Frame], cfg: &EncodeConfig, codec: &dyn KeyframeCodec) -> Result<EncodedVideo> {
    let video = prepare_video(frames, cfg, codec)?;
    let outcomes = video.jobs.iter().map(train_gop).collect::<Result<Vec<_>>>()?;
    finish_video(video, outcomes)
}

//! JSON training report written next to every encode.

use std::collections::BTreeMap;

use nrff_core::trainer::{TrainReport, VideoReport};
use serde::{Serialize, Serializer};

use crate::settings::{Settings, KEYS};

/// Finite values as numbers, infinite PSNR as the string `"inf"`.
fn db<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    }
}

fn db_vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Db(#[serde(serialize_with = "db")] f64);
    s.collect_seq(v.iter().map(|x| Db(*x)))
}

#[derive(Debug, Clone, Serialize)]
pub struct GopReport {
    pub index: usize,
    pub first: usize,
    pub last: usize,
    pub key: usize,
    pub param_count: usize,
    pub iterations: usize,
    pub final_loss: Option<f32>,
    /// Per frame, `first..=last`, keyframe included.
    #[serde(serialize_with = "db_vec")]
    pub psnr: Vec<f64>,
    #[serde(serialize_with = "db_vec")]
    pub psnr_fp32: Vec<f64>,
    pub ssim: Vec<Option<f64>>,
    pub wall_time_s: Option<f64>,
    pub losses: Vec<f32>,
}

impl From<&TrainReport> for GopReport {
    fn from(r: &TrainReport) -> Self {
        Self {
            index: r.gop,
            first: r.first,
            last: r.last,
            key: r.key,
            param_count: r.param_count,
            iterations: r.iterations,
            final_loss: r.final_loss(),
            psnr: r.psnr.clone(),
            psnr_fp32: r.psnr_fp32.clone(),
            ssim: r.ssim.clone(),
            wall_time_s: r.wall_time_s,
            losses: r.losses.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EncodeReport {
    pub input: String,
    pub output: String,
    pub config: BTreeMap<String, String>,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    #[serde(serialize_with = "db")]
    pub psnr: f64,
    #[serde(serialize_with = "db")]
    pub psnr_fp32: f64,
    pub ssim: Option<f64>,
    pub bpp: f64,
    pub total_bytes: usize,
    pub keyframe_bytes: usize,
    pub network_bytes: usize,
    pub param_count: usize,
    pub wall_time_s: f64,
    pub gops: Vec<GopReport>,
}

impl EncodeReport {
    pub fn new(
        input: &str,
        output: &str,
        settings: &Settings,
        dims: (usize, usize, usize),
        report: &VideoReport,
        wall_time_s: f64,
    ) -> Self {
        Self {
            input: input.into(),
            output: output.into(),
            config: KEYS.iter().map(|(k, _)| (k.to_string(), settings.get(k))).collect(),
            width: dims.0,
            height: dims.1,
            frames: dims.2,
            psnr: report.psnr,
            psnr_fp32: report.psnr_fp32,
            ssim: report.ssim,
            bpp: report.bpp,
            total_bytes: report.total_bytes,
            keyframe_bytes: report.keyframe_bytes,
            network_bytes: report.network_bytes,
            param_count: report.param_count,
            wall_time_s,
            gops: report.gops.iter().map(GopReport::from).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

//! The `nrff` command line.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nrff_core::bitstream::{deserialize, Bitstream};
use nrff_core::codec::KeyframeCodec;
use nrff_core::decode::Decoder;
use nrff_core::metrics::{bpp, psnr_video, rd_csv, rd_gnuplot, ssim_video, RdPoint};
use nrff_core::synth::Scene;
use nrff_core::trainer::{finish_video, prepare_video, train_gop, EncodeConfig, EncodedVideo};
use nrff_core::Frame;
use rayon::prelude::*;

use crate::codecs::codec_for;
use crate::error::{Error, Result};
use crate::frame_io::{load_sequence, save_frame, save_sequence, ImageFormat};
use crate::report::EncodeReport;
use crate::settings::Settings;

#[derive(Debug, Parser)]
#[command(name = "nrff", version, about = "Neural residual flow field video codec")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode an image sequence into a .nrff bitstream plus a JSON report.
    Encode(EncodeArgs),
    /// Reconstruct every frame of a bitstream.
    Decode {
        input: PathBuf,
        output_dir: PathBuf,
        #[arg(long, default_value = "ppm")]
        format: String,
    },
    /// Rate and distortion of a bitstream against a reference sequence, as CSV.
    Eval {
        input: PathBuf,
        reference: PathBuf,
        /// Row label; defaults to the bitstream's mode.
        #[arg(long)]
        label: Option<String>,
        /// Also write the CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also write gnuplot data here.
        #[arg(long)]
        gnuplot: Option<PathBuf>,
    },
    /// Render on a denser grid or at intermediate times, without retraining.
    Interp {
        input: PathBuf,
        /// Output directory, or an image file for a single --time.
        output: PathBuf,
        /// Spatial upsampling factor.
        #[arg(long, default_value_t = 1)]
        scale: usize,
        /// Frame times to render (fractional allowed); all frames if absent.
        #[arg(long = "time")]
        times: Vec<f64>,
        #[arg(long, default_value = "ppm")]
        format: String,
    },
    /// Write a synthetic test video.
    Synth {
        /// translating | occlusion | static | uniform-motion
        kind: String,
        output_dir: PathBuf,
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value = "ppm")]
        format: String,
    },
    /// Print every encoder setting with its effective value.
    ConfigDump {
        #[command(flatten)]
        settings: SettingArgs,
    },
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Directory of numbered frames or a pattern such as `dir/frame_%04d.ppm`.
    pub input: PathBuf,
    pub output: PathBuf,
    /// JSON report path; defaults to the output path with `.json` appended.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub settings: SettingArgs,
}

/// Flags overriding the config file and environment.
#[derive(Debug, Args, Default)]
pub struct SettingArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub split: Option<String>,
    #[arg(long)]
    pub gop: Option<String>,
    #[arg(long)]
    pub placement: Option<String>,
    #[arg(long)]
    pub ratio: Option<String>,
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long)]
    pub iters: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub keyframe_codec: Option<String>,
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub depth: Option<String>,
    #[arg(long)]
    pub omega0: Option<String>,
    #[arg(long)]
    pub swish_beta: Option<String>,
    #[arg(long)]
    pub posenc: Option<String>,
    #[arg(long)]
    pub recursive_gradient: Option<String>,
    #[arg(long)]
    pub jobs: Option<String>,
}

impl SettingArgs {
    fn flags(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("mode", &self.mode),
            ("split", &self.split),
            ("gop", &self.gop),
            ("placement", &self.placement),
            ("ratio", &self.ratio),
            ("params", &self.params),
            ("iters", &self.iters),
            ("lr", &self.lr),
            ("seed", &self.seed),
            ("batch", &self.batch),
            ("keyframe_codec", &self.keyframe_codec),
            ("activation", &self.activation),
            ("depth", &self.depth),
            ("omega0", &self.omega0),
            ("swish_beta", &self.swish_beta),
            ("posenc", &self.posenc),
            ("recursive_gradient", &self.recursive_gradient),
            ("jobs", &self.jobs),
        ]
    }

    pub fn resolve(&self) -> Result<Settings> {
        let mut s = Settings::load(self.config.as_deref())?;
        for (k, v) in self.flags() {
            if let Some(v) = v {
                s.set(k, v)
                    .map_err(|e| Error::Usage(format!("--{}: {e}", k.replace('_', "-"))))?;
            }
        }
        Ok(s)
    }
}

/// Trains the GOPs of `frames` on `jobs` threads (0 for every core). The
/// result does not depend on the thread count.
pub fn encode_frames(
    frames: &[Frame],
    cfg: &EncodeConfig,
    codec: &dyn KeyframeCodec,
    jobs: usize,
) -> Result<EncodedVideo> {
    let video = prepare_video(frames, cfg, codec)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Data(format!("thread pool: {e}")))?;
    let outcomes = pool.install(|| {
        video
            .jobs
            .par_iter()
            .map(train_gop)
            .collect::<nrff_core::Result<Vec<_>>>()
    })?;
    Ok(finish_video(video, outcomes)?)
}

pub fn read_bitstream(path: &Path) -> Result<(Bitstream, usize)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bs = deserialize(&bytes).map_err(|e| Error::file(path, e.to_string()))?;
    Ok((bs, bytes.len()))
}

fn default_report_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn encode(args: &EncodeArgs) -> Result<()> {
    let settings = args.settings.resolve()?;
    let cfg = settings.encode_config()?;
    let seq = load_sequence(&args.input)?;
    let codec = codec_for(settings.keyframe_codec);
    let start = Instant::now();
    let enc = encode_frames(&seq.frames, &cfg, codec.as_ref(), settings.jobs)?;
    let wall = start.elapsed().as_secs_f64();
    std::fs::write(&args.output, &enc.bytes).map_err(|e| Error::io(&args.output, e))?;
    let (w, h) = seq.frames[0].dims();
    let report = EncodeReport::new(
        &args.input.display().to_string(),
        &args.output.display().to_string(),
        &settings,
        (w, h, seq.frames.len()),
        &enc.report,
        wall,
    );
    let report_path = args.report.clone().unwrap_or_else(|| default_report_path(&args.output));
    std::fs::write(&report_path, report.to_json()).map_err(|e| Error::io(&report_path, e))?;
    println!(
        "{}: {} GOPs, {} bytes, {:.4} bpp, PSNR {:.3} dB, {:.1} s",
        args.output.display(),
        enc.bitstream.gops.len(),
        enc.bytes.len(),
        enc.report.bpp,
        enc.report.psnr,
        wall
    );
    Ok(())
}

fn decoder_for(bs: &Bitstream) -> Box<dyn KeyframeCodec> {
    codec_for(bs.header.codec)
}

fn decode(input: &Path, out: &Path, format: &str) -> Result<()> {
    let format = ImageFormat::parse(format)?;
    let (bs, _) = read_bitstream(input)?;
    let codec = decoder_for(&bs);
    let frames = Decoder::new(&bs, codec.as_ref())?.decode_all()?;
    save_sequence(&frames, out, format)?;
    println!("{}: {} frames", out.display(), frames.len());
    Ok(())
}

/// Rate-distortion point of a bitstream file against reference frames.
pub fn evaluate(input: &Path, reference: &Path, label: Option<&str>) -> Result<RdPoint> {
    let (bs, len) = read_bitstream(input)?;
    let codec = decoder_for(&bs);
    let frames = Decoder::new(&bs, codec.as_ref())?.decode_all()?;
    let refs = load_sequence(reference)?.frames;
    if refs.len() != frames.len() || refs[0].dims() != frames[0].dims() {
        let (w, h) = refs[0].dims();
        return Err(Error::Data(format!(
            "reference has {} frames of {w}x{h}, bitstream {} of {}x{}",
            refs.len(),
            frames.len(),
            bs.header.width,
            bs.header.height
        )));
    }
    let h = &bs.header;
    Ok(RdPoint {
        label: label.unwrap_or(h.method.name()).to_string(),
        bpp: bpp(len, h.width, h.height, h.frame_count)?,
        psnr_db: psnr_video(&frames, &refs)?,
        ssim: ssim_video(&frames, &refs)?,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn interp(input: &Path, output: &Path, scale: usize, times: &[f64], format: &str) -> Result<()> {
    if scale == 0 {
        return Err(Error::Usage("--scale must be at least 1".into()));
    }
    let (bs, _) = read_bitstream(input)?;
    let codec = decoder_for(&bs);
    let dec = Decoder::new(&bs, codec.as_ref())?;
    let times: Vec<f64> = if times.is_empty() {
        (0..bs.header.frame_count).map(|t| t as f64).collect()
    } else {
        times.to_vec()
    };
    let frames = dec.render(&times, scale)?;
    if times.len() == 1 && ImageFormat::from_path(output).is_some() {
        save_frame(&frames[0], output)?;
    } else {
        save_sequence(&frames, output, ImageFormat::parse(format)?)?;
    }
    let (w, h) = frames[0].dims();
    println!("{}: {} frames of {w}x{h}", output.display(), frames.len());
    Ok(())
}

pub fn synth_scene(kind: &str, width: usize, height: usize, frames: usize) -> Result<Scene> {
    Ok(match kind {
        "translating" => Scene::translating(),
        "occlusion" => Scene::occlusion(width, frames),
        "static" => Scene::Static,
        "uniform-motion" | "uniform_motion" => Scene::uniform_motion(width, height, frames),
        _ => {
            return Err(Error::Usage(format!(
                "unknown synthetic video {kind:?} (translating, occlusion, static, uniform-motion)"
            )))
        }
    })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode(args) => encode(&args),
        Command::Decode {
            input,
            output_dir,
            format,
        } => decode(&input, &output_dir, &format),
        Command::Eval {
            input,
            reference,
            label,
            csv,
            gnuplot,
        } => {
            let p = vec![evaluate(&input, &reference, label.as_deref())?];
            let table = rd_csv(&p);
            print!("{table}");
            if let Some(path) = csv {
                write(&path, &table)?;
            }
            if let Some(path) = gnuplot {
                write(&path, &rd_gnuplot(&p))?;
            }
            Ok(())
        }
        Command::Interp {
            input,
            output,
            scale,
            times,
            format,
        } => interp(&input, &output, scale, &times, &format),
        Command::Synth {
            kind,
            output_dir,
            width,
            height,
            frames,
            format,
        } => {
            let format = ImageFormat::parse(&format)?;
            if width == 0 || height == 0 || frames == 0 {
                return Err(Error::Usage("width, height and frames must be positive".into()));
            }
            let scene = synth_scene(&kind, width, height, frames)?;
            save_sequence(&scene.render(width, height, frames), &output_dir, format)?;
            println!("{}: {frames} frames of {width}x{height}", output_dir.display());
            Ok(())
        }
        Command::ConfigDump { settings } => {
            let s = settings.resolve()?;
            s.encode_config()?;
            print!("{}", s.dump());
            Ok(())
        }
    }
}

/// Parses arguments and runs, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

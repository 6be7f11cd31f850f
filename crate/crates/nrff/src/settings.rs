//! Encoder settings from defaults, a `key = value` config file, `NRFF_*`
//! environment variables and command-line flags, in increasing precedence.
//!
//! Config files hold one `key = value` per line; `#` starts a comment. Every
//! key has an environment variable named `NRFF_` plus the key in upper case.
//! `nrff config-dump` prints all keys with their effective values in the
//! same format.

use std::fmt::Write as _;
use std::path::Path;

use nrff_core::codec::CodecId;
use nrff_core::fields::Activation;
use nrff_core::gop::KeyPlacement;
use nrff_core::trainer::{
    AdamConfig, ArchConfig, Batch, EncodeConfig, Method, NetworkBudget, RecursiveGradient, TrainConfig,
};

use crate::codecs::{parse_codec, EXTERNAL_DECODE_VAR, EXTERNAL_ENCODE_VAR};
use crate::error::{Error, Result};

/// Names a config file to read before the environment overrides.
pub const CONFIG_VAR: &str = "NRFF_CONFIG";

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub mode: Method,
    pub split: bool,
    pub gop: usize,
    pub placement: KeyPlacement,
    pub ratio: f64,
    /// Fixed parameter budget per GOP; overrides `ratio` when set.
    pub params: Option<usize>,
    pub iters: usize,
    /// `None` means the mode's default.
    pub lr: Option<f32>,
    pub seed: u64,
    pub batch: Batch,
    pub keyframe_codec: CodecId,
    /// `None` means the mode's default.
    pub activation: Option<Activation>,
    pub depth: usize,
    pub omega0: f32,
    pub swish_beta: f32,
    /// `None` means 6 for swish and 0 for sine.
    pub posenc: Option<usize>,
    pub recursive_gradient: RecursiveGradient,
    pub adam: AdamConfig,
    /// GOPs trained concurrently; 0 uses every core.
    pub jobs: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let t = TrainConfig::new(Method::NrffSingle);
        let a = ArchConfig::for_method(Method::NrffSingle);
        let e = EncodeConfig::new(Method::NrffSingle);
        Self {
            mode: Method::NrffSingle,
            split: t.split_networks,
            gop: e.gop_size,
            placement: e.placement,
            ratio: match e.budget {
                NetworkBudget::KeyframeRatio(r) => r,
                NetworkBudget::Params(_) => 0.25,
            },
            params: None,
            iters: t.iterations,
            lr: None,
            seed: t.seed,
            batch: t.batch,
            keyframe_codec: CodecId::Raw16,
            activation: None,
            depth: a.hidden_depth,
            omega0: a.omega0,
            swish_beta: a.swish_beta,
            posenc: None,
            recursive_gradient: t.recursive_gradient,
            adam: t.adam,
            jobs: 1,
        }
    }
}

/// Every settable key with its description.
pub const KEYS: &[(&str, &str)] = &[
    ("mode", "nrff_single | nrff_multi | baseline_color"),
    ("split", "separate flow and residual networks (true | false)"),
    ("gop", "frames per group of pictures, at least 2"),
    ("placement", "keyframe position in each GOP: middle | first"),
    ("ratio", "network bytes per keyframe byte"),
    ("params", "fixed parameter budget per GOP, or none to use ratio"),
    ("iters", "training iterations per GOP"),
    (
        "lr",
        "Adam learning rate, or default for the mode's (5e-4 single, 1e-2 multi, 1e-3 baseline)",
    ),
    ("seed", "initialization and minibatch seed"),
    ("batch", "frames per iteration: all | a count"),
    ("keyframe_codec", "raw16 | png | external"),
    (
        "activation",
        "sine | swish, or default (sine for single and baseline, swish for multi)",
    ),
    ("depth", "hidden layers per network"),
    ("omega0", "sine frequency scale"),
    ("swish_beta", "swish slope"),
    (
        "posenc",
        "positional encoding frequencies, or default (6 for swish, 0 for sine)",
    ),
    (
        "recursive_gradient",
        "single-reference chain gradients: full_chain | detach_references",
    ),
    ("adam_beta1", "Adam first moment decay"),
    ("adam_beta2", "Adam second moment decay"),
    ("adam_eps", "Adam denominator offset"),
    ("jobs", "GOPs trained in parallel, 0 for all cores"),
];

pub fn env_var(key: &str) -> String {
    format!("NRFF_{}", key.to_ascii_uppercase())
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Usage(format!("invalid value {v:?} for {key}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Usage(format!(
            "invalid value {v:?} for {key} (expected true or false)"
        ))),
    }
}

fn is_default(v: &str) -> bool {
    matches!(v, "default" | "none" | "")
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "mode" => self.mode = Method::parse(v).map_err(|e| Error::Usage(e.to_string()))?,
            "split" => self.split = parse_bool(key, v)?,
            "gop" => self.gop = parse(key, v)?,
            "placement" => {
                self.placement = match v {
                    "middle" => KeyPlacement::Middle,
                    "first" => KeyPlacement::First,
                    _ => {
                        return Err(Error::Usage(format!(
                            "invalid value {v:?} for placement (middle | first)"
                        )))
                    }
                }
            }
            "ratio" => self.ratio = parse(key, v)?,
            "params" => self.params = if is_default(v) { None } else { Some(parse(key, v)?) },
            "iters" => self.iters = parse(key, v)?,
            "lr" => self.lr = if is_default(v) { None } else { Some(parse(key, v)?) },
            "seed" => self.seed = parse(key, v)?,
            "batch" => {
                self.batch = if v == "all" {
                    Batch::AllFrames
                } else {
                    Batch::KFrames(parse(key, v)?)
                }
            }
            "keyframe_codec" => self.keyframe_codec = parse_codec(v)?,
            "activation" => {
                self.activation = match v {
                    "sine" => Some(Activation::Sine),
                    "swish" => Some(Activation::Swish),
                    _ if is_default(v) => None,
                    _ => {
                        return Err(Error::Usage(format!(
                            "invalid value {v:?} for activation (sine | swish)"
                        )))
                    }
                }
            }
            "depth" => self.depth = parse(key, v)?,
            "omega0" => self.omega0 = parse(key, v)?,
            "swish_beta" => self.swish_beta = parse(key, v)?,
            "posenc" => self.posenc = if is_default(v) { None } else { Some(parse(key, v)?) },
            "recursive_gradient" => {
                self.recursive_gradient = match v {
                    "full_chain" => RecursiveGradient::FullChain,
                    "detach_references" | "detach" => RecursiveGradient::DetachReferences,
                    _ => {
                        return Err(Error::Usage(format!(
                            "invalid value {v:?} for recursive_gradient (full_chain | detach_references)"
                        )))
                    }
                }
            }
            "adam_beta1" => self.adam.beta1 = parse(key, v)?,
            "adam_beta2" => self.adam.beta2 = parse(key, v)?,
            "adam_eps" => self.adam.eps = parse(key, v)?,
            "jobs" => self.jobs = parse(key, v)?,
            _ => return Err(Error::Usage(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines.
    pub fn apply_config(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Usage(format!("{origin}:{}: expected key = value", n + 1)))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Usage(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_config_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_config(&text, &path.display().to_string())
    }

    /// Applies `NRFF_<KEY>` variables from `vars`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        for (name, value) in vars {
            if let Some((key, _)) = KEYS.iter().find(|(k, _)| env_var(k) == name) {
                self.set(key, &value)
                    .map_err(|e| Error::Usage(format!("{name}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Defaults, then the config file named by `NRFF_CONFIG` or `config`, then
    /// the process environment.
    pub fn load(config: Option<&Path>) -> Result<Self> {
        let mut s = Settings::default();
        let from_env = std::env::var_os(CONFIG_VAR).map(std::path::PathBuf::from);
        if let Some(p) = config.map(Path::to_path_buf).or(from_env) {
            s.apply_config_file(&p)?;
        }
        s.apply_env(std::env::vars())?;
        Ok(s)
    }

    pub fn arch(&self) -> ArchConfig {
        let mut a = ArchConfig::for_method(self.mode);
        if let Some(act) = self.activation {
            a = ArchConfig { activation: act, ..a };
            a.posenc_freqs = ArchConfig::for_method(match act {
                Activation::Sine => Method::NrffSingle,
                Activation::Swish => Method::NrffMulti,
            })
            .posenc_freqs;
        }
        a.hidden_depth = self.depth;
        a.omega0 = self.omega0;
        a.swish_beta = self.swish_beta;
        if let Some(l) = self.posenc {
            a.posenc_freqs = l;
        }
        a
    }

    pub fn learning_rate(&self) -> f32 {
        self.lr.unwrap_or_else(|| self.mode.default_learning_rate())
    }

    /// The validated encoder configuration.
    pub fn encode_config(&self) -> Result<EncodeConfig> {
        if self.gop < 2 {
            return Err(Error::Usage(format!("gop must be at least 2, got {}", self.gop)));
        }
        if self.iters == 0 {
            return Err(Error::Usage("iters must be at least 1".into()));
        }
        let cfg = EncodeConfig {
            gop_size: self.gop,
            placement: self.placement,
            budget: match self.params {
                Some(n) => NetworkBudget::Params(n),
                None => NetworkBudget::KeyframeRatio(self.ratio),
            },
            arch: self.arch(),
            train: TrainConfig {
                method: self.mode,
                split_networks: self.split,
                iterations: self.iters,
                learning_rate: self.learning_rate(),
                batch: self.batch,
                seed: self.seed,
                adam: self.adam,
                recursive_gradient: self.recursive_gradient,
            },
        };
        cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
        Ok(cfg)
    }

    /// Effective value of `key`, with mode defaults resolved.
    pub fn get(&self, key: &str) -> String {
        let a = self.arch();
        match key {
            "mode" => self.mode.name().into(),
            "split" => self.split.to_string(),
            "gop" => self.gop.to_string(),
            "placement" => match self.placement {
                KeyPlacement::Middle => "middle".into(),
                KeyPlacement::First => "first".into(),
            },
            "ratio" => self.ratio.to_string(),
            "params" => self.params.map_or("none".into(), |n| n.to_string()),
            "iters" => self.iters.to_string(),
            "lr" => self.learning_rate().to_string(),
            "seed" => self.seed.to_string(),
            "batch" => match self.batch {
                Batch::AllFrames => "all".into(),
                Batch::KFrames(k) => k.to_string(),
            },
            "keyframe_codec" => self.keyframe_codec.name().into(),
            "activation" => match a.activation {
                Activation::Sine => "sine".into(),
                Activation::Swish => "swish".into(),
            },
            "depth" => a.hidden_depth.to_string(),
            "omega0" => a.omega0.to_string(),
            "swish_beta" => a.swish_beta.to_string(),
            "posenc" => a.posenc_freqs.to_string(),
            "recursive_gradient" => match self.recursive_gradient {
                RecursiveGradient::FullChain => "full_chain".into(),
                RecursiveGradient::DetachReferences => "detach_references".into(),
            },
            "adam_beta1" => self.adam.beta1.to_string(),
            "adam_beta2" => self.adam.beta2.to_string(),
            "adam_eps" => self.adam.eps.to_string(),
            "jobs" => self.jobs.to_string(),
            _ => String::new(),
        }
    }

    /// All settings as a config file, each preceded by its description and
    /// environment variable.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# nrff encoder settings. Precedence: defaults < config file ({CONFIG_VAR} or --config)"
        );
        let _ = writeln!(out, "# < environment < command-line flags.");
        let _ = writeln!(
            out,
            "# External keyframe codec commands: {EXTERNAL_ENCODE_VAR}, {EXTERNAL_DECODE_VAR}"
        );
        let _ = writeln!(out, "# ('{{input}}' and '{{output}}' are replaced by file paths).");
        for (k, desc) in KEYS {
            let _ = writeln!(out, "\n# {desc}\n# env: {}\n{k} = {}", env_var(k), self.get(k));
        }
        out
    }
}

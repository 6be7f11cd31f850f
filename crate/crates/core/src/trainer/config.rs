use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::ParamVector;
use crate::fields::{
    split_widths, width_for_budget, Activation, FieldNetwork, FieldNetworkSpec, Head, DEFAULT_OMEGA0,
    DEFAULT_POSENC_FREQS, DEFAULT_SWISH_BETA,
};
use crate::gop::{KeyPlacement, RefMode};
use crate::{Error, Result};

use super::adam::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    NrffSingle,
    NrffMulti,
    BaselineColor,
}

impl Method {
    pub fn ref_mode(self) -> RefMode {
        match self {
            Method::NrffMulti => RefMode::MultiRef,
            Method::NrffSingle | Method::BaselineColor => RefMode::SingleRef,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::NrffSingle => "nrff_single",
            Method::NrffMulti => "nrff_multi",
            Method::BaselineColor => "baseline_color",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nrff_single" | "single" | "single_ref" => Ok(Method::NrffSingle),
            "nrff_multi" | "multi" | "multi_ref" => Ok(Method::NrffMulti),
            "baseline_color" | "baseline" => Ok(Method::BaselineColor),
            _ => Err(Error::InvalidConfig(format!("unknown mode {s:?}"))),
        }
    }

    pub fn default_learning_rate(self) -> f32 {
        match self {
            Method::NrffSingle => 5e-4,
            Method::NrffMulti => 1e-2,
            Method::BaselineColor => 1e-3,
        }
    }

    /// Sine for the single-reference and color fields, swish with positional
    /// encoding for multi-reference.
    pub fn default_activation(self) -> Activation {
        match self {
            Method::NrffMulti => Activation::Swish,
            Method::NrffSingle | Method::BaselineColor => Activation::Sine,
        }
    }

    pub fn to_u8(self) -> u8 {
        match self {
            Method::NrffSingle => 0,
            Method::NrffMulti => 1,
            Method::BaselineColor => 2,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Method::NrffSingle),
            1 => Ok(Method::NrffMulti),
            2 => Ok(Method::BaselineColor),
            _ => Err(Error::Malformed(format!("unknown mode {v}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Batch {
    AllFrames,
    /// Random subset of non-key frames per iteration.
    KFrames(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecursiveGradient {
    /// Backpropagate through every reference reconstruction of the chain.
    #[default]
    FullChain,
    /// Treat reference reconstructions as constants.
    DetachReferences,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub split_networks: bool,
    pub iterations: usize,
    pub learning_rate: f32,
    pub batch: Batch,
    pub seed: u64,
    pub adam: AdamConfig,
    pub recursive_gradient: RecursiveGradient,
}

impl TrainConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            split_networks: false,
            iterations: 300,
            learning_rate: method.default_learning_rate(),
            batch: Batch::AllFrames,
            seed: 0,
            adam: AdamConfig::default(),
            recursive_gradient: RecursiveGradient::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.method == Method::NrffSingle && self.batch == Batch::KFrames(1) {
            return Err(Error::InvalidConfig(
                "nrff_single with a one-frame batch is unstable; use at least two frames".into(),
            ));
        }
        if self.batch == Batch::KFrames(0) {
            return Err(Error::InvalidConfig("batch must hold at least one frame".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Shape of every field network; the width comes from the budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArchConfig {
    pub activation: Activation,
    pub hidden_depth: usize,
    pub omega0: f32,
    pub swish_beta: f32,
    pub posenc_freqs: usize,
}

impl ArchConfig {
    pub fn for_method(method: Method) -> Self {
        let activation = method.default_activation();
        Self {
            activation,
            hidden_depth: 2,
            omega0: DEFAULT_OMEGA0,
            swish_beta: DEFAULT_SWISH_BETA,
            posenc_freqs: match activation {
                Activation::Sine => 0,
                Activation::Swish => DEFAULT_POSENC_FREQS,
            },
        }
    }

    pub fn spec(&self, head: Head, width: usize) -> FieldNetworkSpec {
        let mut s = FieldNetworkSpec::new(head, self.activation, width, self.hidden_depth);
        s.sine_omega0 = self.omega0;
        s.swish_beta = self.swish_beta;
        s.posenc_freqs = self.posenc_freqs;
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NetworkBudget {
    /// Network bytes as a fraction of the GOP's keyframe bytes.
    KeyframeRatio(f64),
    /// Fixed parameter count per GOP.
    Params(usize),
}

impl NetworkBudget {
    /// Parameter count for a GOP whose keyframe payload is `key_bytes` long,
    /// at two bytes per stored parameter.
    pub fn params(self, key_bytes: usize) -> usize {
        match self {
            NetworkBudget::KeyframeRatio(r) => libm::floor(r * key_bytes as f64 / 2.0) as usize,
            NetworkBudget::Params(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeConfig {
    pub gop_size: usize,
    pub placement: KeyPlacement,
    pub budget: NetworkBudget,
    pub arch: ArchConfig,
    pub train: TrainConfig,
}

impl EncodeConfig {
    pub fn new(method: Method) -> Self {
        Self {
            gop_size: 5,
            placement: KeyPlacement::Middle,
            budget: NetworkBudget::KeyframeRatio(0.25),
            arch: ArchConfig::for_method(method),
            train: TrainConfig::new(method),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.arch.hidden_depth == 0 {
            return Err(Error::InvalidConfig("hidden depth must be at least 1".into()));
        }
        if let NetworkBudget::KeyframeRatio(r) = self.budget {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::InvalidConfig(format!("size ratio {r} must be positive")));
            }
        }
        Ok(())
    }
}

/// Which part of the reconstruction a network produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetRole {
    Shared,
    Flow,
    Residual,
    Color,
}

impl NetRole {
    pub fn to_u8(self) -> u8 {
        match self {
            NetRole::Shared => 0,
            NetRole::Flow => 1,
            NetRole::Residual => 2,
            NetRole::Color => 3,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(NetRole::Shared),
            1 => Ok(NetRole::Flow),
            2 => Ok(NetRole::Residual),
            3 => Ok(NetRole::Color),
            _ => Err(Error::Malformed(format!("unknown network role {v}"))),
        }
    }
}

/// The networks of one GOP. Parameters are stored back to back in the
/// listed order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSet {
    pub nets: Vec<(NetRole, FieldNetworkSpec)>,
}

impl NetworkSet {
    /// Sizes the networks of `method` to about `budget` parameters in total.
    pub fn for_budget(method: Method, split: bool, arch: &ArchConfig, budget: usize) -> Result<Self> {
        let multi = method == Method::NrffMulti;
        let nets = match (method, split) {
            (Method::BaselineColor, _) => {
                // Match what a single-reference encode of the same GOP would
                // actually store, so the comparison is at equal bytes.
                let nrff = ArchConfig {
                    hidden_depth: arch.hidden_depth,
                    ..ArchConfig::for_method(Method::NrffSingle)
                };
                let shared = nrff.spec(Head::FlowAndResidualShared { multi: false }, 1);
                let target = shared
                    .clone()
                    .with_width(width_for_budget(&shared, budget))
                    .param_count();
                let t = arch.spec(Head::Color, 1);
                let w = width_for_budget(&t, target);
                alloc::vec![(NetRole::Color, t.with_width(w))]
            }
            (_, false) => {
                let t = arch.spec(Head::FlowAndResidualShared { multi }, 1);
                let w = width_for_budget(&t, budget);
                alloc::vec![(NetRole::Shared, t.with_width(w))]
            }
            (_, true) => {
                let flow_head = if multi { Head::FlowMulti } else { Head::FlowSingle };
                let f = arch.spec(flow_head, 1);
                let r = arch.spec(Head::Residual, 1);
                // Match the shared network's actual size, not the raw budget.
                let shared = arch.spec(Head::FlowAndResidualShared { multi }, 1);
                let target = shared
                    .clone()
                    .with_width(width_for_budget(&shared, budget))
                    .param_count();
                let (wf, wr) = split_widths(&f, &r, target);
                alloc::vec![(NetRole::Flow, f.with_width(wf)), (NetRole::Residual, r.with_width(wr))]
            }
        };
        let set = Self { nets };
        set.validate(method)?;
        Ok(set)
    }

    pub fn validate(&self, method: Method) -> Result<()> {
        let multi = method == Method::NrffMulti;
        let ok = match (method, self.nets.as_slice()) {
            (Method::BaselineColor, [(NetRole::Color, s)]) => s.head == Head::Color,
            (Method::BaselineColor, _) => false,
            (_, [(NetRole::Shared, s)]) => s.head == Head::FlowAndResidualShared { multi },
            (_, [(NetRole::Flow, f), (NetRole::Residual, r)]) => {
                f.head == if multi { Head::FlowMulti } else { Head::FlowSingle } && r.head == Head::Residual
            }
            _ => false,
        };
        if !ok {
            return Err(Error::HeadMismatch("network set does not match the coding mode"));
        }
        for (_, s) in &self.nets {
            s.validate()?;
        }
        Ok(())
    }

    pub fn is_split(&self) -> bool {
        self.nets.len() == 2
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(|(_, s)| s.param_count()).sum()
    }

    /// Start of each network's parameters in the concatenated vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.nets
            .iter()
            .map(|(_, s)| {
                let o = off;
                off += s.param_count();
                o
            })
            .collect()
    }

    /// Concatenated seeded initialization.
    pub fn init(&self, seed: u64) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(self.param_count());
        for (i, (_, s)) in self.nets.iter().enumerate() {
            let p = crate::fields::init_network(s, seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64))?;
            out.extend_from_slice(p.as_slice());
        }
        Ok(out)
    }

    /// Splits a concatenated parameter vector into standalone networks.
    pub fn networks(&self, params: &[f32]) -> Result<Vec<(NetRole, FieldNetwork)>> {
        if params.len() != self.param_count() {
            return Err(Error::Dimensions(format!(
                "{} parameters for a network set of {}",
                params.len(),
                self.param_count()
            )));
        }
        self.nets
            .iter()
            .zip(self.offsets())
            .map(|((role, s), o)| {
                let p = ParamVector::new(params[o..o + s.param_count()].to_vec(), s.layout())?;
                Ok((*role, FieldNetwork::new(s.clone(), p)?))
            })
            .collect()
    }
}

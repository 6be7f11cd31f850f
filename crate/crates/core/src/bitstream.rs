//! The `.nrff` container. All integers are little-endian; the layout is
//! listed byte by byte in `docs/bitstream.md`.

use alloc::format;
use alloc::vec::Vec;

use crate::codec::CodecId;
use crate::fields::{Activation, FieldNetworkSpec, Head};
use crate::gop::KeyPlacement;
use crate::trainer::{ArchConfig, Method, NetRole};
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"NRFF";
pub const VERSION: u16 = 1;

/// x and y sampled with aligned corners over `[-1, 1]`; t at the centers of
/// per-frame cells spanning the GOP.
pub const COORDS_CORNER_XY_CELL_T: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub gop_size: usize,
    pub method: Method,
    pub placement: KeyPlacement,
    pub split: bool,
    pub codec: CodecId,
    pub coord_convention: u8,
    pub arch: ArchConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkPayload {
    pub role: NetRole,
    pub spec: FieldNetworkSpec,
    /// Half-precision bit patterns.
    pub params: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GopPayload {
    pub first: usize,
    pub last: usize,
    pub key: usize,
    pub keyframe: Vec<u8>,
    pub networks: Vec<NetworkPayload>,
}

impl GopPayload {
    pub fn network_bytes(&self) -> usize {
        self.networks.iter().map(|n| n.params.len() * 2).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bitstream {
    pub header: Header,
    pub gops: Vec<GopPayload>,
}

impl Bitstream {
    pub fn keyframe_bytes(&self) -> usize {
        self.gops.iter().map(|g| g.keyframe.len()).sum()
    }

    pub fn network_bytes(&self) -> usize {
        self.gops.iter().map(|g| g.network_bytes()).sum()
    }
}

fn head_to_u8(h: Head) -> u8 {
    match h {
        Head::FlowSingle => 0,
        Head::FlowMulti => 1,
        Head::Residual => 2,
        Head::Color => 3,
        Head::FlowAndResidualShared { multi: false } => 4,
        Head::FlowAndResidualShared { multi: true } => 5,
    }
}

fn head_from_u8(v: u8) -> Result<Head> {
    Ok(match v {
        0 => Head::FlowSingle,
        1 => Head::FlowMulti,
        2 => Head::Residual,
        3 => Head::Color,
        4 => Head::FlowAndResidualShared { multi: false },
        5 => Head::FlowAndResidualShared { multi: true },
        _ => return Err(Error::Malformed(format!("unknown head {v}"))),
    })
}

fn activation_to_u8(a: Activation) -> u8 {
    match a {
        Activation::Sine => 0,
        Activation::Swish => 1,
    }
}

fn activation_from_u8(v: u8) -> Result<Activation> {
    match v {
        0 => Ok(Activation::Sine),
        1 => Ok(Activation::Swish),
        _ => Err(Error::Malformed(format!("unknown activation {v}"))),
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: usize, what: &str) -> Result<()> {
        let v = u16::try_from(v).map_err(|_| Error::Malformed(format!("{what} {v} exceeds 16 bits")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u32(&mut self, v: usize, what: &str) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Malformed(format!("{what} {v} exceeds 32 bits")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn f32(&mut self, v: f32) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated(self.buf.len()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_bits(u32::from_le_bytes(self.take(4)?.try_into().unwrap())))
    }
}

pub fn serialize(bs: &Bitstream) -> Result<Vec<u8>> {
    let h = &bs.header;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&MAGIC);
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    w.u32(h.width, "width")?;
    w.u32(h.height, "height")?;
    w.u32(h.frame_count, "frame count")?;
    w.u32(h.gop_size, "GOP size")?;
    w.u8(h.method.to_u8());
    w.u8(match h.placement {
        KeyPlacement::Middle => 0,
        KeyPlacement::First => 1,
    });
    w.u8(h.split as u8);
    w.u8(h.codec as u8);
    w.u8(h.coord_convention);
    w.u8(activation_to_u8(h.arch.activation));
    w.u16(h.arch.hidden_depth, "depth")?;
    w.f32(h.arch.omega0);
    w.f32(h.arch.swish_beta);
    w.u8(u8::try_from(h.arch.posenc_freqs).map_err(|_| Error::Malformed("too many frequencies".into()))?);
    w.u32(bs.gops.len(), "GOP count")?;
    for g in &bs.gops {
        w.u32(g.first, "first frame")?;
        w.u32(g.last, "last frame")?;
        w.u32(g.key, "keyframe")?;
        w.u32(g.keyframe.len(), "keyframe length")?;
        w.0.extend_from_slice(&g.keyframe);
        w.u8(u8::try_from(g.networks.len()).map_err(|_| Error::Malformed("too many networks".into()))?);
        for n in &g.networks {
            let s = &n.spec;
            if n.params.len() != s.param_count() {
                return Err(Error::Malformed(format!(
                    "{} parameters for a network of {}",
                    n.params.len(),
                    s.param_count()
                )));
            }
            w.u8(n.role.to_u8());
            w.u8(head_to_u8(s.head));
            w.u8(activation_to_u8(s.activation));
            w.u16(s.input_dim, "input dim")?;
            w.u16(s.hidden_width, "width")?;
            w.u16(s.hidden_depth, "depth")?;
            w.f32(s.sine_omega0);
            w.f32(s.swish_beta);
            w.u8(u8::try_from(s.posenc_freqs).map_err(|_| Error::Malformed("too many frequencies".into()))?);
            w.u32(n.params.len(), "parameter count")?;
            for p in &n.params {
                w.0.extend_from_slice(&p.to_le_bytes());
            }
        }
    }
    Ok(w.0)
}

pub fn deserialize(bytes: &[u8]) -> Result<Bitstream> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let width = r.u32()?;
    let height = r.u32()?;
    let frame_count = r.u32()?;
    let gop_size = r.u32()?;
    let method = Method::from_u8(r.u8()?)?;
    let placement = match r.u8()? {
        0 => KeyPlacement::Middle,
        1 => KeyPlacement::First,
        v => return Err(Error::Malformed(format!("unknown keyframe placement {v}"))),
    };
    let split = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::Malformed(format!("split flag {v}"))),
    };
    let codec = CodecId::from_u8(r.u8()?)?;
    let coord_convention = r.u8()?;
    if coord_convention != COORDS_CORNER_XY_CELL_T {
        return Err(Error::Malformed(format!(
            "unknown coordinate convention {coord_convention}"
        )));
    }
    let arch = ArchConfig {
        activation: activation_from_u8(r.u8()?)?,
        hidden_depth: r.u16()? as usize,
        omega0: r.f32()?,
        swish_beta: r.f32()?,
        posenc_freqs: r.u8()? as usize,
    };
    let gop_count = r.u32()?;
    let mut gops = Vec::new();
    for _ in 0..gop_count {
        let first = r.u32()?;
        let last = r.u32()?;
        let key = r.u32()?;
        let key_len = r.u32()?;
        let keyframe = r.take(key_len)?.to_vec();
        let net_count = r.u8()?;
        let mut networks = Vec::with_capacity(net_count as usize);
        for _ in 0..net_count {
            let role = NetRole::from_u8(r.u8()?)?;
            let head = head_from_u8(r.u8()?)?;
            let activation = activation_from_u8(r.u8()?)?;
            let spec = FieldNetworkSpec {
                input_dim: r.u16()? as usize,
                hidden_width: r.u16()? as usize,
                hidden_depth: r.u16()? as usize,
                activation,
                sine_omega0: r.f32()?,
                swish_beta: r.f32()?,
                posenc_freqs: r.u8()? as usize,
                head,
            };
            let count = r.u32()?;
            if count != spec.param_count() {
                return Err(Error::Malformed(format!(
                    "{count} parameters for a network of {}",
                    spec.param_count()
                )));
            }
            let raw = r.take(count * 2)?;
            let params = raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
            networks.push(NetworkPayload { role, spec, params });
        }
        gops.push(GopPayload {
            first,
            last,
            key,
            keyframe,
            networks,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Bitstream {
        header: Header {
            width,
            height,
            frame_count,
            gop_size,
            method,
            placement,
            split,
            codec,
            coord_convention,
            arch,
        },
        gops,
    })
}

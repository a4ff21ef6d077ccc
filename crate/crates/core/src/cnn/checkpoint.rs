//! Binary checkpoint codec.
//!
//! Layout (little-endian):
//!
//! ```text
//! "M2MC"              magic
//! u16                 version (1)
//! u16                 layer count
//! per layer:
//!   u8                kind (1 conv, 2 relu, 3 maxpool, 4 flatten, 5 dense, 6 dropout)
//!   u32 * n           shape fields: conv in,out,kernel,stride,padding; maxpool size;
//!                     dense in,out; dropout rate as f32 bits; none for relu/flatten
//!   f32 * m           weights then biases, row-major
//! u32                 CRC32 of every preceding byte
//! ```

use alloc::vec::Vec;

use super::layer::{Layer, LayerSpec};
use super::network::Network;
use super::CnnError;

pub const MAGIC: &[u8; 4] = b"M2MC";
pub const VERSION: u16 = 1;

fn kind_code(spec: &LayerSpec) -> u8 {
    match spec {
        LayerSpec::Conv1d { .. } => 1,
        LayerSpec::Relu => 2,
        LayerSpec::MaxPool1d { .. } => 3,
        LayerSpec::Flatten => 4,
        LayerSpec::Dense { .. } => 5,
        LayerSpec::Dropout { .. } => 6,
    }
}

/// Serialize a network. Parameters are written as f32; networks produced by
/// [`Network::new`] and training are already f32-exact, so nothing is lost.
pub fn save_checkpoint(net: &Network) -> Result<Vec<u8>, CnnError> {
    if !net.params_finite() {
        return Err(CnnError::NonFiniteParameters);
    }
    let layer_count = u16::try_from(net.layers().len()).map_err(|_| CnnError::InvalidLayer("too many layers".into()))?;
    let mut out = Vec::with_capacity(8 + net.parameter_count() * 4 + 32 * net.layers().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&layer_count.to_le_bytes());
    let put_u32 = |out: &mut Vec<u8>, v: usize| -> Result<(), CnnError> {
        let v = u32::try_from(v).map_err(|_| CnnError::InvalidLayer("dimension exceeds u32".into()))?;
        out.extend_from_slice(&v.to_le_bytes());
        Ok(())
    };
    for layer in net.layers() {
        out.push(kind_code(&layer.spec));
        match layer.spec {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_size,
                stride,
                padding,
            } => {
                for v in [in_channels, out_channels, kernel_size, stride, padding] {
                    put_u32(&mut out, v)?;
                }
            }
            LayerSpec::MaxPool1d { pool_size } => put_u32(&mut out, pool_size)?,
            LayerSpec::Dense {
                in_features,
                out_features,
            } => {
                put_u32(&mut out, in_features)?;
                put_u32(&mut out, out_features)?;
            }
            LayerSpec::Dropout { rate } => out.extend_from_slice(&(rate as f32).to_bits().to_le_bytes()),
            LayerSpec::Relu | LayerSpec::Flatten => {}
        }
        for &p in layer.weights.iter().chain(&layer.biases) {
            out.extend_from_slice(&(p as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CnnError> {
        let end = self.pos.checked_add(n).ok_or(CnnError::TruncatedFile)?;
        let s = self.buf.get(self.pos..end).ok_or(CnnError::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CnnError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CnnError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CnnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn dim(&mut self) -> Result<usize, CnnError> {
        Ok(self.u32()? as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, CnnError> {
        let bytes = self.take(n.checked_mul(4).ok_or(CnnError::TruncatedFile)?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<Network, CnnError> {
    if bytes.len() < 4 {
        return Err(CnnError::TruncatedFile);
    }
    if &bytes[..4] != MAGIC {
        return Err(CnnError::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r.u16()?;
    if version != VERSION {
        return Err(CnnError::VersionMismatch(version));
    }
    let count = r.u16()? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let spec = match r.u8()? {
            1 => LayerSpec::Conv1d {
                in_channels: r.dim()?,
                out_channels: r.dim()?,
                kernel_size: r.dim()?,
                stride: r.dim()?,
                padding: r.dim()?,
            },
            2 => LayerSpec::Relu,
            3 => LayerSpec::MaxPool1d { pool_size: r.dim()? },
            4 => LayerSpec::Flatten,
            5 => LayerSpec::Dense {
                in_features: r.dim()?,
                out_features: r.dim()?,
            },
            6 => LayerSpec::Dropout {
                rate: f32::from_bits(r.u32()?) as f64,
            },
            k => return Err(CnnError::InvalidLayer(alloc::format!("unknown layer kind {k}"))),
        };
        spec.validate()?;
        let (nw, nb) = spec.param_counts();
        if nw.saturating_add(nb).saturating_mul(4) > bytes.len() {
            return Err(CnnError::TruncatedFile);
        }
        let weights = r.f32s(nw)?;
        let biases = r.f32s(nb)?;
        layers.push(Layer::with_params(spec, weights, biases)?);
    }
    let body_end = r.pos;
    let stored = r.u32()?;
    if r.pos != bytes.len() {
        return Err(CnnError::TrailingBytes);
    }
    if crc32fast::hash(&bytes[..body_end]) != stored {
        return Err(CnnError::ChecksumMismatch);
    }
    Network::from_layers(layers)
}

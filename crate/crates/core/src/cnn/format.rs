//! Portable little-endian weight file.
//!
//! ```text
//! header  : "CNNW" | version u32 | layer_count u32
//!           | in_channels u32 | in_height u32 | in_width u32
//!           | code_layer_index u32 | mean_len u32 | mean f32 × mean_len
//! layer   : kind u8, then
//!   1 conv    : out_ch in_ch kh kw stride padding (u32) | relu u8
//!               | weights f32 [out_ch][in_ch][kh][kw] | biases f32 [out_ch]
//!   2 relu    : -
//!   3 maxpool : field stride (u32)
//!   4 fc      : out_dim in_dim (u32) | relu u8
//!               | weights f32 [out_dim][in_dim] | biases f32 [out_dim]
//!   5 softmax : -
//! ```

use std::path::Path;

use super::{CnnError, ConvLayer, FcLayer, LayerSpec, Network, PoolLayer};

pub const MAGIC: [u8; 4] = *b"CNNW";
pub const FORMAT_VERSION: u32 = 1;

const TAG_CONV: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_MAXPOOL: u8 = 3;
const TAG_FC: u8 = 4;
const TAG_SOFTMAX: u8 = 5;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CnnError> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < n {
            return Err(CnnError::Truncated {
                offset: self.pos,
                needed: n - remaining,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CnnError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CnnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn dim(&mut self) -> Result<usize, CnnError> {
        self.u32().map(|v| v as usize)
    }

    fn flag(&mut self, layer: usize, kind: &'static str) -> Result<bool, CnnError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(CnnError::InvalidLayer {
                layer,
                kind,
                message: format!("relu flag must be 0 or 1, got {v}"),
            }),
        }
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, CnnError> {
        let needed = n.checked_mul(4).ok_or(CnnError::Truncated {
            offset: self.pos,
            needed: usize::MAX,
        })?;
        Ok(self
            .take(needed)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn network_from_bytes(bytes: &[u8]) -> Result<Network, CnnError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(CnnError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CnnError::UnsupportedVersion(version));
    }
    let count = r.dim()?;
    if count == 0 {
        return Err(CnnError::EmptyNetwork);
    }
    let input = (r.dim()?, r.dim()?, r.dim()?);
    let code_layer_index = r.dim()?;
    let mean_len = r.dim()?;
    let mean = r.f32s(mean_len)?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let layer = match r.u8()? {
            TAG_CONV => {
                let (out_channels, in_channels, kernel_h, kernel_w) = (r.dim()?, r.dim()?, r.dim()?, r.dim()?);
                let (stride, padding) = (r.dim()?, r.dim()?);
                let relu = r.flag(i, "conv")?;
                let weights = r.f32s(out_channels * in_channels * kernel_h * kernel_w)?;
                let biases = r.f32s(out_channels)?;
                LayerSpec::Conv(ConvLayer {
                    out_channels,
                    in_channels,
                    kernel_h,
                    kernel_w,
                    stride,
                    padding,
                    relu,
                    weights,
                    biases,
                })
            }
            TAG_RELU => LayerSpec::Relu,
            TAG_MAXPOOL => LayerSpec::MaxPool(PoolLayer {
                field: r.dim()?,
                stride: r.dim()?,
            }),
            TAG_FC => {
                let (out_dim, in_dim) = (r.dim()?, r.dim()?);
                let relu = r.flag(i, "fc")?;
                let weights = r.f32s(out_dim * in_dim)?;
                let biases = r.f32s(out_dim)?;
                LayerSpec::Fc(FcLayer {
                    out_dim,
                    in_dim,
                    relu,
                    weights,
                    biases,
                })
            }
            TAG_SOFTMAX => LayerSpec::Softmax,
            tag => return Err(CnnError::UnknownLayerKind { layer: i, tag }),
        };
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(CnnError::TrailingBytes(bytes.len() - r.pos));
    }
    Network::new(input, layers, code_layer_index, mean)
}

pub fn network_to_bytes(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    let put = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    let put_f32s = |out: &mut Vec<u8>, vs: &[f32]| {
        for v in vs {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put(&mut out, net.layers.len());
    put(&mut out, net.input_channels);
    put(&mut out, net.input_height);
    put(&mut out, net.input_width);
    put(&mut out, net.code_layer_index);
    put(&mut out, net.mean.len());
    put_f32s(&mut out, &net.mean);
    for layer in &net.layers {
        match layer {
            LayerSpec::Conv(c) => {
                out.push(TAG_CONV);
                for v in [
                    c.out_channels,
                    c.in_channels,
                    c.kernel_h,
                    c.kernel_w,
                    c.stride,
                    c.padding,
                ] {
                    put(&mut out, v);
                }
                out.push(c.relu as u8);
                put_f32s(&mut out, &c.weights);
                put_f32s(&mut out, &c.biases);
            }
            LayerSpec::Relu => out.push(TAG_RELU),
            LayerSpec::MaxPool(p) => {
                out.push(TAG_MAXPOOL);
                put(&mut out, p.field);
                put(&mut out, p.stride);
            }
            LayerSpec::Fc(fc) => {
                out.push(TAG_FC);
                put(&mut out, fc.out_dim);
                put(&mut out, fc.in_dim);
                out.push(fc.relu as u8);
                put_f32s(&mut out, &fc.weights);
                put_f32s(&mut out, &fc.biases);
            }
            LayerSpec::Softmax => out.push(TAG_SOFTMAX),
        }
    }
    out
}

pub fn load_network(path: impl AsRef<Path>) -> crate::Result<Network> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| crate::Error::io(path, e))?;
    Ok(network_from_bytes(&bytes)?)
}

pub fn write_network(path: impl AsRef<Path>, net: &Network) -> crate::Result<()> {
    let path = path.as_ref();
    std::fs::write(path, network_to_bytes(net)).map_err(|e| crate::Error::io(path, e))
}

//! Model files.
//!
//! ```text
//! "TPNN" | version u32 | input channels u32 | input length u32 | layer count u32
//! per layer: tag u8, shape u32s, then weights and biases as f64
//!   1 conv1d          in_channels, filters, kernel_size, padding (0 same, 1 valid)
//!   2 maxpool_time    pool
//!   3 maxpool_channel pool
//!   4 flatten
//!   5 dense           inputs, units
//!   6 relu
//!   7 sigmoid
//! metadata length u32 | metadata JSON (UTF-8)
//! CRC32 of all preceding bytes
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use serde_json::Value;

use super::layer::{Conv1d, Dense, Layer, Padding, Shape};
use super::network::Network;
use crate::codec::{open_container, Reader, Writer};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"TPNN";
pub const MODEL_VERSION: u32 = 1;

fn u32_of(v: usize) -> u32 {
    u32::try_from(v).expect("shape fits in u32")
}

pub fn encode_model(net: &Network, metadata: &Value) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    let input = net.input_shape();
    w.u32(u32_of(input.channels));
    w.u32(u32_of(input.length));
    w.u32(u32_of(net.layers().len()));
    for layer in net.layers() {
        match layer {
            Layer::Conv1d(c) => {
                w.u8(1);
                for v in [c.in_channels, c.filters, c.kernel_size] {
                    w.u32(u32_of(v));
                }
                w.u32(match c.padding {
                    Padding::Same => 0,
                    Padding::Valid => 1,
                });
                w.f64s(&c.weights);
                w.f64s(&c.bias);
            }
            Layer::MaxPoolTime { pool } => {
                w.u8(2);
                w.u32(u32_of(*pool));
            }
            Layer::MaxPoolChannel { pool } => {
                w.u8(3);
                w.u32(u32_of(*pool));
            }
            Layer::Flatten => w.u8(4),
            Layer::Dense(d) => {
                w.u8(5);
                w.u32(u32_of(d.inputs));
                w.u32(u32_of(d.units));
                w.f64s(&d.weights);
                w.f64s(&d.bias);
            }
            Layer::Relu => w.u8(6),
            Layer::Sigmoid => w.u8(7),
        }
    }
    let meta = serde_json::to_vec(metadata).expect("JSON value serialises");
    w.u32(u32_of(meta.len()));
    w.bytes(&meta);
    w.finish_with_crc()
}

// Guards allocation sizes read from a file before the arrays themselves.
fn checked_len(r: &Reader, parts: &[u32]) -> Result<usize> {
    let n = parts
        .iter()
        .try_fold(1usize, |acc, &p| acc.checked_mul(p as usize))
        .ok_or_else(|| Error::Format("layer size overflows".into()))?;
    if n.saturating_mul(8) > r.remaining() {
        return Err(Error::Format(format!("layer claims {n} weights past end of file")));
    }
    Ok(n)
}

pub fn decode_model(bytes: &[u8]) -> Result<(Network, Value)> {
    let mut r = open_container(bytes, MODEL_MAGIC, "model", MODEL_VERSION)?;
    let input = Shape::new(r.u32()? as usize, r.u32()? as usize);
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(64));
    for i in 0..count {
        let tag = r.u8()?;
        let layer = match tag {
            1 => {
                let (c, f, k) = (r.u32()?, r.u32()?, r.u32()?);
                let padding = match r.u32()? {
                    0 => Padding::Same,
                    1 => Padding::Valid,
                    p => return Err(Error::Format(format!("layer {i}: padding code {p}"))),
                };
                let nw = checked_len(&r, &[c, f, k])?;
                let weights = r.f64s(nw)?;
                let bias = r.f64s(f as usize)?;
                Layer::Conv1d(Conv1d {
                    in_channels: c as usize,
                    filters: f as usize,
                    kernel_size: k as usize,
                    padding,
                    weights,
                    bias,
                })
            }
            2 => Layer::MaxPoolTime {
                pool: r.u32()? as usize,
            },
            3 => Layer::MaxPoolChannel {
                pool: r.u32()? as usize,
            },
            4 => Layer::Flatten,
            5 => {
                let (n, u) = (r.u32()?, r.u32()?);
                let nw = checked_len(&r, &[n, u])?;
                let weights = r.f64s(nw)?;
                let bias = r.f64s(u as usize)?;
                Layer::Dense(Dense {
                    inputs: n as usize,
                    units: u as usize,
                    weights,
                    bias,
                })
            }
            6 => Layer::Relu,
            7 => Layer::Sigmoid,
            t => return Err(Error::Format(format!("layer {i}: unknown tag {t}"))),
        };
        layers.push(layer);
    }
    let meta_len = r.u32()? as usize;
    let meta_bytes = r.take(meta_len)?;
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
    }
    let metadata: Value = if meta_bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(meta_bytes)?
    };
    if layers
        .iter()
        .filter_map(Layer::params)
        .any(|(w, b)| w.iter().chain(b).any(|v| !v.is_finite()))
    {
        return Err(Error::NonFinite("model weights".into()));
    }
    let net = Network::new(input, layers).map_err(|e| Error::Format(e.to_string()))?;
    Ok((net, metadata))
}

pub fn save_model(path: impl AsRef<Path>, net: &Network, metadata: &Value) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(net, metadata)).map_err(|e| Error::file(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(Network, Value)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_model(&bytes)
}

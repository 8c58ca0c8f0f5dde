use serde::{Deserialize, Serialize};

use super::kernels::{axpy, dot, sigmoid, sum};
use crate::error::{Error, Result};
use crate::signal::TRACE_LEN;

/// Channel-major grid of activations: `values[c * length + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    length: usize,
    values: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, length: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 || length == 0 || length > TRACE_LEN {
            return Err(Error::Shape(format!("feature map {channels}x{length}")));
        }
        if values.len() != channels * length {
            return Err(Error::Length {
                expected: channels * length,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map".into()));
        }
        Ok(Self {
            channels,
            length,
            values,
        })
    }

    /// Single-channel map.
    pub fn signal(values: Vec<f64>) -> Result<Self> {
        Self::new(1, values.len(), values)
    }

    /// A vector as `n` channels of length 1, the layout dense layers use.
    pub fn vector(values: Vec<f64>) -> Result<Self> {
        Self::new(values.len(), 1, values)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.channels, self.length)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.length..(c + 1) * self.length]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub length: usize,
}

impl Shape {
    pub const fn new(channels: usize, length: usize) -> Self {
        Self { channels, length }
    }

    pub const fn size(&self) -> usize {
        self.channels * self.length
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.channels, self.length)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// `(k - 1) / 2` zeros on each side; length is preserved.
    Same,
    /// No padding; length shrinks by `k - 1`.
    Valid,
}

pub const MAX_KERNEL: usize = 31;

/// Cross-correlation over time. Weights are `[filter][channel][tap]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub in_channels: usize,
    pub filters: usize,
    pub kernel_size: usize,
    pub padding: Padding,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    pub fn zeros(in_channels: usize, filters: usize, kernel_size: usize, padding: Padding) -> Self {
        Self {
            in_channels,
            filters,
            kernel_size,
            padding,
            weights: vec![0.0; filters * in_channels * kernel_size],
            bias: vec![0.0; filters],
        }
    }

    fn pad(&self) -> usize {
        match self.padding {
            Padding::Same => (self.kernel_size - 1) / 2,
            Padding::Valid => 0,
        }
    }

    fn out_length(&self, length: usize) -> Option<usize> {
        match self.padding {
            Padding::Same => Some(length),
            Padding::Valid => (length + 1).checked_sub(self.kernel_size).filter(|&l| l > 0),
        }
    }

    #[inline]
    fn w(&self, f: usize, c: usize) -> &[f64] {
        let k = self.kernel_size;
        let at = (f * self.in_channels + c) * k;
        &self.weights[at..at + k]
    }

    /// Output range `[lo, hi)` whose tap `k` reads input `t + k - pad`
    /// inside the record, and the matching input offset.
    #[inline]
    fn tap_span(&self, k: usize, lin: usize, lout: usize) -> (usize, usize, usize) {
        let off = k as isize - self.pad() as isize;
        let lo = (-off).max(0) as usize;
        let hi = ((lin as isize - off).min(lout as isize)).max(lo as isize) as usize;
        (lo, hi, (lo as isize + off) as usize)
    }

    fn forward(&self, lin: usize, input: &[f64], out: &mut [f64]) {
        let lout = out.len() / self.filters;
        for f in 0..self.filters {
            let o = &mut out[f * lout..(f + 1) * lout];
            o.fill(self.bias[f]);
            for c in 0..self.in_channels {
                let x = &input[c * lin..(c + 1) * lin];
                for (k, &w) in self.w(f, c).iter().enumerate() {
                    let (lo, hi, at) = self.tap_span(k, lin, lout);
                    axpy(&mut o[lo..hi], w, &x[at..at + hi - lo]);
                }
            }
        }
    }

    fn backward(
        &self,
        lin: usize,
        input: &[f64],
        dout: &[f64],
        mut din: Option<&mut [f64]>,
        grad: &mut ParamGrad,
    ) {
        let lout = dout.len() / self.filters;
        let kk = self.kernel_size;
        for f in 0..self.filters {
            let d = &dout[f * lout..(f + 1) * lout];
            if d.iter().all(|&v| v == 0.0) {
                continue;
            }
            grad.b[f] += sum(d);
            for c in 0..self.in_channels {
                let x = &input[c * lin..(c + 1) * lin];
                let at_w = (f * self.in_channels + c) * kk;
                for k in 0..kk {
                    let (lo, hi, at) = self.tap_span(k, lin, lout);
                    let n = hi - lo;
                    grad.w[at_w + k] += dot(&d[lo..hi], &x[at..at + n]);
                    if let Some(din) = din.as_deref_mut() {
                        let w = self.weights[at_w + k];
                        axpy(&mut din[c * lin + at..c * lin + at + n], w, &d[lo..hi]);
                    }
                }
            }
        }
    }
}

/// Affine map `y = W x + b`, weights row-major `[unit][input]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub units: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, units: usize) -> Self {
        Self {
            inputs,
            units,
            weights: vec![0.0; inputs * units],
            bias: vec![0.0; units],
        }
    }

    #[inline]
    fn row(&self, r: usize) -> &[f64] {
        &self.weights[r * self.inputs..(r + 1) * self.inputs]
    }

    /// Each weight row is read once for the whole batch.
    fn forward_batch(&self, batch: usize, input: &[f64], out: &mut [f64]) {
        let (n, u) = (self.inputs, self.units);
        for r in 0..u {
            let row = self.row(r);
            for b in 0..batch {
                out[b * u + r] = dot(row, &input[b * n..(b + 1) * n]) + self.bias[r];
            }
        }
    }

    fn backward_batch(
        &self,
        batch: usize,
        input: &[f64],
        dout: &[f64],
        mut din: Option<&mut [f64]>,
        grad: &mut ParamGrad,
    ) {
        let (n, u) = (self.inputs, self.units);
        for r in 0..u {
            let row = self.row(r);
            let grow = &mut grad.w[r * n..(r + 1) * n];
            for b in 0..batch {
                let d = dout[b * u + r];
                if d == 0.0 {
                    continue;
                }
                grad.b[r] += d;
                axpy(grow, d, &input[b * n..(b + 1) * n]);
                if let Some(din) = din.as_deref_mut() {
                    axpy(&mut din[b * n..(b + 1) * n], d, row);
                }
            }
        }
    }
}

/// Gradient buffers of one layer; empty for layers without parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl ParamGrad {
    pub fn zero(&mut self) {
        self.w.fill(0.0);
        self.b.fill(0.0);
    }
}

/// Architecture description used to build and initialise a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        filters: usize,
        kernel_size: usize,
        padding: Padding,
    },
    MaxPoolTime {
        pool: usize,
    },
    MaxPoolChannel {
        pool: usize,
    },
    Flatten,
    Dense {
        units: usize,
    },
    Relu,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv1d(Conv1d),
    /// Non-overlapping max over time; a short tail window is allowed.
    MaxPoolTime { pool: usize },
    /// Non-overlapping max across channels at each time step.
    MaxPoolChannel { pool: usize },
    /// `C x L` to `C*L x 1`, same memory order.
    Flatten,
    Dense(Dense),
    Relu,
    Sigmoid,
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv1d(_) => "conv1d",
            Layer::MaxPoolTime { .. } => "maxpool_time",
            Layer::MaxPoolChannel { .. } => "maxpool_channel",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Relu => "relu",
            Layer::Sigmoid => "sigmoid",
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Layer::Conv1d(c) => c.weights.len() + c.bias.len(),
            Layer::Dense(d) => d.weights.len() + d.bias.len(),
            _ => 0,
        }
    }

    pub fn params(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Conv1d(c) => Some((&c.weights, &c.bias)),
            Layer::Dense(d) => Some((&d.weights, &d.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut [f64], &mut [f64])> {
        match self {
            Layer::Conv1d(c) => Some((&mut c.weights, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            _ => None,
        }
    }

    pub fn grad_buffer(&self) -> ParamGrad {
        match self.params() {
            Some((w, b)) => ParamGrad {
                w: vec![0.0; w.len()],
                b: vec![0.0; b.len()],
            },
            None => ParamGrad::default(),
        }
    }

    /// Output shape for `input`, or a shape error.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let bad = |msg: String| Err(Error::Shape(format!("{}: {msg}", self.name())));
        match self {
            Layer::Conv1d(c) => {
                if c.kernel_size % 2 == 0 || !(1..=MAX_KERNEL).contains(&c.kernel_size) {
                    return bad(format!("kernel size {} not odd in [1, 31]", c.kernel_size));
                }
                if c.filters == 0 {
                    return bad("no filters".into());
                }
                if c.in_channels != input.channels {
                    return bad(format!("expects {} channels, got {input}", c.in_channels));
                }
                if c.weights.len() != c.filters * c.in_channels * c.kernel_size
                    || c.bias.len() != c.filters
                {
                    return bad("weight buffer size".into());
                }
                match c.out_length(input.length) {
                    Some(l) => Ok(Shape::new(c.filters, l)),
                    None => bad(format!("input {input} shorter than kernel")),
                }
            }
            Layer::MaxPoolTime { pool } => {
                if *pool == 0 {
                    return bad("pool 0".into());
                }
                Ok(Shape::new(input.channels, input.length.div_ceil(*pool)))
            }
            Layer::MaxPoolChannel { pool } => {
                if *pool == 0 {
                    return bad("pool 0".into());
                }
                Ok(Shape::new(input.channels.div_ceil(*pool), input.length))
            }
            Layer::Flatten => Ok(Shape::new(input.size(), 1)),
            Layer::Dense(d) => {
                if input.length != 1 || input.channels != d.inputs {
                    return bad(format!("expects {}x1, got {input}", d.inputs));
                }
                if d.weights.len() != d.inputs * d.units || d.bias.len() != d.units || d.units == 0
                {
                    return bad("weight buffer size".into());
                }
                Ok(Shape::new(d.units, 1))
            }
            Layer::Relu | Layer::Sigmoid => Ok(input),
        }
    }

    /// Number of `u32` argmax slots per sample this layer records.
    pub(crate) fn route_len(&self, out: Shape) -> usize {
        match self {
            Layer::MaxPoolTime { .. } | Layer::MaxPoolChannel { .. } => out.size(),
            _ => 0,
        }
    }

    /// Forward pass over `batch` samples laid out back to back.
    pub(crate) fn forward_batch(
        &self,
        ins: Shape,
        outs: Shape,
        batch: usize,
        input: &[f64],
        out: &mut [f64],
        route: &mut [u32],
    ) {
        let (ni, no) = (ins.size(), outs.size());
        match self {
            Layer::Dense(d) => d.forward_batch(batch, input, out),
            Layer::Flatten => out.copy_from_slice(input),
            Layer::Relu => {
                for (o, &x) in out.iter_mut().zip(input) {
                    *o = x.max(0.0);
                }
            }
            Layer::Sigmoid => {
                for (o, &x) in out.iter_mut().zip(input) {
                    *o = sigmoid(x);
                }
            }
            Layer::Conv1d(c) => {
                for b in 0..batch {
                    c.forward(
                        ins.length,
                        &input[b * ni..(b + 1) * ni],
                        &mut out[b * no..(b + 1) * no],
                    );
                }
            }
            Layer::MaxPoolTime { pool } => {
                for b in 0..batch {
                    pool_time(
                        *pool,
                        ins,
                        &input[b * ni..(b + 1) * ni],
                        &mut out[b * no..(b + 1) * no],
                        &mut route[b * no..(b + 1) * no],
                    );
                }
            }
            Layer::MaxPoolChannel { pool } => {
                for b in 0..batch {
                    pool_channel(
                        *pool,
                        ins,
                        &input[b * ni..(b + 1) * ni],
                        &mut out[b * no..(b + 1) * no],
                        &mut route[b * no..(b + 1) * no],
                    );
                }
            }
        }
    }

    /// Accumulates parameter gradients into `grad` and, when `din` is
    /// given, writes the gradient with respect to the input (overwriting).
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_batch(
        &self,
        ins: Shape,
        outs: Shape,
        batch: usize,
        input: &[f64],
        output: &[f64],
        route: &[u32],
        dout: &[f64],
        mut din: Option<&mut [f64]>,
        grad: &mut ParamGrad,
    ) {
        let (ni, no) = (ins.size(), outs.size());
        if let Some(d) = din.as_deref_mut() {
            match self {
                Layer::Flatten | Layer::Relu | Layer::Sigmoid => {}
                _ => d.fill(0.0),
            }
        }
        match self {
            Layer::Dense(d) => d.backward_batch(batch, input, dout, din, grad),
            Layer::Conv1d(c) => {
                for b in 0..batch {
                    c.backward(
                        ins.length,
                        &input[b * ni..(b + 1) * ni],
                        &dout[b * no..(b + 1) * no],
                        din.as_deref_mut().map(|d| &mut d[b * ni..(b + 1) * ni]),
                        grad,
                    );
                }
            }
            Layer::Flatten => {
                if let Some(d) = din {
                    d.copy_from_slice(dout);
                }
            }
            Layer::Relu => {
                if let Some(d) = din {
                    for ((d, &g), &y) in d.iter_mut().zip(dout).zip(output) {
                        *d = if y > 0.0 { g } else { 0.0 };
                    }
                }
            }
            Layer::Sigmoid => {
                if let Some(d) = din {
                    for ((d, &g), &y) in d.iter_mut().zip(dout).zip(output) {
                        *d = g * y * (1.0 - y);
                    }
                }
            }
            Layer::MaxPoolTime { .. } | Layer::MaxPoolChannel { .. } => {
                if let Some(d) = din {
                    for b in 0..batch {
                        let d = &mut d[b * ni..(b + 1) * ni];
                        for (&g, &r) in dout[b * no..(b + 1) * no]
                            .iter()
                            .zip(&route[b * no..(b + 1) * no])
                        {
                            d[r as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

fn pool_time(pool: usize, ins: Shape, input: &[f64], out: &mut [f64], route: &mut [u32]) {
    let lout = ins.length.div_ceil(pool);
    for c in 0..ins.channels {
        let x = &input[c * ins.length..(c + 1) * ins.length];
        for j in 0..lout {
            let lo = j * pool;
            let hi = (lo + pool).min(ins.length);
            let mut best = lo;
            for t in lo + 1..hi {
                if x[t] > x[best] {
                    best = t;
                }
            }
            out[c * lout + j] = x[best];
            route[c * lout + j] = (c * ins.length + best) as u32;
        }
    }
}

fn pool_channel(pool: usize, ins: Shape, input: &[f64], out: &mut [f64], route: &mut [u32]) {
    let l = ins.length;
    let groups = ins.channels.div_ceil(pool);
    for g in 0..groups {
        let lo = g * pool;
        let hi = (lo + pool).min(ins.channels);
        let o = &mut out[g * l..(g + 1) * l];
        let r = &mut route[g * l..(g + 1) * l];
        o.copy_from_slice(&input[lo * l..(lo + 1) * l]);
        for (t, slot) in r.iter_mut().enumerate() {
            *slot = (lo * l + t) as u32;
        }
        // Strict comparison keeps the lowest channel on ties.
        for c in lo + 1..hi {
            let x = &input[c * l..(c + 1) * l];
            for t in 0..l {
                if x[t] > o[t] {
                    o[t] = x[t];
                    r[t] = (c * l + t) as u32;
                }
            }
        }
    }
}

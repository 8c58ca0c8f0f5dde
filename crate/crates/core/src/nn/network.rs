use super::layer::{Conv1d, Dense, FeatureMap, Layer, LayerSpec, ParamGrad, Shape};
use super::loss::Loss;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// A feed-forward stack with shapes checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    /// `shapes[i]` is the input of layer `i`; the last entry is the output.
    shapes: Vec<Shape>,
}

impl Network {
    pub fn new(input: Shape, layers: Vec<Layer>) -> Result<Self> {
        if input.size() == 0 {
            return Err(Error::Shape(format!("empty input {input}")));
        }
        let mut shapes = vec![input];
        for (i, layer) in layers.iter().enumerate() {
            let s = layer
                .output_shape(shapes[i])
                .map_err(|e| Error::Shape(format!("layer {i}: {e}")))?;
            if s.size() == 0 || s.size() > u32::MAX as usize {
                return Err(Error::Shape(format!("layer {i}: output {s}")));
            }
            shapes.push(s);
        }
        Ok(Self { layers, shapes })
    }

    /// Builds the layers of `specs` and initialises them from `seed`:
    /// He-uniform for layers whose next activation is ReLU, Glorot-uniform
    /// otherwise. Biases start at zero.
    pub fn build(input: Shape, specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input;
        for spec in specs {
            let layer = match *spec {
                LayerSpec::Conv1d {
                    filters,
                    kernel_size,
                    padding,
                } => Layer::Conv1d(Conv1d::zeros(shape.channels, filters, kernel_size, padding)),
                LayerSpec::Dense { units } => Layer::Dense(Dense::zeros(shape.size(), units)),
                LayerSpec::MaxPoolTime { pool } => Layer::MaxPoolTime { pool },
                LayerSpec::MaxPoolChannel { pool } => Layer::MaxPoolChannel { pool },
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Sigmoid => Layer::Sigmoid,
            };
            shape = layer.output_shape(shape)?;
            layers.push(layer);
        }

        let mut rng = Rng::new(seed);
        let feeds_relu: Vec<bool> = (0..layers.len())
            .map(|i| {
                layers[i + 1..]
                    .iter()
                    .find(|l| {
                        !matches!(
                            l,
                            Layer::MaxPoolTime { .. } | Layer::MaxPoolChannel { .. } | Layer::Flatten
                        )
                    })
                    .is_some_and(|l| matches!(l, Layer::Relu))
            })
            .collect();
        for (layer, relu) in layers.iter_mut().zip(feeds_relu) {
            let (fan_in, fan_out) = match layer {
                Layer::Conv1d(c) => (c.in_channels * c.kernel_size, c.filters * c.kernel_size),
                Layer::Dense(d) => (d.inputs, d.units),
                _ => continue,
            };
            let limit = if relu {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            let (w, _) = layer.params_mut().expect("parametric layer");
            for v in w {
                *v = rng.range(-limit, limit);
            }
        }
        Self::new(input, layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> Shape {
        self.shapes[0]
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().expect("input shape")
    }

    /// Input shape of every layer followed by the output shape.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn grad_buffers(&self) -> Vec<ParamGrad> {
        self.layers.iter().map(Layer::grad_buffer).collect()
    }

    /// Parameter slices `(weights, bias)` of every layer that has them,
    /// paired with its gradient buffer.
    pub(crate) fn params_with_grads<'a>(
        &'a mut self,
        grads: &'a [ParamGrad],
    ) -> impl Iterator<Item = ((&'a mut [f64], &'a mut [f64]), &'a ParamGrad)> {
        self.layers
            .iter_mut()
            .zip(grads)
            .filter_map(|(l, g)| l.params_mut().map(|p| (p, g)))
    }

    /// Flat copy of all parameters, layer by layer, weights before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.layers.iter().filter_map(Layer::params) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn forward(&self, input: &FeatureMap) -> Result<FeatureMap> {
        if input.shape() != self.input_shape() {
            return Err(Error::Shape(format!(
                "network expects {}, got {}",
                self.input_shape(),
                input.shape()
            )));
        }
        let mut tape = Tape::new(self, 1);
        self.run(&mut tape, input.values())?;
        let out = self.output_shape();
        FeatureMap::new(out.channels, out.length, tape.output().to_vec())
    }

    /// Forward pass over `batch` inputs stored back to back in `inputs`.
    /// Every intermediate activation stays on the tape for `backward`.
    pub fn run(&self, tape: &mut Tape, inputs: &[f64]) -> Result<()> {
        let batch = tape.batch;
        let expected = batch * self.input_shape().size();
        if inputs.len() != expected {
            return Err(Error::Length {
                expected,
                found: inputs.len(),
            });
        }
        tape.acts[0].copy_from_slice(inputs);
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = tape.acts.split_at_mut(i + 1);
            let out = &mut rest[0];
            layer.forward_batch(
                self.shapes[i],
                self.shapes[i + 1],
                batch,
                &done[i],
                out,
                &mut tape.routes[i],
            );
            if !out.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric {
                    layer: i,
                    kind: layer.name(),
                });
            }
        }
        Ok(())
    }

    /// Loss of the batch on the tape against `targets` and its gradient,
    /// accumulated into `grads`. The loss is the mean over every output
    /// element of the batch. With BCE after a final sigmoid the two are
    /// differentiated together: `dL/dz = (p - y) / N`.
    pub fn backward(
        &self,
        tape: &mut Tape,
        targets: &[f64],
        loss: Loss,
        grads: &mut [ParamGrad],
    ) -> Result<f64> {
        let n_layers = self.layers.len();
        let out = &tape.acts[n_layers];
        if targets.len() != out.len() {
            return Err(Error::Length {
                expected: out.len(),
                found: targets.len(),
            });
        }
        if grads.len() != n_layers {
            return Err(Error::Shape("gradient buffers do not match network".into()));
        }
        let value = loss.value(targets, out);
        let fused = loss == Loss::Bce && matches!(self.layers.last(), Some(Layer::Sigmoid));
        let top = if fused {
            let inv = 1.0 / out.len() as f64;
            let d = &mut tape.deltas[n_layers - 1];
            for ((d, &p), &y) in d.iter_mut().zip(out.iter()).zip(targets) {
                *d = (p - y) * inv;
            }
            n_layers - 1
        } else {
            loss.gradient(targets, out, &mut tape.deltas[n_layers]);
            n_layers
        };

        // The first layer's input gradient is never needed.
        for i in (0..top).rev() {
            let (lower, upper) = tape.deltas.split_at_mut(i + 1);
            let din = (i > 0).then(|| &mut lower[i][..]);
            self.layers[i].backward_batch(
                self.shapes[i],
                self.shapes[i + 1],
                tape.batch,
                &tape.acts[i],
                &tape.acts[i + 1],
                &tape.routes[i],
                &upper[0],
                din,
                &mut grads[i],
            );
        }
        Ok(value)
    }

    /// Mean loss of a batch without gradients.
    pub fn batch_loss(&self, tape: &mut Tape, inputs: &[f64], targets: &[f64], loss: Loss) -> Result<f64> {
        self.run(tape, inputs)?;
        let out = tape.output();
        if targets.len() != out.len() {
            return Err(Error::Length {
                expected: out.len(),
                found: targets.len(),
            });
        }
        Ok(loss.value(targets, out))
    }

    /// Mutable `(weights, bias)` of every parametric layer. Shapes cannot
    /// change through these slices.
    pub fn params_mut(&mut self) -> impl Iterator<Item = (&mut [f64], &mut [f64])> {
        self.layers.iter_mut().filter_map(Layer::params_mut)
    }
}

/// Activation, gradient and pooling-route buffers for one batch size.
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    routes: Vec<Vec<u32>>,
}

impl Tape {
    pub fn new(net: &Network, batch: usize) -> Self {
        let acts: Vec<Vec<f64>> = net
            .shapes
            .iter()
            .map(|s| vec![0.0; batch * s.size()])
            .collect();
        let routes = net
            .layers
            .iter()
            .zip(&net.shapes[1..])
            .map(|(l, &s)| vec![0u32; batch * l.route_len(s)])
            .collect();
        Self {
            batch,
            deltas: acts.clone(),
            acts,
            routes,
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Outputs of the last `run`, sample after sample.
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least the input buffer")
    }
}

use super::loss::Loss;
use super::network::{Network, Tape};
use crate::error::Result;
use crate::rng::Rng;

/// Denominator floor for the relative error, so that entries whose
/// gradient is numerically zero compare on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(parametric layer, flat index)` of the worst entry; biases follow
    /// the weights in the flat index.
    pub worst: Option<(usize, usize)>,
}

/// Compares backpropagated gradients with central differences of step `h`.
/// At most `per_layer` entries of each parametric layer are checked, drawn
/// from `seed` when the layer has more.
pub fn gradient_check(
    net: &Network,
    inputs: &[f64],
    targets: &[f64],
    loss: Loss,
    h: f64,
    per_layer: usize,
    seed: u64,
) -> Result<GradCheck> {
    let batch = inputs.len() / net.input_shape().size().max(1);
    let mut tape = Tape::new(net, batch);
    net.run(&mut tape, inputs)?;
    let mut grads = net.grad_buffers();
    net.backward(&mut tape, targets, loss, &mut grads)?;
    let analytic: Vec<Vec<f64>> = grads
        .iter()
        .zip(net.layers())
        .filter(|(_, l)| l.params().is_some())
        .map(|(g, _)| g.w.iter().chain(&g.b).copied().collect())
        .collect();

    let mut probe = net.clone();
    let mut rng = Rng::new(seed);
    let mut out = GradCheck {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for (k, a) in analytic.iter().enumerate() {
        let idx: Vec<usize> = if a.len() <= per_layer {
            (0..a.len()).collect()
        } else {
            (0..per_layer).map(|_| rng.below(a.len() as u64) as usize).collect()
        };
        for i in idx {
            let mut eval = |delta: f64| -> Result<f64> {
                let (w, b) = probe.params_mut().nth(k).expect("parametric layer");
                let nw = w.len();
                let slot = if i < nw { &mut w[i] } else { &mut b[i - nw] };
                let saved = *slot;
                *slot = saved + delta;
                let l = probe.batch_loss(&mut tape, inputs, targets, loss);
                let (w, b) = probe.params_mut().nth(k).expect("parametric layer");
                if i < nw {
                    w[i] = saved;
                } else {
                    b[i - nw] = saved;
                }
                l
            };
            let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
            let rel = (a[i] - numeric).abs() / a[i].abs().max(numeric.abs()).max(REL_FLOOR);
            out.checked += 1;
            if rel > out.max_rel_error || out.worst.is_none() {
                out.max_rel_error = out.max_rel_error.max(rel);
                out.worst = Some((k, i));
            }
        }
    }
    Ok(out)
}

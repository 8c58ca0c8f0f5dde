use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Trace;

/// Floor for the initial iterate and for every denominator.
pub const GOLD_EPSILON: f64 = 1e-10;

/// Discrete Gaussian convolution operator.
///
/// `(A x)_i = sum_m k_m x_clamp(i - m)` for `m` in `[-h, h]`, `h = floor(4 sigma)`.
/// Indices outside the record are clamped to the first/last bucket, so the
/// first and last columns of `A` collect the kernel tails.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    sigma: f64,
    half: usize,
    kernel: Vec<f64>,
}

impl ResponseMatrix {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Param(format!("response sigma {sigma}")));
        }
        let half = (4.0 * sigma).floor() as usize;
        let mut kernel: Vec<f64> = (-(half as isize)..=half as isize)
            .map(|m| {
                let z = m as f64 / sigma;
                (-0.5 * z * z).exp()
            })
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|k| *k /= total);
        Ok(Self {
            sigma,
            half,
            kernel,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Kernel taps for offsets `-h..=h`.
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn half_width(&self) -> usize {
        self.half
    }

    /// `out = A x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        let h = self.half;
        debug_assert_eq!(out.len(), n);
        let edge = |i: usize| {
            let mut acc = 0.0;
            for (t, k) in self.kernel.iter().enumerate() {
                let j = (i as isize + h as isize - t as isize).clamp(0, n as isize - 1);
                acc += k * x[j as usize];
            }
            acc
        };
        if n <= 2 * h {
            for (i, o) in out.iter_mut().enumerate() {
                *o = edge(i);
            }
            return;
        }
        for i in (0..h).chain(n - h..n) {
            out[i] = edge(i);
        }
        // Symmetric kernel: the tap order does not matter.
        for i in h..n - h {
            let win = &x[i - h..=i + h];
            out[i] = dot(win, &self.kernel);
        }
    }

    /// `out = A^T y`.
    pub fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        let n = y.len();
        let h = self.half;
        out.iter_mut().for_each(|o| *o = 0.0);
        let scatter = |i: usize, out: &mut [f64]| {
            for (t, k) in self.kernel.iter().enumerate() {
                let j = (i as isize + h as isize - t as isize).clamp(0, n as isize - 1);
                out[j as usize] += k * y[i];
            }
        };
        if n <= 2 * h {
            for i in 0..n {
                scatter(i, out);
            }
            return;
        }
        for i in (0..h).chain(n - h..n) {
            scatter(i, out);
        }
        for i in h..n - h {
            let yi = y[i];
            for (o, k) in out[i - h..=i + h].iter_mut().zip(&self.kernel) {
                *o += k * yi;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GoldParams {
    pub iterations: usize,
    /// Number of boosting repetitions; 0 disables boosting.
    pub boosting_rounds: usize,
    /// Exponent applied to the solution between boosting repetitions.
    pub boost_exponent: f64,
    /// Minimum deconvolved amplitude accepted as a peak (ADC).
    pub threshold: f64,
}

impl Default for GoldParams {
    fn default() -> Self {
        Self {
            iterations: 200,
            boosting_rounds: 0,
            boost_exponent: 1.2,
            threshold: 80.0,
        }
    }
}

impl GoldParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Param("gold iterations must be >= 1".into()));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::Param("gold threshold must be >= 0".into()));
        }
        if self.boosting_rounds > 0 && !(self.boost_exponent > 0.0) {
            return Err(Error::Param("boost exponent must be > 0".into()));
        }
        Ok(())
    }
}

/// Gold deconvolution of a slice of any length.
///
/// Negative inputs are clipped to zero. Starting from `x = max(A^T y, eps)`,
/// each iteration applies `x_i <- x_i (A^T y)_i / (A^T A x)_i`.
pub fn gold_slice(y: &[f64], a: &ResponseMatrix, p: &GoldParams) -> Result<Vec<f64>> {
    p.validate()?;
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("gold input sample {i}")));
    }
    let n = y.len();
    let y: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    let mut aty = vec![0.0; n];
    a.apply_transpose(&y, &mut aty);
    let mut x: Vec<f64> = aty.iter().map(|v| v.max(GOLD_EPSILON)).collect();
    let mut ax = vec![0.0; n];
    let mut atax = vec![0.0; n];
    for round in 0..=p.boosting_rounds {
        for _ in 0..p.iterations {
            a.apply(&x, &mut ax);
            a.apply_transpose(&ax, &mut atax);
            for ((xi, num), den) in x.iter_mut().zip(&aty).zip(&atax) {
                *xi *= num / den.max(GOLD_EPSILON);
            }
        }
        if round < p.boosting_rounds {
            x.iter_mut().for_each(|v| *v = v.powf(p.boost_exponent));
        }
    }
    Ok(x)
}

pub fn gold_deconvolve(y: &Trace, a: &ResponseMatrix, p: &GoldParams) -> Result<Trace> {
    y.with_samples(gold_slice(y.samples(), a, p)?)
}

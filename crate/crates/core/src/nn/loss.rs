use serde::{Deserialize, Serialize};

/// Probabilities are clamped to `[EPS, 1 - EPS]` inside the log.
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Mse,
    Bce,
}

impl Loss {
    pub fn value(self, y: &[f64], pred: &[f64]) -> f64 {
        match self {
            Loss::Mse => mse_loss(y, pred),
            Loss::Bce => bce_loss(y, pred),
        }
    }

    /// `dL/dpred`, written into `out`.
    pub fn gradient(self, y: &[f64], pred: &[f64], out: &mut [f64]) {
        let inv = 1.0 / y.len().max(1) as f64;
        match self {
            Loss::Mse => {
                for ((o, &t), &p) in out.iter_mut().zip(y).zip(pred) {
                    *o = 2.0 * (p - t) * inv;
                }
            }
            Loss::Bce => {
                for ((o, &t), &p) in out.iter_mut().zip(y).zip(pred) {
                    let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
                    *o = (p - t) / (p * (1.0 - p)) * inv;
                }
            }
        }
    }
}

/// `(1/N) sum (y - pred)^2`
pub fn mse_loss(y: &[f64], pred: &[f64]) -> f64 {
    debug_assert_eq!(y.len(), pred.len());
    if y.is_empty() {
        return 0.0;
    }
    let s: f64 = y.iter().zip(pred).map(|(a, b)| (a - b) * (a - b)).sum();
    s / y.len() as f64
}

/// `-(1/N) sum [y ln p + (1 - y) ln(1 - p)]` with clamped `p`.
pub fn bce_loss(y: &[f64], p: &[f64]) -> f64 {
    debug_assert_eq!(y.len(), p.len());
    if y.is_empty() {
        return 0.0;
    }
    let s: f64 = y
        .iter()
        .zip(p)
        .map(|(&t, &p)| {
            let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            t * p.ln() + (1.0 - t) * (1.0 - p).ln()
        })
        .sum();
    -s / y.len() as f64
}

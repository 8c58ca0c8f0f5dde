use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::layer::Shape;
use super::loss::Loss;
use super::network::{Network, Tape};
use super::optim::{Adamax, AdamaxConfig};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Input/target pairs in two flat buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input: Shape,
    target_len: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(input: Shape, target_len: usize) -> Self {
        Self {
            input,
            target_len,
            inputs: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn with_capacity(input: Shape, target_len: usize, n: usize) -> Self {
        Self {
            input,
            target_len,
            inputs: Vec::with_capacity(n * input.size()),
            targets: Vec::with_capacity(n * target_len),
        }
    }

    pub fn push(&mut self, input: &[f64], target: &[f64]) -> Result<()> {
        if input.len() != self.input.size() {
            return Err(Error::Length {
                expected: self.input.size(),
                found: input.len(),
            });
        }
        if target.len() != self.target_len {
            return Err(Error::Length {
                expected: self.target_len,
                found: target.len(),
            });
        }
        if input.iter().chain(target).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training sample".into()));
        }
        self.inputs.extend_from_slice(input);
        self.targets.extend_from_slice(target);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.input.size().max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn target_len(&self) -> usize {
        self.target_len
    }

    pub fn input(&self, i: usize) -> &[f64] {
        let n = self.input.size();
        &self.inputs[i * n..(i + 1) * n]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        let n = self.target_len;
        &self.targets[i * n..(i + 1) * n]
    }

    fn sample_hash(&self, i: usize) -> u64 {
        let mut h = DefaultHasher::new();
        for v in self.input(i).iter().chain(self.target(i)) {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// Number of samples of `other` that also appear in `self`.
    pub fn shared_with(&self, other: &Dataset) -> usize {
        let mut index: HashMap<u64, Vec<usize>> = HashMap::new();
        for i in 0..self.len() {
            index.entry(self.sample_hash(i)).or_default().push(i);
        }
        (0..other.len())
            .filter(|&j| {
                index.get(&other.sample_hash(j)).is_some_and(|cands| {
                    cands
                        .iter()
                        .any(|&i| self.input(i) == other.input(j) && self.target(i) == other.target(j))
                })
            })
            .count()
    }

    fn gather(&self, idx: &[usize], inputs: &mut Vec<f64>, targets: &mut Vec<f64>) {
        inputs.clear();
        targets.clear();
        for &i in idx {
            inputs.extend_from_slice(self.input(i));
            targets.extend_from_slice(self.target(i));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamaxConfig,
    pub seed: u64,
    /// Stop after this many epochs without a new best validation loss;
    /// 0 disables early stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 8,
            optimizer: AdamaxConfig::default(),
            seed: 1,
            patience: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub updates_per_epoch: usize,
    pub train_samples: usize,
    pub val_samples: usize,
}

impl TrainReport {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    /// Same loss curves and best epoch; wall times are ignored.
    pub fn same_trajectory(&self, other: &TrainReport) -> bool {
        self.best_epoch == other.best_epoch
            && self.epochs.len() == other.epochs.len()
            && self.epochs.iter().zip(&other.epochs).all(|(a, b)| {
                a.train_loss.to_bits() == b.train_loss.to_bits()
                    && a.val_loss.to_bits() == b.val_loss.to_bits()
            })
    }

    /// `epoch,loss_train,loss_val` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss_train,loss_val\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:e},{:e}\n", e.epoch, e.train_loss, e.val_loss));
        }
        s
    }
}

/// Mean loss over a whole set, evaluated in chunks of `chunk` samples.
pub fn evaluate_loss(net: &Network, data: &Dataset, loss: Loss, chunk: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let chunk = chunk.max(1);
    let idx: Vec<usize> = (0..data.len()).collect();
    let (mut inputs, mut targets) = (Vec::new(), Vec::new());
    let mut tapes: HashMap<usize, Tape> = HashMap::new();
    let mut total = 0.0;
    for part in idx.chunks(chunk) {
        data.gather(part, &mut inputs, &mut targets);
        let tape = tapes
            .entry(part.len())
            .or_insert_with(|| Tape::new(net, part.len()));
        total += net.batch_loss(tape, &inputs, &targets, loss)? * part.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Mini-batch training with a seed-determined shuffle per epoch. The
/// network ends up holding the weights of the epoch with the lowest
/// validation loss.
pub fn train(
    net: &mut Network,
    train_set: &Dataset,
    val_set: &Dataset,
    loss: Loss,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if val_set.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Param("epochs and batch_size must be >= 1".into()));
    }
    for d in [train_set, val_set] {
        if d.input_shape() != net.input_shape() || d.target_len() != net.output_shape().size() {
            return Err(Error::Shape(format!(
                "dataset {} -> {} does not fit network {} -> {}",
                d.input_shape(),
                d.target_len(),
                net.input_shape(),
                net.output_shape()
            )));
        }
    }
    let shared = train_set.shared_with(val_set);
    if shared > 0 {
        return Err(Error::Overlap(shared));
    }

    let n = train_set.len();
    let mut opt = Adamax::new(net, cfg.optimizer);
    let mut grads = net.grad_buffers();
    let mut tapes: HashMap<usize, Tape> = HashMap::new();
    let mut order: Vec<usize> = (0..n).collect();
    let (mut inputs, mut targets) = (Vec::new(), Vec::new());
    let mut best: Option<(f64, Network)> = None;
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        updates_per_epoch: n.div_ceil(cfg.batch_size),
        train_samples: n,
        val_samples: val_set.len(),
    };

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        Rng::stream(cfg.seed, epoch as u64).shuffle(&mut order);
        let mut running = 0.0;
        for part in order.chunks(cfg.batch_size) {
            train_set.gather(part, &mut inputs, &mut targets);
            let tape = tapes
                .entry(part.len())
                .or_insert_with(|| Tape::new(net, part.len()));
            net.run(tape, &inputs)?;
            grads.iter_mut().for_each(|g| g.zero());
            running += net.backward(tape, &targets, loss, &mut grads)? * part.len() as f64;
            opt.step(net, &grads);
        }
        let val_loss = evaluate_loss(net, val_set, loss, 32)?;
        let record = EpochRecord {
            epoch,
            train_loss: running / n as f64,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        report.epochs.push(record);

        if best.as_ref().map_or(true, |(b, _)| val_loss < *b) {
            best = Some((val_loss, net.clone()));
            report.best_epoch = epoch;
        } else if cfg.patience > 0 && epoch - report.best_epoch >= cfg.patience {
            break;
        }
    }
    if let Some((_, snapshot)) = best {
        *net = snapshot;
    }
    Ok(report)
}

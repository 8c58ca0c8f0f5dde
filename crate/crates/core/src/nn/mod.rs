//! A small 1-D convolutional network engine in double precision.
//!
//! "Convolution" here is cross-correlation, as in most deep-learning
//! libraries: output `t` of a same-padded layer reads inputs
//! `t - (k-1)/2 ..= t + (k-1)/2` with the kernel in forward order.

mod gradcheck;
mod io;
mod kernels;
mod layer;
mod loss;
mod network;
mod optim;
mod train;

pub use gradcheck::{gradient_check, GradCheck, REL_FLOOR};
pub use io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use kernels::sigmoid;
pub use layer::{
    Conv1d, Dense, FeatureMap, Layer, LayerSpec, Padding, ParamGrad, Shape, MAX_KERNEL,
};
pub use loss::{bce_loss, mse_loss, Loss, BCE_EPSILON};
pub use network::{Network, Tape};
pub use optim::{Adamax, AdamaxConfig, Moments, U_FLOOR};
pub use train::{evaluate_loss, train, Dataset, EpochRecord, TrainConfig, TrainReport};

/// `max(0, x)`
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

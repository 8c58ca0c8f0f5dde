//! Fixtures shared by the benchmarks.

use tpcnet::synth::{gen_batch, GenConfig};
use tpcnet::Trace;

/// `n` traces from the default generator.
pub fn traces(n: usize) -> Vec<Trace> {
    gen_batch(&GenConfig::default(), 0, n)
        .expect("default generator config is valid")
        .into_iter()
        .map(|(t, _)| t)
        .collect()
}

//! Numerical kernels: GCN encoder, MLP heads, hand-derived gradients,
//! AdamW and schedules.

pub mod batchnorm;
pub mod gcn;
pub mod mlp;
pub mod optim;
pub mod params;
pub mod schedule;

use ndarray::Array2;

pub use batchnorm::BatchNorm;
pub use gcn::{GcnCache, GcnEncoder, GcnGrads};
pub use mlp::{Mlp, MlpCache, MlpGrads};
pub use optim::{AdamW, AdamWConfig};
pub use params::{init_params, ParamArray, ParamVector};
pub use schedule::{cosine_lr, ema_decay};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics over all nodes.
    Train,
    /// Running statistics; no state is touched.
    Eval,
}

pub(crate) fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

pub(crate) fn relu_mask(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

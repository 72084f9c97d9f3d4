//! Two-layer GCN encoder.
//!
//! Each layer propagates, activates, then normalizes:
//! `H = BN2(relu(Â · BN1(relu(Â X W1)) · W2))`.

use ndarray::Array2;
use rand::Rng;

use super::batchnorm::{BatchNorm, BatchNormCache};
use super::params::{init_params, ParamArray, ParamVector};
use super::{relu, relu_mask, Mode};
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;

pub const GCN_TRAINABLE: [&str; 6] = [
    "w1",
    "bn1.gamma",
    "bn1.beta",
    "w2",
    "bn2.gamma",
    "bn2.beta",
];

#[derive(Debug, Clone, PartialEq)]
pub struct GcnEncoder {
    pub w1: Array2<f64>,
    pub bn1: BatchNorm,
    pub w2: Array2<f64>,
    pub bn2: BatchNorm,
}

#[derive(Debug, Clone)]
pub struct GcnCache {
    mode: Mode,
    /// `Â X`
    ax: Array2<f64>,
    z1: Array2<f64>,
    bn1: BatchNormCache,
    /// `Â · BN1(...)`
    ab1: Array2<f64>,
    z2: Array2<f64>,
    bn2: BatchNormCache,
}

impl GcnCache {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

#[derive(Debug, Clone)]
pub struct GcnGrads {
    pub params: ParamVector,
    pub x: Array2<f64>,
}

impl GcnEncoder {
    pub fn schema(in_dim: usize, hidden: usize) -> Vec<(String, Vec<usize>)> {
        let bn = |prefix: &str| {
            ["gamma", "beta", "running_mean", "running_var"]
                .map(|field| (format!("{prefix}.{field}"), vec![hidden]))
        };
        let mut s = vec![("w1".to_string(), vec![in_dim, hidden])];
        s.extend(bn("bn1"));
        s.push(("w2".to_string(), vec![hidden, hidden]));
        s.extend(bn("bn2"));
        s
    }

    pub fn init(in_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let pv = init_params(&Self::schema(in_dim, hidden), rng);
        Self::from_params(&pv).expect("schema is self-consistent")
    }

    pub fn in_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.ncols()
    }

    /// All arrays, trainable ones and batch-norm running statistics.
    pub fn to_params(&self) -> ParamVector {
        let mut pv = ParamVector::new();
        pv.push(ParamArray::from_matrix("w1", &self.w1));
        push_bn(&mut pv, "bn1", &self.bn1);
        pv.push(ParamArray::from_matrix("w2", &self.w2));
        push_bn(&mut pv, "bn2", &self.bn2);
        pv
    }

    pub fn trainable_params(&self) -> ParamVector {
        self.to_params().select(&GCN_TRAINABLE)
    }

    pub fn from_params(pv: &ParamVector) -> Result<Self> {
        let w1 = pv.require("w1")?.to_matrix()?;
        let w2 = pv.require("w2")?.to_matrix()?;
        let d = w1.ncols();
        if w2.dim() != (d, d) {
            return Err(Error::Schema(format!(
                "w2 is {:?}, expected ({d}, {d})",
                w2.dim()
            )));
        }
        Ok(Self {
            w1,
            bn1: read_bn(pv, "bn1", d)?,
            w2,
            bn2: read_bn(pv, "bn2", d)?,
        })
    }

    /// Overwrites any arrays present in `pv` (trainable or buffers).
    pub fn load(&mut self, pv: &ParamVector) -> Result<()> {
        let mut all = self.to_params();
        all.overwrite_from(pv)?;
        *self = Self::from_params(&all)?;
        Ok(())
    }

    pub fn forward(
        &self,
        adj: &NormalizedAdjacency,
        x: &Array2<f64>,
        mode: Mode,
    ) -> Result<(Array2<f64>, GcnCache)> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "features have {} columns, encoder expects {}",
                x.ncols(),
                self.in_dim()
            )));
        }
        if x.nrows() != adj.num_nodes() {
            return Err(Error::Shape(format!(
                "features have {} rows, adjacency has {} nodes",
                x.nrows(),
                adj.num_nodes()
            )));
        }
        let ax = adj.matmul(x.view())?;
        let z1 = ax.dot(&self.w1);
        let (b1, bn1) = self.bn1.forward(&relu(&z1), mode);
        let ab1 = adj.matmul(b1.view())?;
        let z2 = ab1.dot(&self.w2);
        let (h, bn2) = self.bn2.forward(&relu(&z2), mode);
        Ok((
            h,
            GcnCache {
                mode,
                ax,
                z1,
                bn1,
                ab1,
                z2,
                bn2,
            },
        ))
    }

    /// Updates running statistics from a train-mode pass.
    pub fn absorb_batch_stats(&mut self, cache: &GcnCache) {
        self.bn1.absorb(&cache.bn1);
        self.bn2.absorb(&cache.bn2);
    }

    /// Reverse-mode gradients of a train-mode [`forward`](Self::forward).
    /// Returned parameter gradients use the [`GCN_TRAINABLE`] names.
    pub fn backward(
        &self,
        adj: &NormalizedAdjacency,
        cache: &GcnCache,
        grad_h: &Array2<f64>,
    ) -> Result<GcnGrads> {
        if cache.mode != Mode::Train {
            return Err(Error::Invalid(
                "gcn backward needs a train-mode cache".into(),
            ));
        }
        if grad_h.dim() != cache.z2.dim() {
            return Err(Error::Shape(format!(
                "grad_h is {:?}, output is {:?}",
                grad_h.dim(),
                cache.z2.dim()
            )));
        }
        let (d_r2, g_bn2) = self.bn2.backward(&cache.bn2, grad_h);
        let d_z2 = d_r2 * relu_mask(&cache.z2);
        let d_w2 = cache.ab1.t().dot(&d_z2);
        let d_b1 = adj.matmul(d_z2.dot(&self.w2.t()).view())?;
        let (d_r1, g_bn1) = self.bn1.backward(&cache.bn1, &d_b1);
        let d_z1 = d_r1 * relu_mask(&cache.z1);
        let d_w1 = cache.ax.t().dot(&d_z1);
        let d_x = adj.matmul(d_z1.dot(&self.w1.t()).view())?;

        let mut params = ParamVector::new();
        params.push(ParamArray::from_matrix("w1", &d_w1));
        params.push(ParamArray::from_vector("bn1.gamma", &g_bn1.gamma));
        params.push(ParamArray::from_vector("bn1.beta", &g_bn1.beta));
        params.push(ParamArray::from_matrix("w2", &d_w2));
        params.push(ParamArray::from_vector("bn2.gamma", &g_bn2.gamma));
        params.push(ParamArray::from_vector("bn2.beta", &g_bn2.beta));
        Ok(GcnGrads { params, x: d_x })
    }

    /// Convenience: eval-mode embeddings.
    pub fn embed(&self, adj: &NormalizedAdjacency, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(adj, x, Mode::Eval)?.0)
    }
}

fn push_bn(pv: &mut ParamVector, prefix: &str, bn: &BatchNorm) {
    pv.push(ParamArray::from_vector(format!("{prefix}.gamma"), &bn.gamma));
    pv.push(ParamArray::from_vector(format!("{prefix}.beta"), &bn.beta));
    pv.push(ParamArray::from_vector(
        format!("{prefix}.running_mean"),
        &bn.running_mean,
    ));
    pv.push(ParamArray::from_vector(
        format!("{prefix}.running_var"),
        &bn.running_var,
    ));
}

fn read_bn(pv: &ParamVector, prefix: &str, d: usize) -> Result<BatchNorm> {
    let mut bn = BatchNorm::new(d);
    let get = |field: &str| -> Result<ndarray::Array1<f64>> {
        let v = pv.require(&format!("{prefix}.{field}"))?.to_vector()?;
        if v.len() != d {
            return Err(Error::Schema(format!("{prefix}.{field} has length {}", v.len())));
        }
        Ok(v)
    };
    bn.gamma = get("gamma")?;
    bn.beta = get("beta")?;
    bn.running_mean = get("running_mean")?;
    bn.running_var = get("running_var")?;
    if bn.running_var.iter().any(|&v| v < 0.0) {
        return Err(Error::Invalid(format!("{prefix}.running_var has negative entries")));
    }
    Ok(bn)
}

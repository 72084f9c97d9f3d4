use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::params::{init_params, ParamArray, ParamVector};
use super::{relu, relu_mask};
use crate::error::{Error, Result};

/// Fully connected stack, ReLU between layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to every layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of every hidden layer.
    pre: Vec<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub params: ParamVector,
    pub input: Array2<f64>,
}

impl Mlp {
    /// `dims = [in, hidden..., out]`.
    pub fn schema(dims: &[usize]) -> Vec<(String, Vec<usize>)> {
        dims.windows(2)
            .enumerate()
            .flat_map(|(i, w)| {
                [
                    (format!("l{i}.w"), vec![w[0], w[1]]),
                    (format!("l{i}.b"), vec![w[1]]),
                ]
            })
            .collect()
    }

    pub fn init(dims: &[usize], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2, "an mlp needs at least input and output dims");
        Self::from_params(&init_params(&Self::schema(dims), rng)).expect("schema is self-consistent")
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.ncols()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.in_dim()];
        d.extend(self.layers.iter().map(|l| l.weight.ncols()));
        d
    }

    pub fn to_params(&self) -> ParamVector {
        let mut pv = ParamVector::new();
        for (i, l) in self.layers.iter().enumerate() {
            pv.push(ParamArray::from_matrix(format!("l{i}.w"), &l.weight));
            pv.push(ParamArray::from_vector(format!("l{i}.b"), &l.bias));
        }
        pv
    }

    pub fn from_params(pv: &ParamVector) -> Result<Self> {
        if pv.is_empty() || !pv.len().is_multiple_of(2) {
            return Err(Error::Schema(format!("{} arrays do not form an mlp", pv.len())));
        }
        let mut layers = Vec::new();
        for i in 0..pv.len() / 2 {
            let weight = pv.require(&format!("l{i}.w"))?.to_matrix()?;
            let bias = pv.require(&format!("l{i}.b"))?.to_vector()?;
            if bias.len() != weight.ncols() {
                return Err(Error::Schema(format!("layer {i} bias/weight mismatch")));
            }
            if let Some(prev) = layers.last() {
                let prev: &Linear = prev;
                if prev.weight.ncols() != weight.nrows() {
                    return Err(Error::Schema(format!("layer {i} does not chain")));
                }
            }
            layers.push(Linear { weight, bias });
        }
        Ok(Self { layers })
    }

    pub fn load(&mut self, pv: &ParamVector) -> Result<()> {
        let mut all = self.to_params();
        all.overwrite_from(pv)?;
        *self = Self::from_params(&all)?;
        Ok(())
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        if x.ncols() != self.in_dim() {
            return Err(Error::Shape(format!(
                "mlp input has {} columns, expected {}",
                x.ncols(),
                self.in_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut cur = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = cur.dot(&layer.weight) + &layer.bias;
            inputs.push(cur);
            cur = if i < last {
                let a = relu(&z);
                pre.push(z);
                a
            } else {
                z
            };
        }
        Ok((cur, MlpCache { inputs, pre }))
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(x)?.0)
    }

    pub fn backward(&self, cache: &MlpCache, grad_out: &Array2<f64>) -> Result<MlpGrads> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Invalid("mlp cache does not match this network".into()));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            if i < self.layers.len() - 1 {
                g = g * relu_mask(&cache.pre[i]);
            }
            let layer = &self.layers[i];
            let d_w = cache.inputs[i].t().dot(&g);
            let d_b = g.sum_axis(Axis(0));
            g = g.dot(&layer.weight.t());
            grads.push((d_w, d_b));
        }
        grads.reverse();
        let mut params = ParamVector::new();
        for (i, (d_w, d_b)) in grads.iter().enumerate() {
            params.push(ParamArray::from_matrix(format!("l{i}.w"), d_w));
            params.push(ParamArray::from_vector(format!("l{i}.b"), d_b));
        }
        Ok(MlpGrads { params, input: g })
    }
}

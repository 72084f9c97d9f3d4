//! Synthetic multi-client data: one stochastic block model per client with
//! class-correlated Gaussian features in a shared feature space.
//!
//! Client `c` places its class means in its own block of `signal_dim`
//! feature columns (`[c·signal_dim, (c+1)·signal_dim)`), so clients share
//! the feature space but not the label semantics.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphBundle;
use crate::seed::{self, purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSpec {
    /// Number of blocks, one per class.
    pub classes: usize,
    pub block_size: usize,
    pub p_in: f64,
    pub p_out: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub clients: Vec<ClientSpec>,
    pub feature_dim: usize,
    pub signal_dim: usize,
    /// Norm of each class mean.
    pub signal_strength: f64,
    pub noise_std: f64,
    /// Fraction of nodes that keep their label.
    pub label_fraction: f64,
}

impl SyntheticSpec {
    /// Six clients with 2 to 7 classes each.
    pub fn desk() -> Self {
        let clients = (0..6)
            .map(|c| ClientSpec {
                classes: 2 + c,
                block_size: 60,
                p_in: 0.12,
                p_out: 0.01,
            })
            .collect();
        Self {
            clients,
            feature_dim: 64,
            signal_dim: 8,
            signal_strength: 1.5,
            noise_std: 1.0,
            label_fraction: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients.is_empty() {
            return Err(Error::Config("synthetic spec needs at least one client".into()));
        }
        for (i, c) in self.clients.iter().enumerate() {
            if c.classes < 2 {
                return Err(Error::Config(format!("client {i}: classes must be >= 2")));
            }
            if c.block_size == 0 {
                return Err(Error::Config(format!("client {i}: empty blocks")));
            }
            for (name, p) in [("p_in", c.p_in), ("p_out", c.p_out)] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("client {i}: {name} = {p} outside [0, 1]")));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.label_fraction) {
            return Err(Error::Config("label_fraction outside [0, 1]".into()));
        }
        if self.signal_dim == 0 || self.clients.len() * self.signal_dim > self.feature_dim {
            return Err(Error::Config(format!(
                "{} clients x {} signal dims do not fit in {} features",
                self.clients.len(),
                self.signal_dim,
                self.feature_dim
            )));
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Vec<GraphBundle>> {
    spec.validate()?;
    spec.clients
        .iter()
        .enumerate()
        .map(|(c, cs)| generate_client(spec, cs, c, &mut seed::stream(seed, &[purpose::SYNTH, c as u64])))
        .collect()
}

fn generate_client(spec: &SyntheticSpec, cs: &ClientSpec, c: usize, rng: &mut impl Rng) -> Result<GraphBundle> {
    let n = cs.classes * cs.block_size;
    let labels: Vec<usize> = (0..n).map(|i| i / cs.block_size).collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { cs.p_in } else { cs.p_out };
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let offset = c * spec.signal_dim;
    let means: Vec<Vec<f64>> = (0..cs.classes)
        .map(|_| {
            let v: Vec<f64> = (0..spec.signal_dim).map(|_| StandardNormal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x / norm * spec.signal_strength).collect()
        })
        .collect();
    let mut features = Array2::zeros((n, spec.feature_dim));
    for (i, mut row) in features.rows_mut().into_iter().enumerate() {
        for x in row.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *x = spec.noise_std * z;
        }
        for (k, m) in means[labels[i]].iter().enumerate() {
            row[offset + k] += m;
        }
    }

    let kept: Vec<Option<usize>> = labels
        .iter()
        .map(|&y| (rng.gen::<f64>() < spec.label_fraction).then_some(y))
        .collect();
    GraphBundle::new(format!("synth-{c}"), n, edges, features)?.with_labels(kept, cs.classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            clients: vec![
                ClientSpec {
                    classes: 2,
                    block_size: 10,
                    p_in: 0.5,
                    p_out: 0.05,
                },
                ClientSpec {
                    classes: 3,
                    block_size: 8,
                    p_in: 0.4,
                    p_out: 0.0,
                },
            ],
            feature_dim: 6,
            signal_dim: 3,
            signal_strength: 2.0,
            noise_std: 0.5,
            label_fraction: 1.0,
        }
    }

    #[test]
    fn deterministic_by_seed() {
        let a = generate_synthetic(&small(), 1).unwrap();
        assert_eq!(a, generate_synthetic(&small(), 1).unwrap());
        assert_ne!(a, generate_synthetic(&small(), 2).unwrap());
    }

    #[test]
    fn shapes_and_labels() {
        let out = generate_synthetic(&small(), 0).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].num_nodes(), 20);
        assert_eq!(out[1].num_nodes(), 24);
        assert!(out.iter().all(|b| b.feature_dim() == 6));
        assert_eq!(out[1].num_classes, 3);
        // p_out = 0 keeps blocks disconnected
        assert!(out[1].edges().iter().all(|&(a, b)| a / 8 == b / 8));
    }

    #[test]
    fn signal_lives_in_client_subspace() {
        let mut spec = small();
        spec.noise_std = 0.0;
        let out = generate_synthetic(&spec, 0).unwrap();
        assert!(out[0].features.columns().into_iter().skip(3).all(|c| c.iter().all(|&x| x == 0.0)));
        assert!(out[1].features.columns().into_iter().take(3).all(|c| c.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn label_fraction_hides_labels() {
        let mut spec = small();
        spec.label_fraction = 0.0;
        let out = generate_synthetic(&spec, 0).unwrap();
        assert_eq!(out[0].num_labeled(), 0);
    }

    #[test]
    fn rejects_overlapping_subspaces() {
        let mut spec = small();
        spec.signal_dim = 4;
        assert!(generate_synthetic(&spec, 0).is_err());
    }
}

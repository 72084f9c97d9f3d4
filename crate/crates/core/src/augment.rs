//! Stochastic graph views: column-wise feature masking and edge dropping.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphBundle, NormalizedAdjacency};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub p_feat: f64,
    pub p_edge: f64,
}

impl AugmentConfig {
    pub const IDENTITY: Self = Self {
        p_feat: 0.0,
        p_edge: 0.0,
    };

    pub fn new(p_feat: f64, p_edge: f64) -> Result<Self> {
        let cfg = Self { p_feat, p_edge };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_feat", self.p_feat), ("p_edge", self.p_edge)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// The two augmentations used to build correlated views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentPair {
    pub view1: AugmentConfig,
    pub view2: AugmentConfig,
}

impl AugmentPair {
    pub fn validate(&self) -> Result<()> {
        self.view1.validate()?;
        self.view2.validate()
    }
}

#[derive(Debug, Clone)]
pub struct View {
    pub features: Array2<f64>,
    pub adj: NormalizedAdjacency,
    /// Surviving canonical edges.
    pub edges: Vec<(usize, usize)>,
    pub masked_columns: Vec<bool>,
}

/// Draws one view. Column masks are drawn first (one draw per feature
/// column), then one draw per canonical edge, in edge order.
pub fn augment(bundle: &GraphBundle, cfg: &AugmentConfig, rng: &mut impl Rng) -> View {
    let masked_columns: Vec<bool> = (0..bundle.feature_dim())
        .map(|_| rng.gen::<f64>() < cfg.p_feat)
        .collect();
    let mut features = bundle.features.clone();
    for (j, &masked) in masked_columns.iter().enumerate() {
        if masked {
            features.column_mut(j).fill(0.0);
        }
    }
    let edges: Vec<(usize, usize)> = bundle
        .edges()
        .iter()
        .copied()
        .filter(|_| rng.gen::<f64>() >= cfg.p_edge)
        .collect();
    let adj = NormalizedAdjacency::from_canonical_edges(bundle.num_nodes(), &edges);
    View {
        features,
        adj,
        edges,
        masked_columns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::normalize_adjacency;
    use crate::seed;

    fn ring(n: usize, f: usize) -> GraphBundle {
        let features = Array2::from_shape_fn((n, f), |(i, j)| (i * f + j) as f64 + 0.5);
        GraphBundle::new("ring", n, (0..n).map(|i| (i, (i + 1) % n)), features).unwrap()
    }

    #[test]
    fn zero_probabilities_are_identity() {
        let b = ring(12, 5);
        let v = augment(&b, &AugmentConfig::IDENTITY, &mut seed::stream(0, &[]));
        assert_eq!(v.features, b.features);
        assert_eq!(v.edges, b.edges());
        assert_eq!(v.adj, normalize_adjacency(&b));
    }

    #[test]
    fn full_feature_mask_zeroes_everything() {
        let b = ring(6, 4);
        let v = augment(&b, &AugmentConfig::new(1.0, 0.0).unwrap(), &mut seed::stream(0, &[]));
        assert!(v.features.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn masked_columns_zero_and_others_untouched() {
        let b = ring(10, 20);
        let v = augment(&b, &AugmentConfig::new(0.5, 0.5).unwrap(), &mut seed::stream(4, &[]));
        for (j, &m) in v.masked_columns.iter().enumerate() {
            if m {
                assert!(v.features.column(j).iter().all(|&x| x == 0.0));
            } else {
                assert_eq!(v.features.column(j), b.features.column(j));
            }
        }
        assert!(v.edges.iter().all(|e| b.edges().contains(e)));
    }

    #[test]
    fn same_seed_same_view() {
        let b = ring(30, 6);
        let cfg = AugmentConfig::new(0.3, 0.4).unwrap();
        let a = augment(&b, &cfg, &mut seed::stream(9, &[1, 2]));
        let c = augment(&b, &cfg, &mut seed::stream(9, &[1, 2]));
        assert_eq!(a.features, c.features);
        assert_eq!(a.edges, c.edges);
        assert_eq!(a.adj, c.adj);
    }

    #[test]
    fn isolated_nodes_keep_self_loop() {
        let b = ring(5, 1);
        let v = augment(&b, &AugmentConfig::new(0.0, 1.0).unwrap(), &mut seed::stream(0, &[]));
        assert!(v.edges.is_empty());
        assert_eq!(v.adj.to_dense(), Array2::<f64>::eye(5));
    }

    #[test]
    fn rejects_bad_probabilities() {
        assert!(AugmentConfig::new(1.1, 0.0).is_err());
        assert!(AugmentConfig::new(0.0, -0.1).is_err());
    }
}

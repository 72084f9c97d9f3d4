mod common;

use fedgrl_core::augment::{augment, AugmentConfig};
use fedgrl_core::bgrl::bootstrap_loss;
use fedgrl_core::federation::fedavg;
use fedgrl_core::graph::split_nodes;
use fedgrl_core::nn::{cosine_lr, ema_decay, ParamArray, ParamVector};
use fedgrl_core::supervised::{cross_entropy, softmax, Reduction};
use fedgrl_core::{seed, GraphBundle, NormalizedAdjacency};
use ndarray::Array2;
use proptest::prelude::*;

fn edges_strategy() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..20).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..60)))
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-5.0f64..5.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

fn param_vector(shapes: &[(usize, usize)], values: &[f64]) -> ParamVector {
    let mut pv = ParamVector::new();
    let mut off = 0;
    for (k, &(r, c)) in shapes.iter().enumerate() {
        pv.push(ParamArray::new(format!("p{k}"), vec![r, c], values[off..off + r * c].to_vec()));
        off += r * c;
    }
    pv
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjacency_is_symmetric_with_unit_diagonal_degree((n, edges) in edges_strategy()) {
        let edges: Vec<_> = edges.into_iter().filter(|(a, b)| a != b).collect();
        let adj = NormalizedAdjacency::from_edges(n, edges.clone()).unwrap();
        let dense = adj.to_dense();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(dense[[i, j]], dense[[j, i]]);
            }
            // self-loop weight is 1 / degree including the loop
            let deg = adj.row(i).count() as f64;
            prop_assert!((dense[[i, i]] - 1.0 / deg).abs() < 1e-15);
        }
    }

    #[test]
    fn adjacency_commutes_with_node_permutation((n, edges) in edges_strategy(), shift in 0usize..100) {
        let edges: Vec<_> = edges.into_iter().filter(|(a, b)| a != b).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut seed::stream(shift as u64, &[]));
        let a = NormalizedAdjacency::from_edges(n, edges.clone()).unwrap();
        let b = NormalizedAdjacency::from_edges(n, edges.iter().map(|&(u, v)| (perm[u], perm[v]))).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(a.get(i, j), b.get(perm[i], perm[j]));
            }
        }
    }

    #[test]
    fn splits_partition_the_nodes(n in 3usize..500, train in 0.05f64..0.8, val_frac in 0.05f64..0.9, s in any::<u64>()) {
        let val = (1.0 - train) * val_frac;
        let test = 1.0 - train - val;
        let split = split_nodes(n, (train, val, test), s).unwrap();
        split.validate(n).unwrap();
        prop_assert_eq!(split.train_ids.len() + split.val_ids.len() + split.test_ids.len(), n);
        prop_assert!(!split.train_ids.is_empty() && !split.val_ids.is_empty() && !split.test_ids.is_empty());
        prop_assert_eq!(split, split_nodes(n, (train, val, test), s).unwrap());
    }

    #[test]
    fn bootstrap_loss_range_and_scale_invariance(
        (z, h) in (1usize..12, 1usize..6).prop_flat_map(|(n, d)| (matrix(n, d), matrix(n, d))),
        scale in 0.01f64..100.0,
    ) {
        let out = bootstrap_loss(&z, &h);
        prop_assert!((-2.0..=2.0).contains(&out.loss));
        let scaled = bootstrap_loss(&z.mapv(|v| v * scale), &h.mapv(|v| v / scale));
        prop_assert!((out.loss - scaled.loss).abs() < 1e-12);
    }

    #[test]
    fn identical_prediction_and_target_give_exactly_minus_two(
        z in (1usize..12, 1usize..6).prop_flat_map(|(n, d)| matrix(n, d)),
    ) {
        prop_assume!(z.rows().into_iter().all(|r| r.dot(&r) > 0.0));
        prop_assert_eq!(bootstrap_loss(&z, &z).loss, -2.0);
    }

    #[test]
    fn cross_entropy_ignores_row_shifts(
        logits in (1usize..10, 2usize..6).prop_flat_map(|(n, m)| matrix(n, m)),
        shift in -50.0f64..50.0,
        label_seed in any::<u64>(),
    ) {
        let (n, m) = logits.dim();
        use rand::Rng;
        let mut rng = seed::stream(label_seed, &[]);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..m)).collect();
        let ids: Vec<usize> = (0..n).collect();
        let a = cross_entropy(&logits, &ids, &labels, Reduction::Sum).unwrap();
        let b = cross_entropy(&logits.mapv(|v| v + shift), &ids, &labels, Reduction::Sum).unwrap();
        prop_assert!((a.loss - b.loss).abs() <= 1e-9 * a.loss.abs().max(1.0));
        prop_assert!(a.loss >= 0.0);
        for row in softmax(&logits).rows() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn augmentation_masks_columns_and_drops_edges(
        (n, edges) in edges_strategy(),
        f in 1usize..8,
        p_feat in 0.0f64..=1.0,
        p_edge in 0.0f64..=1.0,
        s in any::<u64>(),
    ) {
        let edges: Vec<_> = edges.into_iter().filter(|(a, b)| a != b).collect();
        let x = Array2::from_shape_fn((n, f), |(i, j)| 1.0 + (i * f + j) as f64);
        let b = GraphBundle::new("g", n, edges, x).unwrap();
        let cfg = AugmentConfig::new(p_feat, p_edge).unwrap();
        let v = augment(&b, &cfg, &mut seed::stream(s, &[]));
        let again = augment(&b, &cfg, &mut seed::stream(s, &[]));
        prop_assert_eq!(&v.features, &again.features);
        prop_assert_eq!(&v.edges, &again.edges);
        for (j, &masked) in v.masked_columns.iter().enumerate() {
            if masked {
                prop_assert!(v.features.column(j).iter().all(|&x| x == 0.0));
            } else {
                prop_assert_eq!(v.features.column(j), b.features.column(j));
            }
        }
        prop_assert!(v.edges.iter().all(|e| b.edges().binary_search(e).is_ok()));
        let identity = augment(&b, &AugmentConfig::IDENTITY, &mut seed::stream(s, &[]));
        prop_assert_eq!(&identity.features, &b.features);
        prop_assert_eq!(identity.edges.as_slice(), b.edges());
    }

    #[test]
    fn fedavg_matches_weighted_mean_and_is_order_free(
        k in 1usize..6,
        values in prop::collection::vec(-10.0f64..10.0, 6 * 7),
        weights in prop::collection::vec(0.1f64..100.0, 6),
        rot in 0usize..6,
    ) {
        let shapes = [(2, 2), (1, 3)];
        let clients: Vec<ParamVector> = (0..k).map(|c| param_vector(&shapes, &values[c * 7..])).collect();
        let updates: Vec<(&ParamVector, f64)> = clients.iter().zip(&weights).map(|(p, &w)| (p, w)).collect();
        let avg = fedavg(&updates).unwrap();
        let total: f64 = weights[..k].iter().sum();
        for (a, arr) in avg.iter().enumerate() {
            for (i, &got) in arr.data.iter().enumerate() {
                let want: f64 = (0..k).map(|c| weights[c] / total * clients[c].iter().nth(a).unwrap().data[i]).sum();
                prop_assert!((got - want).abs() <= 1e-13 * want.abs().max(1.0));
            }
        }
        let mut rotated = updates.clone();
        rotated.rotate_left(rot % k);
        prop_assert_eq!(&fedavg(&rotated).unwrap(), &avg);
        let same: Vec<(&ParamVector, f64)> = weights[..k].iter().map(|&w| (&clients[0], w)).collect();
        prop_assert_eq!(&fedavg(&same).unwrap(), &clients[0]);
    }

    #[test]
    fn param_vector_norm_scales(values in prop::collection::vec(-10.0f64..10.0, 7), alpha in -5.0f64..5.0) {
        let p = param_vector(&[(2, 2), (1, 3)], &values);
        prop_assert!((p.scaled(alpha).norm() - alpha.abs() * p.norm()).abs() <= 1e-12 * p.norm().max(1.0));
        let mut q = p.clone();
        q.axpy(-1.0, &p).unwrap();
        prop_assert_eq!(q.norm(), 0.0);
    }

    #[test]
    fn schedules_stay_in_range(base in 0.0f64..1.0, total in 2usize..500, t in 0usize..600, warm_frac in 0.0f64..0.5) {
        let warm = (total as f64 * warm_frac) as usize;
        let lr = cosine_lr(0.1, t, total, warm);
        prop_assert!((0.0..=0.1 + 1e-15).contains(&lr));
        let d0 = ema_decay(base, t, total);
        let d1 = ema_decay(base, t + 1, total);
        prop_assert!(d0 <= d1);
        prop_assert!(d0 >= base - 1e-15 && d1 <= 1.0);
    }
}

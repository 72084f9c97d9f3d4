#![allow(dead_code)]

use fedgrl_core::augment::{augment, AugmentConfig, AugmentPair};
use fedgrl_core::bgrl::{BgrlState, ONLINE, PREDICTOR};
use fedgrl_core::federation::{
    run_federation_with, ClientState, FedConfig, LrSchedule, ModelConfig, Protocol, Weighting, ENCODER,
};
use fedgrl_core::nn::{AdamWConfig, GcnEncoder, Mlp, Mode, ParamVector};
use fedgrl_core::supervised::{ce_loss_and_grads, Reduction};
use fedgrl_core::{normalize_adjacency, seed, GraphBundle};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

/// Random labeled graph with every node labeled.
pub fn random_bundle(rng: &mut impl Rng, n: usize, f: usize, m: usize, p_edge: f64) -> GraphBundle {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p_edge {
                edges.push((i, j));
            }
        }
    }
    let x = Array2::from_shape_fn((n, f), |_| rng.sample(StandardNormal));
    let labels = (0..n).map(|_| Some(rng.gen_range(0..m))).collect();
    GraphBundle::new("rand", n, edges, x)
        .unwrap()
        .with_labels(labels, m)
        .unwrap()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// Below this gradient norm the comparison becomes absolute: central
/// differences carry ~ε·|f|/h ≈ 1e-11 of rounding noise.
pub const FD_NORM_FLOOR: f64 = 1e-4;

/// Central differences of `f` around `params` for every array in
/// `analytic`; returns `(array name, ‖g - g_fd‖ / max(‖g‖, ‖g_fd‖, floor))`.
pub fn finite_difference_errors(
    params: &ParamVector,
    analytic: &ParamVector,
    h: f64,
    f: impl Fn(&ParamVector) -> f64,
) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for g in analytic.iter() {
        let base = params.get(&g.name).expect("gradient names a parameter");
        assert_eq!(base.shape, g.shape, "{}", g.name);
        let mut num = vec![0.0; g.data.len()];
        for (i, slot) in num.iter_mut().enumerate() {
            let mut plus = params.clone();
            plus.get_mut(&g.name).unwrap().data[i] += h;
            let mut minus = params.clone();
            minus.get_mut(&g.name).unwrap().data[i] -= h;
            *slot = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        let diff: f64 = g.data.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = g.data.iter().map(|a| a * a).sum::<f64>().sqrt().max(num.iter().map(|b| b * b).sum::<f64>().sqrt());
        let rel = diff / scale.max(FD_NORM_FLOOR);
        out.push((g.name.clone(), rel));
    }
    out
}

pub fn worst(errors: &[(String, f64)]) -> (String, f64) {
    errors
        .iter()
        .cloned()
        .fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a })
}

pub const FD_H: f64 = 1e-5;


/// Small random sizes within N ≤ 8, F ≤ 5, d ≤ 4.
fn dims(rng: &mut impl Rng) -> (usize, usize, usize) {
    (rng.gen_range(3..=8), rng.gen_range(2..=5), rng.gen_range(2..=4))
}

pub fn randomize_biases(mlp: &mut Mlp, rng: &mut impl Rng) {
    for layer in &mut mlp.layers {
        layer.bias.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    }
}

/// Train-mode GCN against `sum(H ⊙ R)`.
pub fn gcn_gradient_errors(case: u64) -> Vec<(String, f64)> {
    let mut rng = seed::stream(case, &[100]);
    let (n, f, d) = dims(&mut rng);
    let bundle = random_bundle(&mut rng, n, f, 2, 0.4);
    let adj = normalize_adjacency(&bundle);
    let enc = GcnEncoder::init(f, d, &mut rng);
    let r = random_matrix(&mut rng, n, d);
    let (_, cache) = enc.forward(&adj, &bundle.features, Mode::Train).unwrap();
    let analytic = enc.backward(&adj, &cache, &r).unwrap().params;
    finite_difference_errors(&enc.trainable_params(), &analytic, FD_H, |p| {
        let mut e = enc.clone();
        e.load(p).unwrap();
        let (h, _) = e.forward(&adj, &bundle.features, Mode::Train).unwrap();
        (&h * &r).sum()
    })
}

/// Two-layer MLP head against `sum(out ⊙ R)`.
pub fn mlp_gradient_errors(case: u64) -> Vec<(String, f64)> {
    let mut rng = seed::stream(case, &[101]);
    let (n, f, d) = dims(&mut rng);
    let mlp = Mlp::init(&[f, 6, d], &mut rng);
    let x = random_matrix(&mut rng, n, f);
    let r = random_matrix(&mut rng, n, d);
    let (_, cache) = mlp.forward(&x).unwrap();
    let analytic = mlp.backward(&cache, &r).unwrap().params;
    finite_difference_errors(&mlp.to_params(), &analytic, FD_H, |p| {
        let mut m = mlp.clone();
        m.load(p).unwrap();
        (&m.predict(&x).unwrap() * &r).sum()
    })
}

/// Full bootstrap pipeline on two views drawn with fixed seeds; the target
/// encoder is held fixed while ω and s are perturbed.
pub fn bgrl_gradient_errors(case: u64) -> Vec<(String, f64)> {
    let mut rng = seed::stream(case, &[102]);
    let (n, f, d) = dims(&mut rng);
    let bundle = random_bundle(&mut rng, n, f, 2, 0.5);
    let mut state = BgrlState::init(f, d, 5, 10, &mut rng.clone(), &mut seed::stream(case, &[103]));
    // nonzero biases keep predictions off the cosine's singular point z = 0
    randomize_biases(&mut state.predictor, &mut rng);
    // a target that differs from the online encoder
    state.target = GcnEncoder::init(f, d, &mut seed::stream(case, &[104]));
    let cfg = AugmentConfig { p_feat: 0.2, p_edge: 0.3 };
    let v1 = augment(&bundle, &cfg, &mut seed::stream(case, &[105]));
    let v2 = augment(&bundle, &cfg, &mut seed::stream(case, &[106]));
    let step = state.loss_and_grads_on_views(&v1, &v2).unwrap();
    assert!(step.grads.names().all(|n| !n.starts_with("target")));
    finite_difference_errors(&state.trainable_shared(), &step.grads, FD_H, |p| {
        let mut s = state.clone();
        s.online.load(&p.strip_prefix(ONLINE)).unwrap();
        s.predictor.load(&p.strip_prefix(PREDICTOR)).unwrap();
        s.loss_and_grads_on_views(&v1, &v2).unwrap().loss
    })
}

/// Mean cross-entropy of head ∘ encoder on a labeled subset.
pub fn ce_gradient_errors(case: u64) -> Vec<(String, f64)> {
    let mut rng = seed::stream(case, &[107]);
    let (n, f, d) = dims(&mut rng);
    let m = rng.gen_range(2..=4);
    let bundle = random_bundle(&mut rng, n, f, m, 0.4);
    let adj = normalize_adjacency(&bundle);
    let enc = GcnEncoder::init(f, d, &mut rng);
    let mut head = Mlp::init(&[d, 5, m], &mut rng);
    randomize_biases(&mut head, &mut rng);
    let ids: Vec<usize> = (0..n).filter(|i| i % 3 != 1).collect();
    let step = ce_loss_and_grads(&head, &enc, &adj, &bundle, &ids, true, Reduction::Mean).unwrap();
    let mut analytic = step.encoder_grads.unwrap().prefixed("encoder");
    analytic.extend(step.head_grads.prefixed("head"));
    let mut params = enc.trainable_params().prefixed("encoder");
    params.extend(head.to_params().prefixed("head"));
    finite_difference_errors(&params, &analytic, FD_H, |p| {
        let (mut e, mut h) = (enc.clone(), head.clone());
        e.load(&p.strip_prefix("encoder")).unwrap();
        h.load(&p.strip_prefix("head")).unwrap();
        ce_loss_and_grads(&h, &e, &adj, &bundle, &ids, true, Reduction::Mean).unwrap().loss
    })
}

pub fn fed_config(protocol: Protocol, rounds: usize) -> FedConfig {
    FedConfig {
        protocol,
        rounds,
        warmup_rounds: 2,
        local_epochs: 1,
        weighting: Weighting::ByDataSize,
        lambda: vec![1.0],
        participation: 1.0,
        seed: 42,
        optimizer: AdamWConfig::new(0.01, 1e-3),
        lr_schedule: LrSchedule::Cosine,
        model: ModelConfig {
            hidden: 4,
            predictor_hidden: 8,
            head_hidden: vec![],
            ema_base: 0.99,
        },
        aug: AugmentPair {
            view1: AugmentConfig { p_feat: 0.2, p_edge: 0.3 },
            view2: AugmentConfig { p_feat: 0.1, p_edge: 0.2 },
        },
        ckpt_every: None,
        ckpt_dir: None,
    }
}

pub fn fed_bundles() -> Vec<GraphBundle> {
    let mut rng = seed::stream(9, &[]);
    [(12, 2), (9, 3), (15, 4)]
        .iter()
        .map(|&(n, m)| random_bundle(&mut rng, n, 5, m, 0.3))
        .collect()
}

pub fn fed_clients(cfg: &FedConfig, train: impl Fn(&GraphBundle) -> Vec<usize>) -> Vec<ClientState> {
    fed_bundles()
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            let ids = train(&b);
            ClientState::new(i, b, &ids, cfg).unwrap()
        })
        .collect()
}

pub fn half_train(b: &GraphBundle) -> Vec<usize> {
    (0..b.num_nodes()).step_by(2).collect()
}

pub fn all_train(b: &GraphBundle) -> Vec<usize> {
    (0..b.num_nodes()).collect()
}

pub fn expected_self_schema(f: usize, cfg: &FedConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.model.hidden;
    let mut pv = GcnEncoder::init(f, d, &mut seed::stream(0, &[])).to_params().prefixed(ONLINE);
    pv.extend(
        Mlp::init(&[d, cfg.model.predictor_hidden, d], &mut seed::stream(0, &[]))
            .to_params()
            .prefixed("predictor"),
    );
    pv.schema()
}

/// Runs a self-supervised federation and checks, every round, that the
/// global and every exported vector carry exactly the online and predictor
/// arrays and that BGRL gradients name no target array. Returns the number
/// of rounds checked.
pub fn check_sharing_contract(protocol: Protocol, rounds: usize) -> Result<usize, String> {
    let cfg = fed_config(protocol, rounds);
    let mut cs = fed_clients(&cfg, half_train);
    let expected = expected_self_schema(5, &cfg);
    let mut checked = 0;
    let mut problem = None;
    run_federation_with(&mut cs, &cfg, |log, shared, clients| {
        let round = log.round;
        if problem.is_some() {
            return Ok(());
        }
        if shared.schema() != expected {
            problem = Some(format!("round {round}: global schema differs"));
        }
        for c in clients {
            if c.shared_params().schema() != expected {
                problem = Some(format!("round {round}: client {} exports a different schema", c.id));
            }
            let bgrl = c.bgrl.as_ref().expect("self-supervised client");
            let step = bgrl
                .loss_and_grads(&c.bundle, &cfg.aug, &mut seed::stream(round as u64, &[1]), &mut seed::stream(round as u64, &[2]))
                .unwrap();
            if step.grads.names().any(|n| !(n.starts_with("online.") || n.starts_with("predictor."))) {
                problem = Some(format!("round {round}: gradient outside online/predictor"));
            }
        }
        checked += 1;
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    match problem {
        Some(p) => Err(p),
        None => Ok(checked),
    }
}

/// Largest deviation between the LP2 (λ = 0) and fed_sup trajectories,
/// over every round's global encoder and the final local heads.
pub fn lp2_fallback_max_diff(rounds: usize) -> f64 {
    let mut sup_cfg = fed_config(Protocol::FedSup, rounds);
    sup_cfg.lr_schedule = LrSchedule::Constant;
    let mut lp2_cfg = sup_cfg.clone();
    lp2_cfg.protocol = Protocol::FedSelfLp2;
    lp2_cfg.lambda = vec![0.0];

    let mut sup_traj: Vec<ParamVector> = Vec::new();
    let mut sup = fed_clients(&sup_cfg, all_train);
    run_federation_with(&mut sup, &sup_cfg, |_, shared, _| {
        sup_traj.push(shared.strip_prefix(ENCODER));
        Ok(())
    })
    .unwrap();

    let mut lp2 = fed_clients(&lp2_cfg, all_train);
    let mut worst: f64 = 0.0;
    let mut round = 0;
    run_federation_with(&mut lp2, &lp2_cfg, |_, shared, _| {
        worst = worst.max(shared.strip_prefix(ONLINE).max_abs_diff(&sup_traj[round]).unwrap());
        round += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(round, rounds);
    for (a, b) in lp2.iter().zip(&sup) {
        let (ha, hb) = (a.head.as_ref().unwrap(), b.head.as_ref().unwrap());
        worst = worst.max(ha.to_params().max_abs_diff(&hb.to_params()).unwrap());
    }
    worst
}

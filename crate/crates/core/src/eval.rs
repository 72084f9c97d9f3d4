//! Downstream evaluation protocols.
//!
//! * freeze: eval-mode embeddings, multinomial logistic regression with an
//!   ℓ2 strength picked on validation F1-micro.
//! * finetune: fresh MLP head on a local copy of the encoder, AdamW steps,
//!   best-validation snapshot scored on test.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, GraphBundle, Split};
use crate::nn::{AdamW, AdamWConfig, GcnEncoder, Mlp, ParamVector};
use crate::supervised::{argmax, ce_loss_and_grads, gather_labels, predict_labels, Reduction};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Inverse regularization strengths `C` tried by the probe.
    pub c_grid: Vec<f64>,
    pub probe_max_iter: usize,
    pub probe_tol: f64,
    pub finetune_steps: usize,
    pub finetune_lr: f64,
    pub finetune_wd: f64,
    pub head_hidden: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            c_grid: (-5..=5).map(|k| 2f64.powi(2 * k)).collect(),
            probe_max_iter: 5000,
            probe_tol: 1e-6,
            finetune_steps: 100,
            finetune_lr: 0.01,
            finetune_wd: 1e-3,
            head_hidden: 128,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_grid.is_empty() || self.c_grid.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::Config("c_grid must be a nonempty list of positive values".into()));
        }
        if self.finetune_steps == 0 {
            return Err(Error::Config("finetune_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Micro-averaged F1 over single-label predictions.
pub fn f1_micro(pred: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "prediction/truth lengths differ");
    if pred.is_empty() {
        return 0.0;
    }
    let tp = pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64;
    // every wrong prediction is one false positive (predicted class) and
    // one false negative (true class)
    let fp = pred.len() as f64 - tp;
    let fn_ = fp;
    2.0 * tp / (2.0 * tp + fp + fn_)
}

/// Percentage gain `(a - b) / b · 100` per client and its unweighted mean.
pub fn gains(a: &[f64], b: &[f64]) -> (Vec<f64>, f64) {
    assert_eq!(a.len(), b.len());
    let per: Vec<f64> = a.iter().zip(b).map(|(a, b)| (a - b) / b * 100.0).collect();
    let avg = if per.is_empty() {
        0.0
    } else {
        per.iter().sum::<f64>() / per.len() as f64
    };
    (per, avg)
}

/// Multinomial logistic regression `softmax(x W + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// Classes seen in training; others are never predicted.
    pub active: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeFit {
    pub model: LogisticRegression,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Objective `mean CE + ‖W‖² / (2 C n)` (bias unregularized) and its
/// gradient.
pub fn probe_objective(
    x: &Array2<f64>,
    y: &[usize],
    weights: &Array2<f64>,
    bias: &Array1<f64>,
    c: f64,
) -> (f64, Array2<f64>, Array1<f64>) {
    let n = x.nrows() as f64;
    let reg = 1.0 / (c * n);
    let mut logits = x.dot(weights) + bias;
    let mut loss = 0.0;
    for (mut row, &yi) in logits.rows_mut().into_iter().zip(y) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| v - max);
        let lse = row.mapv(f64::exp).sum().ln();
        loss += lse - row[yi];
        row.mapv_inplace(|v| (v - lse).exp());
        row[yi] -= 1.0;
        row.mapv_inplace(|v| v / n);
    }
    let grad_w = x.t().dot(&logits) + weights * reg;
    let grad_b = logits.sum_axis(Axis(0));
    let objective = loss / n + 0.5 * reg * weights.iter().map(|w| w * w).sum::<f64>();
    (objective, grad_w, grad_b)
}

/// Accelerated gradient descent with backtracking and adaptive restart,
/// until `‖∇‖ < tol` or `max_iter` iterations.
pub fn fit_logistic(
    x: &Array2<f64>,
    y: &[usize],
    num_classes: usize,
    c: f64,
    max_iter: usize,
    tol: f64,
) -> Result<ProbeFit> {
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(Error::Invalid("probe needs a nonempty, consistent training set".into()));
    }
    let d = x.ncols();
    let mut active = vec![false; num_classes];
    for &yi in y {
        if yi >= num_classes {
            return Err(Error::LabelOutOfRange {
                node: 0,
                label: yi,
                num_classes,
            });
        }
        active[yi] = true;
    }

    let mut w = Array2::zeros((d, num_classes));
    let mut b = Array1::zeros(num_classes);
    let (mut w_prev, mut b_prev) = (w.clone(), b.clone());
    let (mut obj, _, _) = probe_objective(x, y, &w, &b, c);
    let mut step = 1.0;
    let mut momentum_k = 0usize;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;

    while iterations < max_iter {
        let beta = momentum_k as f64 / (momentum_k as f64 + 3.0);
        let w_look = &w + &((&w - &w_prev) * beta);
        let b_look = &b + &((&b - &b_prev) * beta);
        let (obj_look, gw, gb) = probe_objective(x, y, &w_look, &b_look, c);
        let g_sq = gw.iter().chain(gb.iter()).map(|g| g * g).sum::<f64>();

        // backtracking on the sufficient-decrease condition at the look-ahead point
        let (w_new, b_new, obj_new) = loop {
            let w_try = &w_look - &(&gw * step);
            let b_try = &b_look - &(&gb * step);
            let (obj_try, _, _) = probe_objective(x, y, &w_try, &b_try, c);
            if obj_try <= obj_look - 0.5 * step * g_sq || step < 1e-12 {
                break (w_try, b_try, obj_try);
            }
            step *= 0.5;
        };
        iterations += 1;

        if obj_new > obj {
            // restart momentum from the current iterate
            momentum_k = 0;
            w_prev = w.clone();
            b_prev = b.clone();
        } else {
            w_prev = std::mem::replace(&mut w, w_new);
            b_prev = std::mem::replace(&mut b, b_new);
            obj = obj_new;
            momentum_k += 1;
        }
        let (_, gw, gb) = probe_objective(x, y, &w, &b, c);
        grad_norm = gw.iter().chain(gb.iter()).map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < tol {
            break;
        }
        step *= 1.25;
    }

    Ok(ProbeFit {
        model: LogisticRegression {
            weights: w,
            bias: b,
            active,
        },
        objective: obj,
        grad_norm,
        iterations,
    })
}

impl LogisticRegression {
    pub fn predict(&self, x: &Array2<f64>) -> Vec<usize> {
        let logits = x.dot(&self.weights) + &self.bias;
        logits
            .rows()
            .into_iter()
            .map(|row| {
                let masked: Vec<f64> = row
                    .iter()
                    .zip(&self.active)
                    .map(|(&v, &a)| if a { v } else { f64::NEG_INFINITY })
                    .collect();
                argmax(&masked)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub c: f64,
    pub val_f1: f64,
    pub test_f1: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreezeResult {
    pub test_f1: f64,
    pub val_f1: f64,
    pub selected_c: f64,
    pub grid: Vec<GridPoint>,
}

fn rows(x: &Array2<f64>, ids: &[usize]) -> Array2<f64> {
    x.select(Axis(0), ids)
}

/// Labeled ids of each split part.
fn labeled_parts(bundle: &GraphBundle, split: &Split) -> Result<[Vec<usize>; 3]> {
    let parts = [
        bundle.labeled_subset(&split.train_ids),
        bundle.labeled_subset(&split.val_ids),
        bundle.labeled_subset(&split.test_ids),
    ];
    for (name, ids) in ["train", "val", "test"].iter().zip(&parts) {
        if ids.is_empty() {
            return Err(Error::Invalid(format!(
                "{} has no labeled {name} nodes",
                bundle.name
            )));
        }
    }
    Ok(parts)
}

fn warn_unseen_classes(bundle: &GraphBundle, train: &[usize], other: &[usize]) {
    let mut seen = vec![false; bundle.num_classes];
    for &y in train {
        seen[y] = true;
    }
    let missing: Vec<usize> = other.iter().copied().filter(|&y| !seen[y]).collect();
    if !missing.is_empty() {
        log::warn!(
            "{}: {} val/test nodes carry classes absent from train",
            bundle.name,
            missing.len()
        );
    }
}

/// Linear probe on frozen eval-mode embeddings.
pub fn freeze_eval(
    encoder: &GcnEncoder,
    bundle: &GraphBundle,
    split: &Split,
    cfg: &EvalConfig,
) -> Result<FreezeResult> {
    let adj = normalize_adjacency(bundle);
    let h = encoder.embed(&adj, &bundle.features)?;
    probe_embeddings(&h, bundle, split, cfg)
}

/// Grid search over `cfg.c_grid` on precomputed embeddings.
pub fn probe_embeddings(
    h: &Array2<f64>,
    bundle: &GraphBundle,
    split: &Split,
    cfg: &EvalConfig,
) -> Result<FreezeResult> {
    cfg.validate()?;
    let [train, val, test] = labeled_parts(bundle, split)?;
    let (y_train, y_val, y_test) = (
        gather_labels(bundle, &train)?,
        gather_labels(bundle, &val)?,
        gather_labels(bundle, &test)?,
    );
    warn_unseen_classes(bundle, &y_train, &[y_val.clone(), y_test.clone()].concat());
    let (x_train, x_val, x_test) = (rows(h, &train), rows(h, &val), rows(h, &test));

    let mut grid = Vec::with_capacity(cfg.c_grid.len());
    for &c in &cfg.c_grid {
        let fit = fit_logistic(
            &x_train,
            &y_train,
            bundle.num_classes,
            c,
            cfg.probe_max_iter,
            cfg.probe_tol,
        )?;
        grid.push(GridPoint {
            c,
            val_f1: f1_micro(&fit.model.predict(&x_val), &y_val),
            test_f1: f1_micro(&fit.model.predict(&x_test), &y_test),
            iterations: fit.iterations,
        });
    }
    let best = grid
        .iter()
        .fold(&grid[0], |best, g| if g.val_f1 > best.val_f1 { g } else { best });
    Ok(FreezeResult {
        test_f1: best.test_f1,
        val_f1: best.val_f1,
        selected_c: best.c,
        grid: grid.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneResult {
    pub test_f1: f64,
    pub val_f1: f64,
    /// Number of optimizer steps of the selected snapshot.
    pub selected_step: usize,
}

/// Scores `head ∘ encoder` in eval mode on the given ids.
pub fn score(
    encoder: &GcnEncoder,
    head: &Mlp,
    adj: &crate::graph::NormalizedAdjacency,
    bundle: &GraphBundle,
    ids: &[usize],
) -> Result<f64> {
    let logits = head.predict(&encoder.embed(adj, &bundle.features)?)?;
    let pred = predict_labels(&logits.select(Axis(0), ids));
    Ok(f1_micro(&pred, &gather_labels(bundle, ids)?))
}

/// Finetunes a local copy of `encoder` with a fresh `d → hidden → m` head.
/// Snapshots after 0..=`cfg.finetune_steps` updates are compared on
/// validation F1; the shared encoder is never touched.
pub fn finetune_eval(
    encoder: &GcnEncoder,
    bundle: &GraphBundle,
    split: &Split,
    cfg: &EvalConfig,
    rng: &mut impl Rng,
) -> Result<FinetuneResult> {
    let [train, val, test] = labeled_parts(bundle, split)?;
    let adj = normalize_adjacency(bundle);
    let mut enc = encoder.clone();
    let mut head = Mlp::init(
        &[enc.out_dim(), cfg.head_hidden, bundle.num_classes.max(1)],
        rng,
    );
    let mut opt = AdamW::new(AdamWConfig::new(cfg.finetune_lr, cfg.finetune_wd));

    let mut best = FinetuneResult {
        test_f1: score(&enc, &head, &adj, bundle, &test)?,
        val_f1: score(&enc, &head, &adj, bundle, &val)?,
        selected_step: 0,
    };
    for step in 1..=cfg.finetune_steps {
        let out = ce_loss_and_grads(&head, &enc, &adj, bundle, &train, true, Reduction::Mean)?;
        let mut grads = out.encoder_grads.expect("encoder trained").prefixed("encoder");
        grads.extend(out.head_grads.prefixed("head"));
        let mut params: ParamVector = enc.trainable_params().prefixed("encoder");
        params.extend(head.to_params().prefixed("head"));
        opt.step(&mut params, &grads)?;
        enc.load(&params.strip_prefix("encoder"))?;
        head.load(&params.strip_prefix("head"))?;
        enc.absorb_batch_stats(&out.encoder_cache);

        let val_f1 = score(&enc, &head, &adj, bundle, &val)?;
        if val_f1 > best.val_f1 {
            best = FinetuneResult {
                test_f1: score(&enc, &head, &adj, bundle, &test)?,
                val_f1,
                selected_step: step,
            };
        }
    }
    Ok(best)
}

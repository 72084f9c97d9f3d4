//! Softmax task head and cross-entropy over labeled nodes.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::graph::{GraphBundle, NormalizedAdjacency};
use crate::nn::{GcnCache, GcnEncoder, Mlp, Mode, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Debug, Clone)]
pub struct CrossEntropy {
    pub loss: f64,
    /// Gradient w.r.t. the logits of every row (zero outside `ids`).
    pub grad_logits: Array2<f64>,
    pub correct: usize,
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Cross-entropy of `logits[ids]` against `labels`, computed as
/// `logsumexp(row) - row[label]` on shifted logits.
pub fn cross_entropy(
    logits: &Array2<f64>,
    ids: &[usize],
    labels: &[usize],
    reduction: Reduction,
) -> Result<CrossEntropy> {
    if ids.is_empty() {
        return Err(Error::Invalid("cross-entropy over an empty id set".into()));
    }
    assert_eq!(ids.len(), labels.len());
    let m = logits.ncols();
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / ids.len() as f64,
    };
    let mut grad = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    let mut correct = 0;
    for (&i, &y) in ids.iter().zip(labels) {
        if y >= m {
            return Err(Error::LabelOutOfRange {
                node: i,
                label: y,
                num_classes: m,
            });
        }
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let shifted = row.mapv(|v| v - max);
        let lse = shifted.mapv(f64::exp).sum().ln();
        loss += lse - shifted[y];
        if argmax(row) == y {
            correct += 1;
        }
        let mut g = grad.row_mut(i);
        for (k, &s) in shifted.iter().enumerate() {
            g[k] = scale * ((s - lse).exp() - if k == y { 1.0 } else { 0.0 });
        }
    }
    Ok(CrossEntropy {
        loss: scale * loss,
        grad_logits: grad,
        correct,
    })
}

/// Index of the first maximum.
pub fn argmax<'a>(row: impl IntoIterator<Item = &'a f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, &v) in row.into_iter().enumerate() {
        if v > best.1 {
            best = (k, v);
        }
    }
    best.0
}

pub fn predict_labels(logits: &Array2<f64>) -> Vec<usize> {
    logits
        .axis_iter(Axis(0))
        .map(argmax)
        .collect()
}

/// Labels for `ids`, failing on unlabeled nodes.
pub fn gather_labels(bundle: &GraphBundle, ids: &[usize]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|&i| {
            bundle
                .label(i)
                .ok_or_else(|| Error::Invalid(format!("node {i} of {} is unlabeled", bundle.name)))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SupervisedStep {
    pub loss: f64,
    pub train_accuracy: f64,
    pub head_grads: ParamVector,
    /// Present only when the encoder is trained.
    pub encoder_grads: Option<ParamVector>,
    pub encoder_cache: GcnCache,
}

/// Cross-entropy of `head ∘ encoder` on the labeled `ids`.
///
/// With `train_encoder` the encoder runs in train mode and receives
/// gradients; otherwise it is frozen and evaluated with running statistics.
#[allow(clippy::too_many_arguments)]
pub fn ce_loss_and_grads(
    head: &Mlp,
    encoder: &GcnEncoder,
    adj: &NormalizedAdjacency,
    bundle: &GraphBundle,
    ids: &[usize],
    train_encoder: bool,
    reduction: Reduction,
) -> Result<SupervisedStep> {
    let labels = gather_labels(bundle, ids)?;
    let mode = if train_encoder { Mode::Train } else { Mode::Eval };
    let (h, encoder_cache) = encoder.forward(adj, &bundle.features, mode)?;
    let (logits, head_cache) = head.forward(&h)?;
    let ce = cross_entropy(&logits, ids, &labels, reduction)?;
    let head_back = head.backward(&head_cache, &ce.grad_logits)?;
    let encoder_grads = if train_encoder {
        Some(encoder.backward(adj, &encoder_cache, &head_back.input)?.params)
    } else {
        None
    };
    Ok(SupervisedStep {
        loss: ce.loss,
        train_accuracy: ce.correct as f64 / ids.len() as f64,
        head_grads: head_back.params,
        encoder_grads,
        encoder_cache,
    })
}

//! Server/client round loop with FedAvg aggregation.
//!
//! Protocols:
//! - `fed_sup`: shared encoder + local task head, cross-entropy only.
//! - `fed_self_lp1`: shared online encoder + predictor, bootstrap loss only.
//! - `fed_self_lp2`: `CE · 1{labels} + λ_c · bootstrap` with a local head.
//!
//! All cross-client interaction goes through exported [`ParamVector`]s.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::augment::AugmentPair;
use crate::bgrl::{BgrlState, DEFAULT_EMA_BASE, ONLINE, PREDICTOR};
use crate::error::{Error, Result};
use crate::graph::{normalize_adjacency, GraphBundle, NormalizedAdjacency};
use crate::nn::{cosine_lr, AdamW, AdamWConfig, GcnEncoder, Mlp, ParamVector};
use crate::seed::{self, purpose};
use crate::supervised::{ce_loss_and_grads, Reduction};

pub const ENCODER: &str = "encoder";
pub const HEAD: &str = "head";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    FedSup,
    FedSelfLp1,
    FedSelfLp2,
}

impl Protocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            Protocol::FedSup => "fed_sup",
            Protocol::FedSelfLp1 => "fed_self_lp1",
            Protocol::FedSelfLp2 => "fed_self_lp2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fed_sup" => Ok(Protocol::FedSup),
            "fed_self_lp1" => Ok(Protocol::FedSelfLp1),
            "fed_self_lp2" => Ok(Protocol::FedSelfLp2),
            _ => Err(Error::Config(format!("unknown protocol {s:?}"))),
        }
    }

    pub fn is_self_supervised(&self) -> bool {
        !matches!(self, Protocol::FedSup)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// `n_c` = node count for self-supervised protocols, labeled training
    /// node count for `fed_sup`.
    ByDataSize,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Linear warmup over `warmup_rounds`, cosine decay to 0 at `rounds`.
    Cosine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Encoder hidden and output dimension.
    pub hidden: usize,
    pub predictor_hidden: usize,
    /// Hidden widths of the local task head used during federation
    /// (empty = linear head).
    pub head_hidden: Vec<usize>,
    pub ema_base: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            predictor_hidden: crate::bgrl::DEFAULT_PREDICTOR_HIDDEN,
            head_hidden: Vec::new(),
            ema_base: DEFAULT_EMA_BASE,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    pub protocol: Protocol,
    pub rounds: usize,
    pub warmup_rounds: usize,
    pub local_epochs: usize,
    pub weighting: Weighting,
    /// `λ_c` per client; a single value applies to every client.
    pub lambda: Vec<f64>,
    pub participation: f64,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    pub lr_schedule: LrSchedule,
    pub model: ModelConfig,
    pub aug: AugmentPair,
    pub ckpt_every: Option<usize>,
    pub ckpt_dir: Option<PathBuf>,
}

impl FedConfig {
    /// `num_clients` is one past the largest client id.
    pub fn validate(&self, num_clients: usize) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config("local_epochs must be at least 1".into()));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(Error::Config(format!(
                "participation {} outside (0, 1]",
                self.participation
            )));
        }
        if self.lambda.iter().any(|&l| !(l >= 0.0)) {
            return Err(Error::Config("lambda values must be >= 0".into()));
        }
        if !(self.lambda.len() == 1 || self.lambda.len() >= num_clients) {
            return Err(Error::Config(format!(
                "{} lambda values for {num_clients} clients",
                self.lambda.len()
            )));
        }
        self.aug.validate()
    }

    pub fn lambda_for(&self, client: usize) -> f64 {
        if self.lambda.len() == 1 {
            self.lambda[0]
        } else {
            self.lambda[client]
        }
    }

    pub fn lr_at(&self, round: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.optimizer.lr,
            LrSchedule::Cosine => {
                cosine_lr(self.optimizer.lr, round, self.rounds, self.warmup_rounds)
            }
        }
    }
}

/// One client's private data and local training state.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub bundle: GraphBundle,
    pub adj: NormalizedAdjacency,
    /// Labeled training nodes (`V_c^l`).
    pub train_ids: Vec<usize>,
    pub bgrl: Option<BgrlState>,
    /// Encoder for `fed_sup`; self-supervised protocols use `bgrl.online`.
    pub encoder: Option<GcnEncoder>,
    /// Local task head `p_c`, never shared.
    pub head: Option<Mlp>,
    pub optimizer: AdamW,
}

impl ClientState {
    /// Builds a client for `cfg.protocol`. Only labeled ids in `train_ids`
    /// are kept.
    pub fn new(id: usize, bundle: GraphBundle, train_ids: &[usize], cfg: &FedConfig) -> Result<Self> {
        let train_ids = bundle.labeled_subset(train_ids);
        let adj = normalize_adjacency(&bundle);
        let f = bundle.feature_dim();
        let d = cfg.model.hidden;
        let mut encoder_rng = seed::stream(cfg.seed, &[purpose::ENCODER_INIT]);
        let mut predictor_rng = seed::stream(cfg.seed, &[purpose::PREDICTOR_INIT]);
        let mut head_rng = seed::stream(cfg.seed, &[purpose::HEAD_INIT, id as u64]);

        let wants_head = match cfg.protocol {
            Protocol::FedSup => {
                if train_ids.is_empty() {
                    return Err(Error::Invalid(format!(
                        "fed_sup client {id} ({}) has no labeled training nodes",
                        bundle.name
                    )));
                }
                true
            }
            Protocol::FedSelfLp1 => false,
            Protocol::FedSelfLp2 => !train_ids.is_empty(),
        };
        let head = wants_head.then(|| {
            let mut dims = vec![d];
            dims.extend(&cfg.model.head_hidden);
            dims.push(bundle.num_classes.max(1));
            Mlp::init(&dims, &mut head_rng)
        });

        let (bgrl, encoder) = if cfg.protocol.is_self_supervised() {
            let online = GcnEncoder::init(f, d, &mut encoder_rng);
            let predictor = Mlp::init(&[d, cfg.model.predictor_hidden, d], &mut predictor_rng);
            let total = cfg.rounds * cfg.local_epochs;
            (
                Some(BgrlState::new(online, predictor, cfg.model.ema_base, total)?),
                None,
            )
        } else {
            (None, Some(GcnEncoder::init(f, d, &mut encoder_rng)))
        };

        Ok(Self {
            id,
            bundle,
            adj,
            train_ids,
            bgrl,
            encoder,
            head,
            optimizer: AdamW::new(cfg.optimizer),
        })
    }

    pub fn encoder(&self) -> &GcnEncoder {
        match (&self.bgrl, &self.encoder) {
            (Some(b), _) => &b.online,
            (None, Some(e)) => e,
            (None, None) => unreachable!("client has no encoder"),
        }
    }

    /// Aggregation weight `n_c`.
    pub fn data_size(&self, protocol: Protocol) -> usize {
        match protocol {
            Protocol::FedSup => self.train_ids.len(),
            _ => self.bundle.num_nodes(),
        }
    }

    /// Parameters this client exports to the server.
    pub fn shared_params(&self) -> ParamVector {
        match &self.bgrl {
            Some(b) => b.shared_params(),
            None => self.encoder().to_params().prefixed(ENCODER),
        }
    }

    pub fn load_shared(&mut self, pv: &ParamVector) -> Result<()> {
        match &mut self.bgrl {
            Some(b) => b.load_shared(pv),
            None => {
                let enc = self.encoder.as_mut().expect("supervised client has an encoder");
                pv.check_same_schema(&enc.to_params().prefixed(ENCODER))?;
                enc.load(&pv.strip_prefix(ENCODER))
            }
        }
    }

    fn trainable(&self) -> ParamVector {
        let mut pv = match &self.bgrl {
            Some(b) => b.trainable_shared(),
            None => self.encoder().trainable_params().prefixed(ENCODER),
        };
        if let Some(h) = &self.head {
            pv.extend(h.to_params().prefixed(HEAD));
        }
        pv
    }

    fn load_trainable(&mut self, pv: &ParamVector) -> Result<()> {
        match &mut self.bgrl {
            Some(b) => {
                b.online.load(&pv.strip_prefix(ONLINE))?;
                b.predictor.load(&pv.strip_prefix(PREDICTOR))?;
            }
            None => self
                .encoder
                .as_mut()
                .expect("supervised client has an encoder")
                .load(&pv.strip_prefix(ENCODER))?,
        }
        if let Some(h) = &mut self.head {
            h.load(&pv.strip_prefix(HEAD))?;
        }
        Ok(())
    }
}

/// Per-client outcome of one local update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalMetrics {
    pub client: usize,
    pub loss: f64,
    pub ce_loss: Option<f64>,
    pub ssl_loss: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub lr: f64,
    pub delta_ema: Option<f64>,
    pub zero_norm_rows: usize,
    pub online_norm: f64,
    pub target_norm: Option<f64>,
    pub n_c: usize,
    pub steps: usize,
    /// Wall-clock time; excluded from any determinism comparison.
    pub wall_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundLog {
    pub round: usize,
    pub participants: Vec<usize>,
    pub weights: Vec<f64>,
    pub clients: Vec<LocalMetrics>,
    pub shared_norm: f64,
}

/// Runs `cfg.local_epochs` full-batch steps of the protocol's objective
/// starting from `shared`, then exports the shared parameters.
pub fn local_update(
    client: &mut ClientState,
    shared: &ParamVector,
    cfg: &FedConfig,
    round: usize,
) -> Result<(ParamVector, LocalMetrics)> {
    let started = Instant::now();
    client.load_shared(shared)?;
    let lr = cfg.lr_at(round);
    let lambda = cfg.lambda_for(client.id);
    let mut metrics = LocalMetrics {
        client: client.id,
        loss: 0.0,
        ce_loss: None,
        ssl_loss: None,
        train_accuracy: None,
        lr,
        delta_ema: None,
        zero_norm_rows: 0,
        online_norm: 0.0,
        target_norm: None,
        n_c: client.data_size(cfg.protocol),
        steps: 0,
        wall_ms: 0,
    };

    for epoch in 0..cfg.local_epochs {
        let use_ce = client.head.is_some();
        let use_ssl = match cfg.protocol {
            Protocol::FedSup => false,
            Protocol::FedSelfLp1 => true,
            Protocol::FedSelfLp2 => true,
        };
        let ssl_weight = match cfg.protocol {
            Protocol::FedSelfLp1 => 1.0,
            _ => lambda,
        };

        let mut grads: Option<ParamVector> = None;
        let mut loss = 0.0;
        let mut ce_cache = None;

        if use_ce {
            let head = client.head.as_ref().expect("checked");
            let step = ce_loss_and_grads(
                head,
                client.encoder(),
                &client.adj,
                &client.bundle,
                &client.train_ids,
                true,
                Reduction::Mean,
            )?;
            let enc_prefix = if client.bgrl.is_some() { ONLINE } else { ENCODER };
            let mut g = step
                .encoder_grads
                .expect("encoder is trained")
                .prefixed(enc_prefix);
            if let Some(b) = &client.bgrl {
                g.extend(b.predictor.to_params().zeros_like().prefixed(PREDICTOR));
            }
            g.extend(step.head_grads.prefixed(HEAD));
            loss += step.loss;
            metrics.ce_loss = Some(step.loss);
            metrics.train_accuracy = Some(step.train_accuracy);
            ce_cache = Some(step.encoder_cache);
            grads = Some(g);
        }

        let mut ssl_cache = None;
        if use_ssl {
            let b = client.bgrl.as_ref().expect("self-supervised client");
            let tags = |view: u64| {
                [
                    purpose::AUGMENT,
                    client.id as u64,
                    round as u64,
                    epoch as u64,
                    view,
                ]
            };
            let mut rng1 = seed::stream(cfg.seed, &tags(1));
            let mut rng2 = seed::stream(cfg.seed, &tags(2));
            let step = b.loss_and_grads(&client.bundle, &cfg.aug, &mut rng1, &mut rng2)?;
            loss += ssl_weight * step.loss;
            metrics.ssl_loss = Some(step.loss);
            metrics.zero_norm_rows = step.zero_norm_rows;
            let mut g = step.grads;
            if let Some(h) = &client.head {
                g.extend(h.to_params().zeros_like().prefixed(HEAD));
            }
            match &mut grads {
                Some(acc) => acc.axpy(ssl_weight, &g)?,
                None => {
                    if ssl_weight != 1.0 {
                        g.scale(ssl_weight);
                    }
                    grads = Some(g);
                }
            }
            ssl_cache = Some(step.online_cache);
        }

        let grads = grads.ok_or_else(|| {
            Error::Invalid(format!("client {} has no objective to optimize", client.id))
        })?;
        let mut params = client.trainable();
        client.optimizer.step_with_lr(&mut params, &grads, lr)?;
        client.load_trainable(&params)?;

        // running statistics follow the clean-graph pass when there is one
        match (ce_cache, ssl_cache, &mut client.bgrl, &mut client.encoder) {
            (Some(c), _, Some(b), _) => b.online.absorb_batch_stats(&c),
            (Some(c), _, None, Some(e)) => e.absorb_batch_stats(&c),
            (None, Some(c), Some(b), _) => b.online.absorb_batch_stats(&c),
            _ => {}
        }

        if let Some(b) = &mut client.bgrl {
            b.step = round * cfg.local_epochs + epoch;
            metrics.delta_ema = Some(b.ema_update());
        }
        metrics.loss = loss;
        metrics.steps += 1;
    }

    metrics.online_norm = client.encoder().trainable_params().norm();
    metrics.target_norm = client.bgrl.as_ref().map(|b| b.target.trainable_params().norm());
    metrics.wall_ms = started.elapsed().as_millis();
    Ok((client.shared_params(), metrics))
}

/// Weighted mean `Σ_c (n_c / n) p_c`, `n = Σ_c n_c`.
///
/// Each element is computed as `r + Σ_c (n_c/n)(p_c - r)` with `r` the
/// smallest contribution, summing terms in sorted order. The result is then
/// independent of client order, and identical inputs aggregate to
/// themselves exactly.
pub fn fedavg(updates: &[(&ParamVector, f64)]) -> Result<ParamVector> {
    let Some(((first, _), rest)) = updates.split_first() else {
        return Err(Error::Invalid("fedavg needs at least one update".into()));
    };
    for (p, _) in rest {
        first.check_same_schema(p)?;
    }
    if updates.iter().any(|(_, w)| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Invalid("fedavg weights must be finite and >= 0".into()));
    }
    let mut weights: Vec<f64> = updates.iter().map(|(_, w)| *w).collect();
    let total = sorted_sum(&mut weights.clone());
    if total <= 0.0 {
        return Err(Error::Invalid("fedavg weights are all zero".into()));
    }
    weights.iter_mut().for_each(|w| *w /= total);

    let mut out = (*first).clone();
    let mut terms = Vec::with_capacity(updates.len());
    for (k, array) in out.iter_mut().enumerate() {
        let sources: Vec<&[f64]> = updates
            .iter()
            .map(|(p, _)| p.iter().nth(k).expect("schema checked").data.as_slice())
            .collect();
        for (i, slot) in array.data.iter_mut().enumerate() {
            let reference = sources
                .iter()
                .map(|s| s[i])
                .fold(f64::INFINITY, f64::min);
            terms.clear();
            terms.extend(
                sources
                    .iter()
                    .zip(&weights)
                    .map(|(s, w)| w * (s[i] - reference)),
            );
            *slot = reference + sorted_sum(&mut terms);
        }
    }
    Ok(out)
}

fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().fold(0.0, |acc, v| acc + v)
}

/// Positions of the clients taking part in `round`, ascending.
pub fn participants(num_clients: usize, cfg: &FedConfig, round: usize) -> Vec<usize> {
    if cfg.participation >= 1.0 {
        return (0..num_clients).collect();
    }
    let k = ((num_clients as f64 * cfg.participation).round() as usize).clamp(1, num_clients);
    let mut rng = seed::stream(cfg.seed, &[purpose::PARTICIPATION, round as u64]);
    let mut chosen = index::sample(&mut rng, num_clients, k).into_vec();
    chosen.sort_unstable();
    chosen
}

/// Initial global parameters, drawn from the same streams clients use.
pub fn initial_shared(clients: &[ClientState]) -> Result<ParamVector> {
    let first = clients
        .first()
        .ok_or_else(|| Error::Invalid("federation needs at least one client".into()))?;
    Ok(first.shared_params())
}

#[derive(Debug, Clone)]
pub struct FedOutcome {
    pub shared: ParamVector,
    pub logs: Vec<RoundLog>,
}

pub fn run_federation(clients: &mut [ClientState], cfg: &FedConfig) -> Result<FedOutcome> {
    run_federation_with(clients, cfg, |_, _, _| Ok(()))
}

/// Round loop. `observe` runs after every aggregation with the round log,
/// the new global parameters and the clients.
pub fn run_federation_with<F>(
    clients: &mut [ClientState],
    cfg: &FedConfig,
    mut observe: F,
) -> Result<FedOutcome>
where
    F: FnMut(&RoundLog, &ParamVector, &[ClientState]) -> Result<()>,
{
    cfg.validate(clients.iter().map(|c| c.id + 1).max().unwrap_or(0))?;
    let mut shared = initial_shared(clients)?;
    let schema = shared.schema();
    if schema.iter().any(|(n, _)| n.starts_with("target")) {
        return Err(Error::Schema("target encoder leaked into the shared schema".into()));
    }
    let mut logs = Vec::with_capacity(cfg.rounds);

    for round in 0..cfg.rounds {
        let chosen = participants(clients.len(), cfg, round);
        let results: Vec<Result<(ParamVector, LocalMetrics)>> = clients
            .par_iter_mut()
            .enumerate()
            .filter(|(i, _)| chosen.binary_search(i).is_ok())
            .map(|(_, c)| {
                local_update(c, &shared, cfg, round).map_err(|e| Error::Round {
                    round,
                    client: c.id,
                    source: Box::new(e),
                })
            })
            .collect();
        let results: Vec<(ParamVector, LocalMetrics)> = results.into_iter().collect::<Result<_>>()?;

        for (pv, m) in &results {
            if pv.schema() != schema {
                return Err(Error::Round {
                    round,
                    client: m.client,
                    source: Box::new(Error::Schema("exported schema changed".into())),
                });
            }
        }

        let weights: Vec<f64> = results
            .iter()
            .map(|(_, m)| match cfg.weighting {
                Weighting::ByDataSize => m.n_c as f64,
                Weighting::Uniform => 1.0,
            })
            .collect();
        let updates: Vec<(&ParamVector, f64)> = results
            .iter()
            .zip(&weights)
            .map(|((p, _), &w)| (p, w))
            .collect();
        shared = fedavg(&updates)?;

        let log = RoundLog {
            round,
            participants: chosen,
            weights,
            clients: results.into_iter().map(|(_, m)| m).collect(),
            shared_norm: shared.norm(),
        };
        observe(&log, &shared, clients)?;

        if let (Some(every), Some(dir)) = (cfg.ckpt_every, &cfg.ckpt_dir) {
            if every > 0 && (round + 1) % every == 0 {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("shared_round_{:05}.ckpt", round + 1));
                shared.write_checkpoint(std::io::BufWriter::new(std::fs::File::create(path)?))?;
            }
        }
        logs.push(log);
    }

    // leave every client holding the final global model
    for c in clients.iter_mut() {
        c.load_shared(&shared)?;
    }
    Ok(FedOutcome { shared, logs })
}

#[derive(Debug, Serialize)]
struct RoundRow<'a> {
    round: usize,
    client: usize,
    protocol: &'a str,
    loss: f64,
    lr: f64,
    delta_ema: Option<f64>,
    n_c: usize,
    wall_ms: u128,
}

#[derive(Debug, Serialize)]
struct BgrlRow {
    round: usize,
    client: usize,
    loss: f64,
    delta_ema: f64,
    online_norm: f64,
    target_norm: f64,
    zero_norm_rows: usize,
}

#[derive(Debug, Serialize)]
struct SupRow {
    round: usize,
    client: usize,
    ce_loss: f64,
    train_accuracy: f64,
}

/// Writes the round log CSV (`round, client, protocol, loss, lr,
/// delta_ema, n_c, wall_ms`).
pub fn write_round_csv<W: std::io::Write>(logs: &[RoundLog], protocol: Protocol, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for log in logs {
        for m in &log.clients {
            out.serialize(RoundRow {
                round: log.round,
                client: m.client,
                protocol: protocol.as_str(),
                loss: m.loss,
                lr: m.lr,
                delta_ema: m.delta_ema,
                n_c: m.n_c,
                wall_ms: m.wall_ms,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Bootstrap diagnostics: `round, client, loss, delta_ema, online_norm,
/// target_norm, zero_norm_rows`.
pub fn write_bgrl_csv<W: std::io::Write>(logs: &[RoundLog], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for log in logs {
        for m in &log.clients {
            if let (Some(loss), Some(delta), Some(target_norm)) = (m.ssl_loss, m.delta_ema, m.target_norm) {
                out.serialize(BgrlRow {
                    round: log.round,
                    client: m.client,
                    loss,
                    delta_ema: delta,
                    online_norm: m.online_norm,
                    target_norm,
                    zero_norm_rows: m.zero_norm_rows,
                })?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Supervised diagnostics: `round, client, ce_loss, train_accuracy`.
pub fn write_supervised_csv<W: std::io::Write>(logs: &[RoundLog], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for log in logs {
        for m in &log.clients {
            if let (Some(ce_loss), Some(train_accuracy)) = (m.ce_loss, m.train_accuracy) {
                out.serialize(SupRow {
                    round: log.round,
                    client: m.client,
                    ce_loss,
                    train_accuracy,
                })?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamArray;

    fn scalar(v: f64) -> ParamVector {
        let mut pv = ParamVector::new();
        pv.push(ParamArray::new("x", vec![1], vec![v]));
        pv
    }

    #[test]
    fn weighted_mean_of_scalars() {
        let (a, b) = (scalar(0.0), scalar(4.0));
        let avg = fedavg(&[(&a, 1.0), (&b, 3.0)]).unwrap();
        assert_eq!(avg, scalar(3.0));
    }

    #[test]
    fn single_update_is_identity() {
        let mut pv = scalar(0.1);
        pv.push(ParamArray::new("y", vec![3], vec![-1e-300, 7.0, 1.0 / 3.0]));
        assert_eq!(fedavg(&[(&pv, 17.0)]).unwrap(), pv);
    }

    #[test]
    fn identical_updates_aggregate_to_themselves() {
        let pv = scalar(0.1 + 0.2);
        let avg = fedavg(&[(&pv, 1.0), (&pv, 1.0), (&pv, 1.0)]).unwrap();
        assert_eq!(avg, pv);
    }

    #[test]
    fn rejects_empty_zero_weights_and_schema_mismatch() {
        let a = scalar(1.0);
        assert!(fedavg(&[]).is_err());
        assert!(fedavg(&[(&a, 0.0), (&a, 0.0)]).is_err());
        let mut b = ParamVector::new();
        b.push(ParamArray::new("z", vec![1], vec![1.0]));
        assert!(matches!(fedavg(&[(&a, 1.0), (&b, 1.0)]), Err(Error::Schema(_))));
    }

    #[test]
    fn protocol_names_round_trip() {
        for p in [Protocol::FedSup, Protocol::FedSelfLp1, Protocol::FedSelfLp2] {
            assert_eq!(Protocol::parse(p.as_str()).unwrap(), p);
        }
        assert!(Protocol::parse("fedprox").is_err());
    }
}

//! Bootstrapped self-supervision: an online encoder plus predictor chases an
//! EMA target encoder across two augmented views.
//!
//! Loss: `-(2/N) Σ_i cos(Z1_i, H2_i)` with `Z1 = s(ω(G1))`, `H2 = τ(G2)`.
//! Only ω and s receive gradients; τ moves by EMA.

use ndarray::{Array2, Zip};
use rand::Rng;

use crate::augment::{augment, AugmentPair, View};
use crate::error::{Error, Result};
use crate::graph::GraphBundle;
use crate::nn::{ema_decay, GcnCache, GcnEncoder, Mlp, Mode, ParamVector};

pub const ONLINE: &str = "online";
pub const PREDICTOR: &str = "predictor";
pub const DEFAULT_PREDICTOR_HIDDEN: usize = 512;
pub const DEFAULT_EMA_BASE: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct BgrlState {
    pub online: GcnEncoder,
    pub predictor: Mlp,
    pub target: GcnEncoder,
    pub ema_base: f64,
    pub step: usize,
    pub total_steps: usize,
}

#[derive(Debug, Clone)]
pub struct BgrlStep {
    pub loss: f64,
    /// Gradients named `online.*` and `predictor.*`; nothing for the target.
    pub grads: ParamVector,
    /// Rows whose prediction or target had zero norm; their term is 0.
    pub zero_norm_rows: usize,
    pub online_cache: GcnCache,
}

impl BgrlState {
    /// Target starts as an exact copy of the online encoder.
    pub fn new(online: GcnEncoder, predictor: Mlp, ema_base: f64, total_steps: usize) -> Result<Self> {
        if predictor.in_dim() != online.out_dim() || predictor.out_dim() != online.out_dim() {
            return Err(Error::Shape(format!(
                "predictor {:?} does not map encoder dim {} to itself",
                predictor.dims(),
                online.out_dim()
            )));
        }
        Ok(Self {
            target: online.clone(),
            online,
            predictor,
            ema_base,
            step: 0,
            total_steps,
        })
    }

    pub fn init(
        in_dim: usize,
        hidden: usize,
        predictor_hidden: usize,
        total_steps: usize,
        encoder_rng: &mut impl Rng,
        predictor_rng: &mut impl Rng,
    ) -> Self {
        let online = GcnEncoder::init(in_dim, hidden, encoder_rng);
        let predictor = Mlp::init(&[hidden, predictor_hidden, hidden], predictor_rng);
        Self::new(online, predictor, DEFAULT_EMA_BASE, total_steps).expect("dims chain")
    }

    /// Draws both views and evaluates the loss.
    pub fn loss_and_grads(
        &self,
        bundle: &GraphBundle,
        aug: &AugmentPair,
        rng1: &mut impl Rng,
        rng2: &mut impl Rng,
    ) -> Result<BgrlStep> {
        let v1 = augment(bundle, &aug.view1, rng1);
        let v2 = augment(bundle, &aug.view2, rng2);
        self.loss_and_grads_on_views(&v1, &v2)
    }

    pub fn loss_and_grads_on_views(&self, view1: &View, view2: &View) -> Result<BgrlStep> {
        let (h1, online_cache) = self.online.forward(&view1.adj, &view1.features, Mode::Train)?;
        let (z1, pred_cache) = self.predictor.forward(&h1)?;
        let (h2, _) = self.target.forward(&view2.adj, &view2.features, Mode::Train)?;

        let cos = bootstrap_loss(&z1, &h2);
        let pred = self.predictor.backward(&pred_cache, &cos.grad_z)?;
        let enc = self.online.backward(&view1.adj, &online_cache, &pred.input)?;

        let mut grads = enc.params.prefixed(ONLINE);
        grads.extend(pred.params.prefixed(PREDICTOR));
        Ok(BgrlStep {
            loss: cos.loss,
            grads,
            zero_norm_rows: cos.zero_norm_rows,
            online_cache,
        })
    }

    pub fn current_decay(&self) -> f64 {
        ema_decay(self.ema_base, self.step, self.total_steps)
    }

    /// `τ <- δ τ + (1 - δ) ω` over trainable arrays, then advances the step.
    /// Returns the δ used.
    pub fn ema_update(&mut self) -> f64 {
        let delta = self.current_decay();
        let online = self.online.trainable_params();
        let mut target = self.target.trainable_params();
        for (t, o) in target.iter_mut().zip(online.iter()) {
            for (tv, ov) in t.data.iter_mut().zip(&o.data) {
                *tv = delta * *tv + (1.0 - delta) * ov;
            }
        }
        self.target
            .load(&target)
            .expect("online and target share a schema");
        self.step += 1;
        delta
    }

    /// Exactly the online encoder and the predictor; the target stays local.
    pub fn shared_params(&self) -> ParamVector {
        let mut pv = self.online.to_params().prefixed(ONLINE);
        pv.extend(self.predictor.to_params().prefixed(PREDICTOR));
        pv
    }

    pub fn shared_schema(&self) -> Vec<(String, Vec<usize>)> {
        self.shared_params().schema()
    }

    pub fn load_shared(&mut self, pv: &ParamVector) -> Result<()> {
        pv.check_same_schema(&self.shared_params())?;
        self.online.load(&pv.strip_prefix(ONLINE))?;
        self.predictor.load(&pv.strip_prefix(PREDICTOR))?;
        Ok(())
    }

    /// Trainable subset of [`shared_params`](Self::shared_params), the
    /// arrays an optimizer steps.
    pub fn trainable_shared(&self) -> ParamVector {
        let mut pv = self.online.trainable_params().prefixed(ONLINE);
        pv.extend(self.predictor.to_params().prefixed(PREDICTOR));
        pv
    }
}

#[derive(Debug, Clone)]
pub struct CosineLoss {
    pub loss: f64,
    pub grad_z: Array2<f64>,
    pub zero_norm_rows: usize,
}

/// `-(2/N) Σ_i <z_i, h_i> / (|z_i| |h_i|)` and its gradient in `z`.
pub fn bootstrap_loss(z: &Array2<f64>, h: &Array2<f64>) -> CosineLoss {
    assert_eq!(z.dim(), h.dim(), "prediction/target shapes differ");
    let n = z.nrows().max(1) as f64;
    let scale = -2.0 / n;
    let mut grad_z = Array2::zeros(z.dim());
    let mut total = 0.0;
    let mut zero_norm_rows = 0;
    Zip::from(grad_z.rows_mut())
        .and(z.rows())
        .and(h.rows())
        .for_each(|mut g, zi, hi| {
            let (zz, hh) = (zi.dot(&zi), hi.dot(&hi));
            if zz == 0.0 || hh == 0.0 {
                zero_norm_rows += 1;
                return;
            }
            // sqrt(zz * hh) is exactly zz when z == h, so identical rows give cos = 1
            let norms = (zz * hh).sqrt();
            let cos = zi.dot(&hi) / norms;
            total += cos;
            Zip::from(&mut g).and(&zi).and(&hi).for_each(|g, &zv, &hv| {
                *g = scale * (hv / norms - cos * zv / zz);
            });
        });
    CosineLoss {
        loss: -2.0 * total / n,
        grad_z,
        zero_norm_rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use ndarray::array;

    #[test]
    fn identical_rows_give_minus_two() {
        let z = array![[1.0, 2.0], [-0.5, 3.0], [4.0, 0.1]];
        let out = bootstrap_loss(&z, &z);
        assert_eq!(out.loss, -2.0);
    }

    #[test]
    fn orthogonal_rows_give_zero() {
        let z = array![[1.0, 0.0], [0.0, 2.0]];
        let h = array![[0.0, 5.0], [-3.0, 0.0]];
        assert_eq!(bootstrap_loss(&z, &h).loss, 0.0);
    }

    #[test]
    fn zero_rows_are_flagged_and_skipped() {
        let z = array![[0.0, 0.0], [1.0, 1.0]];
        let h = array![[1.0, 0.0], [1.0, 1.0]];
        let out = bootstrap_loss(&z, &h);
        assert_eq!(out.zero_norm_rows, 1);
        assert!((out.loss + 1.0).abs() < 1e-15);
        assert!(out.grad_z.row(0).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn ema_endpoints() {
        let mut rng = seed::stream(1, &[]);
        let mut s = BgrlState::init(3, 4, 8, 10, &mut rng.clone(), &mut rng);
        assert_eq!(s.current_decay(), 0.99);
        s.step = 10;
        s.online.w1.fill(5.0);
        let before = s.target.clone();
        assert_eq!(s.ema_update(), 1.0);
        assert_eq!(s.target, before);
    }

    #[test]
    fn zero_base_copies_online() {
        let mut rng = seed::stream(2, &[]);
        let mut s = BgrlState::init(3, 4, 8, 10, &mut rng.clone(), &mut rng);
        s.ema_base = 0.0;
        s.online.w2.mapv_inplace(|v| v * 3.0 + 1.0);
        s.online.bn1.gamma.fill(0.25);
        s.ema_update();
        assert_eq!(s.target.trainable_params(), s.online.trainable_params());
        assert_eq!(s.step, 1);
    }

    #[test]
    fn shared_params_exclude_target() {
        let mut rng = seed::stream(3, &[]);
        let s = BgrlState::init(3, 4, 8, 10, &mut rng.clone(), &mut rng);
        let shared = s.shared_params();
        assert!(shared
            .names()
            .all(|n| n.starts_with("online.") || n.starts_with("predictor.")));
        let mut other = s.clone();
        other.online.w1.fill(0.0);
        other.target.w1.fill(9.0);
        other.load_shared(&shared).unwrap();
        assert_eq!(other.online, s.online);
        assert_ne!(other.target, s.target);
    }
}

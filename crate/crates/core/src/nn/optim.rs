use crate::error::{Error, Result};

use super::params::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamWConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// AdamW with decoupled weight decay:
/// `p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)`.
///
/// Moments are keyed by the gradient schema; parameter arrays that receive
/// no gradient (batch-norm buffers, frozen parts) are left untouched.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Option<ParamVector>,
    v: Option<ParamVector>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            m: None,
            v: None,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update using the configured learning rate.
    pub fn step(&mut self, params: &mut ParamVector, grads: &ParamVector) -> Result<()> {
        let lr = self.config.lr;
        self.step_with_lr(params, grads, lr)
    }

    /// One update with a scheduled learning rate.
    pub fn step_with_lr(
        &mut self,
        params: &mut ParamVector,
        grads: &ParamVector,
        lr: f64,
    ) -> Result<()> {
        for g in grads.iter() {
            let p = params
                .get(&g.name)
                .ok_or_else(|| Error::Schema(format!("gradient for unknown array {}", g.name)))?;
            if p.shape != g.shape {
                return Err(Error::Schema(format!(
                    "{}: parameter {:?} vs gradient {:?}",
                    g.name, p.shape, g.shape
                )));
            }
        }
        if let Some(m) = &self.m {
            m.check_same_schema(grads)?;
        }
        let m = self.m.get_or_insert_with(|| grads.zeros_like());
        let v = self.v.get_or_insert_with(|| grads.zeros_like());

        self.step += 1;
        let AdamWConfig {
            weight_decay: wd,
            beta1: b1,
            beta2: b2,
            eps,
            ..
        } = self.config;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        for ((g, m), v) in grads.iter().zip(m.iter_mut()).zip(v.iter_mut()) {
            let p = params.get_mut(&g.name).expect("checked above");
            for i in 0..g.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
                v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
                let m_hat = m.data[i] / bc1;
                let v_hat = v.data[i] / bc2;
                p.data[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * p.data[i]);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::ParamArray;

    fn scalar(name: &str, v: f64) -> ParamVector {
        let mut pv = ParamVector::new();
        pv.push(ParamArray::new(name, vec![1], vec![v]));
        pv
    }

    #[test]
    fn zero_gradient_without_decay_is_identity() {
        let mut opt = AdamW::new(AdamWConfig::new(0.1, 0.0));
        let mut p = scalar("p", 1.5);
        for _ in 0..5 {
            opt.step(&mut p, &scalar("p", 0.0)).unwrap();
        }
        assert_eq!(p, scalar("p", 1.5));
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        for g in [-3.0, 0.01, 250.0] {
            let mut opt = AdamW::new(AdamWConfig::new(0.05, 0.0));
            let mut p = scalar("p", 0.0);
            opt.step(&mut p, &scalar("p", g)).unwrap();
            let moved = p.get("p").unwrap().data[0];
            assert!((moved + 0.05 * g.signum()).abs() <= 0.05 * 1e-8 / g.abs() + 1e-15);
        }
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        // straight-line scalar Adam as the oracle
        let (mut q, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        let mut opt = AdamW::new(AdamWConfig::new(0.1, 0.0));
        let mut p = scalar("p", 0.0);
        for t in 1..=100 {
            let x = p.get("p").unwrap().data[0];
            opt.step(&mut p, &scalar("p", 2.0 * (x - 3.0))).unwrap();

            let g = 2.0 * (q - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let (mh, vh) = (m / (1.0 - 0.9f64.powi(t)), v / (1.0 - 0.999f64.powi(t)));
            q -= 0.1 * mh / (vh.sqrt() + 1e-8);
            assert!((p.get("p").unwrap().data[0] - q).abs() < 1e-12, "step {t}");
        }
        // the iterate overshoots to ~3.17 at step 50 and settles by ~80
        let x = p.get("p").unwrap().data[0];
        assert!((x - 3.0).abs() < 0.1, "ended at {x}");
    }

    #[test]
    fn decay_shrinks_untouched_direction() {
        let mut opt = AdamW::new(AdamWConfig::new(0.1, 0.5));
        let mut p = scalar("p", 2.0);
        opt.step(&mut p, &scalar("p", 0.0)).unwrap();
        assert!((p.get("p").unwrap().data[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn buffers_without_gradients_are_untouched() {
        let mut p = scalar("w", 1.0);
        p.push(ParamArray::new("running_mean", vec![1], vec![7.0]));
        let mut opt = AdamW::new(AdamWConfig::new(0.1, 0.1));
        opt.step(&mut p, &scalar("w", 1.0)).unwrap();
        assert_eq!(p.get("running_mean").unwrap().data[0], 7.0);
    }

    #[test]
    fn schema_mismatch_is_rejected() {
        let mut opt = AdamW::new(AdamWConfig::new(0.1, 0.0));
        let mut p = scalar("p", 0.0);
        assert!(opt.step(&mut p, &scalar("q", 1.0)).is_err());
        opt.step(&mut p, &scalar("p", 1.0)).unwrap();
        let mut wide = ParamVector::new();
        wide.push(ParamArray::new("p", vec![2], vec![1.0, 1.0]));
        assert!(opt.step(&mut p, &wide).is_err());
    }
}

use ndarray::{Array1, Array2, Axis};

use super::Mode;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-feature batch normalization over all rows of the input.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub mode: Mode,
    pub x_hat: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl BatchNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            momentum: BN_MOMENTUM,
            eps: BN_EPS,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Array2<f64>, mode: Mode) -> (Array2<f64>, BatchNormCache) {
        let (mean, var) = match mode {
            Mode::Train => {
                let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
                let var = x.var_axis(Axis(0), 0.0);
                (mean, var)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let x_hat = (x - &mean) * &inv_std;
        let out = &x_hat * &self.gamma + &self.beta;
        (
            out,
            BatchNormCache {
                mode,
                x_hat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        )
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// estimates (unbiased variance, as usual).
    pub fn absorb(&mut self, cache: &BatchNormCache) {
        if cache.mode != Mode::Train {
            return;
        }
        let n = cache.x_hat.nrows() as f64;
        let unbiased = if n > 1.0 {
            &cache.batch_var * (n / (n - 1.0))
        } else {
            cache.batch_var.clone()
        };
        let m = self.momentum;
        self.running_mean = &self.running_mean * (1.0 - m) + &cache.batch_mean * m;
        self.running_var = &self.running_var * (1.0 - m) + unbiased * m;
    }

    /// Train-mode backward; gradients flow through the batch statistics.
    pub fn backward(&self, cache: &BatchNormCache, grad_out: &Array2<f64>) -> (Array2<f64>, BatchNormGrads) {
        let n = grad_out.nrows() as f64;
        let d_gamma = (grad_out * &cache.x_hat).sum_axis(Axis(0));
        let d_beta = grad_out.sum_axis(Axis(0));
        let d_xhat = grad_out * &self.gamma;
        let grad_in = match cache.mode {
            Mode::Train => {
                let sum_d = d_xhat.sum_axis(Axis(0));
                let sum_dx = (&d_xhat * &cache.x_hat).sum_axis(Axis(0));
                ((&d_xhat * n) - &sum_d - &cache.x_hat * &sum_dx) * &(&cache.inv_std / n)
            }
            Mode::Eval => d_xhat * &cache.inv_std,
        };
        (
            grad_in,
            BatchNormGrads {
                gamma: d_gamma,
                beta: d_beta,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn train_output_is_standardized() {
        let mut rng = seed::stream(3, &[]);
        let x = Array2::from_shape_fn((50, 4), |(_, j)| 30.0 * (j as f64 + 1.0) * rng.gen::<f64>());
        let (_, cache) = BatchNorm::new(4).forward(&x, Mode::Train);
        let mean = cache.x_hat.mean_axis(Axis(0)).unwrap();
        let var = cache.x_hat.var_axis(Axis(0), 0.0);
        for j in 0..4 {
            assert!(mean[j].abs() < 1e-9);
            assert!((var[j] - 1.0).abs() < 1e-6, "var {}", var[j]);
        }
    }

    #[test]
    fn constant_input_maps_to_beta() {
        let mut bn = BatchNorm::new(3);
        bn.beta = Array1::from(vec![0.5, -1.0, 2.0]);
        let (out, _) = bn.forward(&Array2::zeros((4, 3)), Mode::Train);
        for row in out.rows() {
            assert_eq!(row, bn.beta);
        }
    }

    #[test]
    fn absorb_moves_running_stats() {
        let mut bn = BatchNorm::new(1);
        let x = Array2::from_shape_vec((2, 1), vec![1.0, 3.0]).unwrap();
        let (_, cache) = bn.forward(&x, Mode::Train);
        bn.absorb(&cache);
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-15);
        // unbiased variance of {1, 3} is 2
        assert!((bn.running_var[0] - (0.9 + 0.2)).abs() < 1e-15);
        let (_, eval_cache) = bn.forward(&x, Mode::Eval);
        let before = bn.clone();
        bn.absorb(&eval_cache);
        assert_eq!(bn, before);
    }
}

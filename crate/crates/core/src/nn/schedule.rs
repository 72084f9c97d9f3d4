use std::f64::consts::PI;

/// Linear warmup from 0 to `base_lr`, then cosine annealing to 0 at
/// `total_steps`.
pub fn cosine_lr(base_lr: f64, step: usize, total_steps: usize, warmup_steps: usize) -> f64 {
    if step < warmup_steps {
        return base_lr * step as f64 / warmup_steps as f64;
    }
    if step >= total_steps {
        return 0.0;
    }
    let u = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    base_lr * (1.0 + (PI * u).cos()) / 2.0
}

/// Target-network decay, cosine-increased from `base` at `t = 0` to 1 at
/// `t = total`.
pub fn ema_decay(base: f64, t: usize, total: usize) -> f64 {
    if t >= total {
        return 1.0;
    }
    let c = (1.0 - (PI * t as f64 / total as f64).cos()) / 2.0;
    base + (1.0 - base) * c
}

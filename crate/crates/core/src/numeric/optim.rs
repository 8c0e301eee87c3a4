//! Adaptive-moment optimizer and the warmup + cosine learning-rate schedule.

use alloc::string::ToString;
use alloc::vec::Vec;

use super::{Grads, NumericError, ParamStore, Precision};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct TrainConfig {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    /// Weight of the contact-predictor loss in the total loss.
    pub alpha: f64,
    pub precision: Precision,
    pub seed: u64,
    /// Apply point-cloud / color augmentation to training samples.
    pub augment: bool,
    /// Loss-log interval used for best-checkpoint selection.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 3e-4,
            warmup_steps: 2000,
            total_steps: 20_000,
            batch_size: 16,
            alpha: 0.1,
            precision: Precision::F32,
            seed: 0,
            augment: true,
            log_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NumericError> {
        if !(self.alpha >= 0.0) {
            return Err(NumericError::Config("alpha must be non-negative"));
        }
        if self.warmup_steps > self.total_steps {
            return Err(NumericError::Config("warmup_steps exceeds total_steps"));
        }
        if self.batch_size == 0 {
            return Err(NumericError::Config("batch_size must be positive"));
        }
        if !(self.base_lr >= 0.0) {
            return Err(NumericError::Config("base_lr must be non-negative"));
        }
        Ok(())
    }
}

/// Linear warmup to `base_lr`, then half-cosine decay to zero at `total_steps`.
pub fn lr_at_step(cfg: &TrainConfig, step: usize) -> f64 {
    let step = step.min(cfg.total_steps);
    if step < cfg.warmup_steps {
        return cfg.base_lr * step as f64 / cfg.warmup_steps as f64;
    }
    let span = cfg.total_steps - cfg.warmup_steps;
    if span == 0 {
        return cfg.base_lr;
    }
    let progress = (step - cfg.warmup_steps) as f64 / span as f64;
    (cfg.base_lr * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * progress))).max(0.0)
}

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParamStore, cfg: AdamConfig) -> Self {
        let zeros = |i| alloc::vec![0.0; params.by_id(i).numel()];
        Self {
            cfg,
            m: (0..params.len()).map(zeros).collect(),
            v: (0..params.len()).map(zeros).collect(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update. Any non-finite gradient aborts the step
    /// before a single parameter is touched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads, lr: f64) -> Result<(), NumericError> {
        if grads.len() != params.len() {
            return Err(NumericError::Dimension("gradients not aligned with parameters"));
        }
        for id in 0..params.len() {
            if !grads.by_id(id).is_finite() {
                return Err(NumericError::NonFiniteGrad(params.name(id).to_string()));
            }
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - libm::pow(beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(beta2, self.t as f64);
        for id in 0..params.len() {
            let g = grads.by_id(id).data();
            let m = &mut self.m[id];
            let v = &mut self.v[id];
            let p = params.by_id_mut(id).data_mut();
            for i in 0..g.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (libm::sqrt(vhat) + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    fn cfg(warmup: usize, total: usize) -> TrainConfig {
        TrainConfig {
            warmup_steps: warmup,
            total_steps: total,
            ..Default::default()
        }
    }

    #[test]
    fn schedule_endpoints() {
        let c = cfg(2000, 10_000);
        assert_eq!(lr_at_step(&c, 0), 0.0);
        assert!((lr_at_step(&c, 2000) - 3e-4).abs() < 1e-18);
        assert!(lr_at_step(&c, 10_000).abs() < 1e-18);
        let before = lr_at_step(&c, 1999);
        assert!((before - 3e-4).abs() < 3e-4 / 1000.0);
    }

    #[test]
    fn schedule_non_negative_and_bounded() {
        let c = cfg(10, 100);
        for s in 0..=100 {
            let lr = lr_at_step(&c, s);
            assert!((0.0..=3e-4).contains(&lr));
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(cfg(20, 10).validate().is_err());
        let mut c = cfg(1, 10);
        c.alpha = -0.1;
        assert!(c.validate().is_err());
    }

    fn scalar_store(v: f64) -> ParamStore {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::vector(alloc::vec![v])).unwrap();
        p
    }

    #[test]
    fn zero_grads_leave_params() {
        let mut p = scalar_store(0.7);
        let before = p.clone();
        let mut opt = Adam::new(&p, AdamConfig::default());
        let g = Grads::zeros_like(&p);
        opt.step(&mut p, &g, 1e-3).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_is_sign_step() {
        for g in [2.5, -0.003] {
            let mut p = scalar_store(1.0);
            let mut opt = Adam::new(&p, AdamConfig::default());
            let mut grads = Grads::zeros_like(&p);
            grads.by_id_mut(0).data_mut()[0] = g;
            opt.step(&mut p, &grads, 0.01).unwrap();
            let delta = p.by_id(0).data()[0] - 1.0;
            assert!((delta + 0.01 * g.signum()).abs() < 1e-7, "{delta}");
        }
    }

    #[test]
    fn nan_grad_names_parameter() {
        let mut p = scalar_store(1.0);
        let mut opt = Adam::new(&p, AdamConfig::default());
        let mut grads = Grads::zeros_like(&p);
        grads.by_id_mut(0).data_mut()[0] = f64::NAN;
        match opt.step(&mut p, &grads, 0.01) {
            Err(NumericError::NonFiniteGrad(name)) => assert_eq!(name, "w"),
            other => panic!("{other:?}"),
        }
        assert_eq!(p.by_id(0).data()[0], 1.0);
    }
}

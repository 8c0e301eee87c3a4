//! Seeded mini-batch training.

use alloc::string::ToString;
use alloc::vec::Vec;

use super::{diffusion_loss, LossDraws, Policy, PolicyError};
use crate::demo::{augment, AugmentConfig, Dataset, DemoError};
use crate::numeric::{lr_at_step, Adam, AdamConfig, Graph, NumericError, Precision, TrainConfig};
use crate::rng::Rng;

const STREAM_TRAIN: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    /// 1-based optimizer step.
    pub step: usize,
    pub lr: f64,
    pub l_action: f64,
    pub l_predictor: f64,
    pub l_total: f64,
    pub grad_norm: f64,
}

pub struct Trainer {
    pub policy: Policy,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    opt: Adam,
    rng: Rng,
    step: usize,
    order: Vec<usize>,
    cursor: usize,
}

impl Trainer {
    pub fn new(mut policy: Policy, train: TrainConfig) -> Result<Self, PolicyError> {
        train.validate()?;
        if train.precision == Precision::F32 {
            policy.params.round_f32();
        }
        let opt = Adam::new(&policy.params, AdamConfig::default());
        let augment = if train.augment {
            AugmentConfig::default()
        } else {
            AugmentConfig::none()
        };
        Ok(Self {
            policy,
            rng: Rng::derive(train.seed, STREAM_TRAIN),
            train,
            augment,
            opt,
            step: 0,
            order: Vec::new(),
            cursor: 0,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    fn next_indices(&mut self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.train.batch_size);
        while out.len() < self.train.batch_size {
            if self.cursor >= self.order.len() {
                self.order = (0..n).collect();
                self.rng.shuffle(&mut self.order);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }

    /// One optimizer step. On divergence the parameters are left as they
    /// were before the step.
    pub fn train_step(&mut self, ds: &dyn Dataset) -> Result<StepLog, PolicyError> {
        if ds.is_empty() {
            return Err(DemoError::Config("empty dataset").into());
        }
        let idx = self.next_indices(ds.len());
        let mut batch = Vec::with_capacity(idx.len());
        for &i in &idx {
            let mut s = ds.sample(i)?;
            augment(&mut s, &self.augment, &mut self.rng);
            batch.push(s);
        }
        let cfg = &self.policy.cfg;
        let draws = LossDraws::sample(cfg, batch.len(), &mut self.rng);
        let step = self.step + 1;
        let diverged = |e: NumericError| PolicyError::Diverged {
            step,
            reason: e.to_string(),
        };

        let (log, grads) = {
            let mut g = Graph::with_precision(&self.policy.params, self.train.precision);
            let loss = diffusion_loss(&mut g, cfg, self.policy.schedule(), &batch, &draws, self.train.alpha)
                .map_err(|e| match e {
                    NumericError::NonFinite { .. } => diverged(e),
                    e => e.into(),
                })?;
            let grads = g.backward(loss.total).map_err(diverged)?;
            let value = |v| g.value(v).data()[0];
            let log = StepLog {
                step,
                lr: lr_at_step(&self.train, step),
                l_action: value(loss.action),
                l_predictor: value(loss.predictor),
                l_total: value(loss.total),
                grad_norm: grads.global_norm(),
            };
            (log, grads)
        };
        self.opt
            .step(&mut self.policy.params, &grads, log.lr)
            .map_err(diverged)?;
        if self.train.precision == Precision::F32 {
            self.policy.params.round_f32();
        }
        self.step = step;
        Ok(log)
    }
}

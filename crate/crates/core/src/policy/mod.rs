//! The force-aware policy: scene and force encoders, future-contact
//! predictor, gated fusion, diffusion action head and training.

use alloc::vec::Vec;

mod config;
mod diffusion;
mod loss;
pub mod model;
mod train;

#[cfg(test)]
mod tests;

pub use config::{BetaSchedule, FusionMode, PolicyConfig};
pub use diffusion::NoiseSchedule;
pub use loss::{combine, diffusion_loss, LossDraws, LossVars};
pub use model::{declare_params, fuse, policy_forward, Forward};
pub use train::{StepLog, Trainer};

use crate::demo::{DemoError, Normalizer, PolicyInput};
use crate::geom::{Pose, POSE_DIM};
use crate::numeric::{Graph, NumericError, ParamStore, Precision, Tensor};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Data(#[from] DemoError),
    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: alloc::string::String },
    #[error("parameter set does not match the configuration: {0}")]
    Checkpoint(alloc::string::String),
}

/// One inference: contact probability and a denormalized action chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub phi: f64,
    pub chunk: Vec<Pose>,
}

/// Configuration, parameters and normalization bundled for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub cfg: PolicyConfig,
    pub params: ParamStore,
    pub norm: Normalizer,
    schedule: NoiseSchedule,
}

impl Policy {
    pub fn new(cfg: PolicyConfig, norm: Normalizer) -> Result<Self, PolicyError> {
        let params = declare_params(&cfg)?;
        Ok(Self::assemble(cfg, params, norm))
    }

    /// Adopts loaded parameters after checking every expected name and shape.
    pub fn from_parts(cfg: PolicyConfig, params: ParamStore, norm: Normalizer) -> Result<Self, PolicyError> {
        let expected = declare_params(&cfg)?;
        if expected.len() != params.len() {
            return Err(PolicyError::Checkpoint(alloc::format!(
                "expected {} tensors, found {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, t) in expected.iter() {
            let got = params
                .get(name)
                .map_err(|_| PolicyError::Checkpoint(alloc::format!("missing {name}")))?;
            if got.shape() != t.shape() {
                return Err(PolicyError::Checkpoint(alloc::format!("shape of {name}")));
            }
        }
        Ok(Self::assemble(cfg, params, norm))
    }

    fn assemble(cfg: PolicyConfig, params: ParamStore, norm: Normalizer) -> Self {
        let schedule = cfg.noise_schedule();
        Self {
            cfg,
            params,
            norm,
            schedule,
        }
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Contact probability and conditioning row for one input.
    pub fn condition(&self, input: &PolicyInput, phi_override: Option<f64>) -> Result<(f64, Vec<f64>), PolicyError> {
        let mut g = Graph::with_precision(&self.params, Precision::F64);
        let fwd = policy_forward(&mut g, &self.cfg, input, phi_override)?;
        Ok((fwd.phi, g.value(fwd.cond).data().to_vec()))
    }

    /// Strided deterministic denoising from seeded Gaussian noise. Returns
    /// `t_a` normalized rows.
    pub fn sample_normalized(
        &self,
        cond: &[f64],
        proprio: &[f64; POSE_DIM],
        rng: &mut Rng,
    ) -> Result<Vec<[f64; POSE_DIM]>, PolicyError> {
        let width = self.cfg.chunk_width();
        if cond.len() != 2 * self.cfg.d_model {
            return Err(NumericError::Dimension("conditioning width").into());
        }
        let mut x: Vec<f64> = (0..width).map(|_| rng.normal()).collect();
        let ts = self.schedule.inference_timesteps(self.cfg.ddim_steps);
        for (i, &t) in ts.iter().enumerate() {
            let prev = ts.get(i + 1).copied().unwrap_or(0);
            let mut g = Graph::with_precision(&self.params, Precision::F64);
            let c = g.input(Tensor::matrix(1, cond.len(), cond.to_vec())?)?;
            let inputs = model::HeadInputs::new(&self.cfg, &self.schedule, x.clone(), &[t], &[*proprio])?;
            let eps = model::predict_noise(&mut g, &self.cfg, inputs, c)?;
            self.schedule.ddim_step(&mut x, g.value(eps).data(), t, prev, PolicyConfig::RELATIVE_CLIP);
        }
        Ok(model::absolute_chunk(&x, proprio))
    }

    /// Denormalized chunk with unit quaternions.
    pub fn sample_actions(
        &self,
        cond: &[f64],
        proprio: &[f64; POSE_DIM],
        rng: &mut Rng,
    ) -> Result<Vec<Pose>, PolicyError> {
        let rows = self.sample_normalized(cond, proprio, rng)?;
        Ok(rows.iter().map(|r| self.norm.unpose(r)).collect())
    }

    pub fn infer(&self, input: &PolicyInput, phi_override: Option<f64>, rng: &mut Rng) -> Result<Inference, PolicyError> {
        let (phi, cond) = self.condition(input, phi_override)?;
        let chunk = self.sample_actions(&cond, &input.proprio, rng)?;
        Ok(Inference { phi, chunk })
    }
}

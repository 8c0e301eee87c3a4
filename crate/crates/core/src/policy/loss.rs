//! Combined denoising + contact-prediction objective.

use alloc::vec::Vec;

use super::model::{policy_forward, predict_noise, relative_chunk, HeadInputs};
use super::{NoiseSchedule, PolicyConfig};
use crate::demo::TrainingSample;
use crate::numeric::{Axis, Graph, NumericError, Var};
use crate::rng::Rng;

/// Noise and timesteps for one batch, drawn outside the graph so that the
/// loss is a pure function of the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDraws {
    /// `batch * noise_draws` rows of `chunk_width` standard normals.
    pub noise: Vec<f64>,
    /// One timestep in `1..=ddpm_steps` per row.
    pub timesteps: Vec<usize>,
}

impl LossDraws {
    pub fn sample(cfg: &PolicyConfig, batch: usize, rng: &mut Rng) -> Self {
        let rows = batch * cfg.noise_draws;
        let timesteps = (0..rows).map(|_| 1 + rng.below(cfg.ddpm_steps)).collect();
        let noise = (0..rows * cfg.chunk_width()).map(|_| rng.normal()).collect();
        Self { noise, timesteps }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub action: Var,
    pub predictor: Var,
}

pub fn combine(action: f64, predictor: f64, alpha: f64) -> f64 {
    action + alpha * predictor
}

/// `L_action + alpha * L_predictor` on `batch`. Each sample is encoded on
/// its own; its conditioning row is repeated for every noise draw.
pub fn diffusion_loss(
    g: &mut Graph,
    cfg: &PolicyConfig,
    schedule: &NoiseSchedule,
    batch: &[TrainingSample],
    draws: &LossDraws,
    alpha: f64,
) -> Result<LossVars, NumericError> {
    if batch.is_empty() {
        return Err(NumericError::EmptySequence);
    }
    let k = cfg.noise_draws;
    let width = cfg.chunk_width();
    let rows = batch.len() * k;
    if draws.timesteps.len() != rows || draws.noise.len() != rows * width {
        return Err(NumericError::Dimension("loss draws do not match the batch"));
    }

    let mut logits = Vec::with_capacity(batch.len());
    let mut conds = Vec::with_capacity(batch.len());
    for s in batch {
        if s.actions.len() != cfg.t_a {
            return Err(NumericError::Dimension("action chunk length differs from t_a"));
        }
        let fwd = policy_forward(g, cfg, &s.input, None)?;
        logits.push(fwd.logit);
        conds.push(fwd.cond);
    }
    let logits = g.concat(&logits, Axis::Rows)?;
    let labels: Vec<f64> = batch.iter().map(|s| s.label).collect();
    let predictor = g.bce_with_logits(logits, &labels)?;

    let cond = g.concat(&conds, Axis::Rows)?;
    let repeat: Vec<Option<u32>> = (0..rows).map(|r| Some((r / k) as u32)).collect();
    let cond = g.gather_rows(cond, &repeat)?;

    let mut noisy = Vec::with_capacity(rows * width);
    let mut proprio = Vec::with_capacity(rows);
    for r in 0..rows {
        let s = &batch[r / k];
        let x0 = relative_chunk(&s.actions, &s.input.proprio);
        let eps = &draws.noise[r * width..(r + 1) * width];
        schedule.add_noise(&x0, eps, draws.timesteps[r], &mut noisy);
        proprio.push(s.input.proprio);
    }
    let inputs = HeadInputs::new(cfg, schedule, noisy, &draws.timesteps, &proprio)?;
    let pred = predict_noise(g, cfg, inputs, cond)?;
    let target = g.input(crate::numeric::Tensor::matrix(rows, width, draws.noise.clone())?)?;
    let action = g.mse(pred, target)?;

    let weighted = g.scale(predictor, alpha)?;
    let total = g.add(action, weighted)?;
    Ok(LossVars {
        total,
        action,
        predictor,
    })
}

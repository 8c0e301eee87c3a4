use crate::numeric::nn::EncoderSpec;
use crate::numeric::NumericError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FusionMode {
    /// Scene feature plus the contact-gated force feature.
    #[default]
    Gated,
    /// Force tokens join the scene tokens before the scene readout.
    ForceToken,
    /// Scene and force features concatenated, no gate.
    ForceConcat,
    /// Scene feature only; the force half is zero.
    VisionOnly,
    /// Gated, with the predictor reading the scene feature instead of the image.
    Gated3dCls,
    /// Gated, with a flat MLP force encoder in place of the transformer.
    GatedMlpFt,
}

impl FusionMode {
    pub const ALL: [FusionMode; 6] = [
        FusionMode::Gated,
        FusionMode::ForceToken,
        FusionMode::ForceConcat,
        FusionMode::VisionOnly,
        FusionMode::Gated3dCls,
        FusionMode::GatedMlpFt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionMode::Gated => "gated",
            FusionMode::ForceToken => "force_token",
            FusionMode::ForceConcat => "force_concat",
            FusionMode::VisionOnly => "vision_only",
            FusionMode::Gated3dCls => "gated_3dcls",
            FusionMode::GatedMlpFt => "gated_mlp_ft",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn is_gated(self) -> bool {
        matches!(self, FusionMode::Gated | FusionMode::Gated3dCls | FusionMode::GatedMlpFt)
    }
}

/// Shape of the forward noising schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BetaSchedule {
    /// `alpha_bar` follows a shifted squared cosine and reaches ~0 at the last step.
    #[default]
    SquaredCosine,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PolicyConfig {
    pub d_model: usize,
    pub heads: usize,
    /// Self-attention blocks ahead of each readout block.
    pub blocks: usize,
    pub ff_mult: usize,
    pub t_o: usize,
    pub t_a: usize,
    pub ddpm_steps: usize,
    pub ddim_steps: usize,
    pub beta_schedule: BetaSchedule,
    /// Only read by the linear schedule.
    pub beta_start: f64,
    pub beta_end: f64,
    pub fusion: FusionMode,
    /// Consecutive force readings averaged into one token (1 = per-step).
    pub force_pool: usize,
    /// Voxel edge in normalized units for scene pooling.
    pub voxel: f64,
    pub max_scene_tokens: usize,
    pub point_hidden: usize,
    pub force_hidden: usize,
    pub head_hidden: usize,
    pub time_embed: usize,
    /// Side of the square predictor image.
    pub image_size: usize,
    pub predictor_hidden: usize,
    /// Multipliers applied to raw force (N) and torque (N·m) readings.
    pub force_scale: f64,
    pub torque_scale: f64,
    /// Assumed std of relative chunk entries, used to precondition the head.
    pub target_std: f64,
    /// Independent noise draws per sample in the denoising loss.
    pub noise_draws: usize,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            heads: 4,
            blocks: 1,
            ff_mult: 2,
            t_o: 200,
            t_a: 20,
            ddpm_steps: 100,
            ddim_steps: 20,
            beta_schedule: BetaSchedule::SquaredCosine,
            beta_start: 1e-4,
            beta_end: 2e-2,
            fusion: FusionMode::Gated,
            force_pool: 10,
            voxel: 0.25,
            max_scene_tokens: 96,
            point_hidden: 32,
            force_hidden: 32,
            head_hidden: 256,
            time_embed: 32,
            image_size: 32,
            predictor_hidden: 64,
            force_scale: 0.2,
            torque_scale: 2.0,
            target_std: 0.5,
            noise_draws: 4,
            seed: 0,
        }
    }
}

impl PolicyConfig {
    pub fn encoder(&self) -> EncoderSpec {
        EncoderSpec {
            d_model: self.d_model,
            heads: self.heads,
            d_ff: self.ff_mult * self.d_model,
            blocks: self.blocks,
        }
    }

    pub fn chunk_width(&self) -> usize {
        self.t_a * crate::geom::POSE_DIM
    }

    pub fn validate(&self) -> Result<(), NumericError> {
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(NumericError::Config("d_model must be a positive multiple of heads"));
        }
        if self.d_model % 2 != 0 || self.time_embed % 2 != 0 {
            return Err(NumericError::Config("encoding widths must be even"));
        }
        if self.ddim_steps == 0 || self.ddim_steps > self.ddpm_steps {
            return Err(NumericError::Config("ddim_steps must be in 1..=ddpm_steps"));
        }
        if self.t_a == 0 || self.t_o == 0 || self.noise_draws == 0 {
            return Err(NumericError::Config("horizons and noise draws must be positive"));
        }
        if self.force_pool == 0 || self.t_o % self.force_pool != 0 {
            return Err(NumericError::Config("force_pool must divide t_o"));
        }
        if self.image_size < 4 || self.image_size % 4 != 0 {
            return Err(NumericError::Config("image_size must be a positive multiple of 4"));
        }
        if !(self.voxel > 0.0) || self.max_scene_tokens == 0 {
            return Err(NumericError::Config("voxel size and token cap must be positive"));
        }
        if !(self.target_std > 0.0) {
            return Err(NumericError::Config("target_std must be positive"));
        }
        if !(self.beta_start > 0.0 && self.beta_end >= self.beta_start && self.beta_end < 1.0) {
            return Err(NumericError::Config("beta range must satisfy 0 < start <= end < 1"));
        }
        Ok(())
    }

    /// Largest magnitude of a denoised relative chunk entry: the gap
    /// between two values in `[-1, 1]`.
    pub const RELATIVE_CLIP: f64 = 2.0;

    pub fn noise_schedule(&self) -> super::NoiseSchedule {
        match self.beta_schedule {
            BetaSchedule::SquaredCosine => super::NoiseSchedule::squared_cosine(self.ddpm_steps),
            BetaSchedule::Linear => super::NoiseSchedule::linear(self.ddpm_steps, self.beta_start, self.beta_end),
        }
    }
}

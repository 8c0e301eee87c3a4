//! Encoders, contact predictor, fusion and the noise-prediction head.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use super::{FusionMode, NoiseSchedule, PolicyConfig};
use crate::demo::PolicyInput;
use crate::geom::POSE_DIM;
use crate::numeric::nn::{self, attention_encode, declare_attention_encoder, mlp_apply, Conv2d};
use crate::numeric::{sigmoid, Axis, Graph, Init, NumericError, ParamStore, Tensor, Var};
use crate::sim::ImageGrid;

const SCENE_POINT: &str = "scene.point";
const SCENE_PE: &str = "scene.pe";
const SCENE_TF: &str = "scene.tf";
const SCENE_READOUT: &str = "scene.readout";
const FORCE_STEP: &str = "force.step";
const FORCE_TF: &str = "force.tf";
const FORCE_READOUT: &str = "force.readout";
const FORCE_FLAT: &str = "force.flat";
const NEUTRAL: &str = "fuse.neutral";
const PRED_CONV1: &str = "pred.conv1";
const PRED_CONV2: &str = "pred.conv2";
const PRED_IMG: &str = "pred.img";
const PRED_FT: &str = "pred.ft";
const PRED_OUT: &str = "pred.out";
pub(crate) const HEAD: &str = "head";

const FLAT_HIDDEN: usize = 128;

fn convs(cfg: &PolicyConfig) -> (Conv2d, Conv2d) {
    let s = cfg.image_size;
    let c1 = Conv2d {
        h: s,
        w: s,
        cin: 3,
        cout: 8,
        kernel: 3,
        stride: 2,
        pad: 1,
    };
    let (h, w) = c1.out_hw();
    let c2 = Conv2d {
        h,
        w,
        cin: 8,
        cout: 16,
        kernel: 3,
        stride: 2,
        pad: 1,
    };
    (c1, c2)
}

fn conv_out_width(cfg: &PolicyConfig) -> usize {
    let (_, c2) = convs(cfg);
    let (h, w) = c2.out_hw();
    h * w * c2.cout
}

fn force_step_dims(cfg: &PolicyConfig) -> [usize; 4] {
    [6, cfg.force_hidden, cfg.force_hidden, cfg.d_model]
}

pub(crate) fn head_dims(cfg: &PolicyConfig) -> [usize; 4] {
    let chunk = cfg.chunk_width();
    let input = chunk + cfg.time_embed + 2 * cfg.d_model + POSE_DIM;
    [input, cfg.head_hidden, cfg.head_hidden, chunk]
}

/// Registers every parameter the configured fusion mode reads.
pub fn declare_params(cfg: &PolicyConfig) -> Result<ParamStore, NumericError> {
    cfg.validate()?;
    let d = cfg.d_model;
    let spec = cfg.encoder();
    let mut store = ParamStore::new();
    let mut init = Init::new(&mut store, cfg.seed);

    init.mlp(SCENE_POINT, &[6, cfg.point_hidden, d])?;
    init.mlp(SCENE_PE, &[3, cfg.point_hidden, d])?;
    declare_attention_encoder(&mut init, SCENE_TF, &spec)?;
    init.fan_in(SCENE_READOUT, &[1, d], d)?;

    match cfg.fusion {
        FusionMode::Gated | FusionMode::Gated3dCls | FusionMode::ForceConcat => {
            init.mlp(FORCE_STEP, &force_step_dims(cfg))?;
            declare_attention_encoder(&mut init, FORCE_TF, &spec)?;
            init.fan_in(FORCE_READOUT, &[1, d], d)?;
        }
        FusionMode::GatedMlpFt => init.mlp(FORCE_FLAT, &[6 * cfg.t_o, FLAT_HIDDEN, d])?,
        FusionMode::ForceToken => init.mlp(FORCE_STEP, &force_step_dims(cfg))?,
        FusionMode::VisionOnly => {}
    }
    if cfg.fusion.is_gated() {
        init.fan_in(NEUTRAL, &[1, d], d)?;
    }

    let ph = cfg.predictor_hidden;
    let first = if cfg.fusion == FusionMode::Gated3dCls {
        d
    } else {
        let (c1, c2) = convs(cfg);
        c1.declare(&mut init, PRED_CONV1)?;
        c2.declare(&mut init, PRED_CONV2)?;
        init.linear(PRED_IMG, conv_out_width(cfg), ph)?;
        ph
    };
    init.linear(PRED_FT, 6 * cfg.t_o, ph)?;
    init.linear(PRED_OUT, first + ph, 1)?;

    init.mlp(HEAD, &head_dims(cfg))?;
    Ok(store)
}

/// Point rows grouped into occupied voxels.
#[derive(Debug, Clone)]
pub struct Voxels {
    /// `(n, 6)`: normalized xyz and rgb mapped to `[-1, 1]`.
    pub points: Tensor,
    pub segment: Vec<u32>,
    /// `(k, 3)` voxel centers, ordered by voxel key.
    pub centers: Tensor,
}

/// Buckets a normalized cloud into a regular grid. When more than `cap`
/// voxels are occupied, the most populated ones are kept (ties by key) and
/// points in the rest are dropped.
pub fn voxelize(cloud: &[[f64; 6]], voxel: f64, cap: usize) -> Result<Voxels, NumericError> {
    if cloud.is_empty() {
        return Err(NumericError::EmptySequence);
    }
    let bins = libm::ceil(2.0 / voxel).max(1.0) as i64;
    let bin = |u: f64| (libm::floor((u + 1.0) / voxel) as i64).clamp(0, bins - 1);
    let keys: Vec<i64> = cloud
        .iter()
        .map(|p| bin(p[0]) + bins * (bin(p[1]) + bins * bin(p[2])))
        .collect();
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for &k in &keys {
        *counts.entry(k).or_default() += 1;
    }
    let mut kept: Vec<(i64, usize)> = counts.into_iter().collect();
    if kept.len() > cap {
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        kept.truncate(cap);
        kept.sort_by_key(|e| e.0);
    }
    let slot: BTreeMap<i64, u32> = kept.iter().enumerate().map(|(i, e)| (e.0, i as u32)).collect();

    let mut rows = Vec::with_capacity(cloud.len() * 6);
    let mut segment = Vec::with_capacity(cloud.len());
    for (p, k) in cloud.iter().zip(&keys) {
        if let Some(&s) = slot.get(k) {
            rows.extend_from_slice(&[p[0], p[1], p[2], 2.0 * p[3] - 1.0, 2.0 * p[4] - 1.0, 2.0 * p[5] - 1.0]);
            segment.push(s);
        }
    }
    let center = |i: i64| -1.0 + (i as f64 + 0.5) * voxel;
    let mut centers = Vec::with_capacity(kept.len() * 3);
    for &(k, _) in &kept {
        centers.extend_from_slice(&[center(k % bins), center((k / bins) % bins), center(k / (bins * bins))]);
    }
    Ok(Voxels {
        points: Tensor::matrix(segment.len(), 6, rows)?,
        segment,
        centers: Tensor::matrix(kept.len(), 3, centers)?,
    })
}

/// Per-voxel tokens and learned position encodings, each `(k, d)`.
fn scene_tokens(g: &mut Graph, cfg: &PolicyConfig, cloud: &[[f64; 6]]) -> Result<(Var, Var), NumericError> {
    let vox = voxelize(cloud, cfg.voxel, cfg.max_scene_tokens)?;
    let k = vox.centers.rows();
    let pts = g.input(vox.points)?;
    let feats = mlp_apply(g, SCENE_POINT, pts, &[6, cfg.point_hidden, cfg.d_model])?;
    let tokens = g.segment_mean(feats, &vox.segment, k)?;
    let centers = g.input(vox.centers)?;
    let pe = mlp_apply(g, SCENE_PE, centers, &[3, cfg.point_hidden, cfg.d_model])?;
    Ok((tokens, pe))
}

pub fn encode_scene(g: &mut Graph, cfg: &PolicyConfig, cloud: &[[f64; 6]]) -> Result<Var, NumericError> {
    let (tokens, pe) = scene_tokens(g, cfg, cloud)?;
    let readout = g.param(SCENE_READOUT)?;
    attention_encode(g, SCENE_TF, tokens, pe, readout, &cfg.encoder())
}

fn scaled_window(cfg: &PolicyConfig, ft: &[[f64; 6]]) -> Result<Tensor, NumericError> {
    if ft.len() != cfg.t_o {
        return Err(NumericError::ShapeMismatch {
            op: "force window",
            expected: vec![cfg.t_o, 6],
            got: vec![ft.len(), 6],
        });
    }
    let mut data = Vec::with_capacity(ft.len() * 6);
    for r in ft {
        data.extend(r[..3].iter().map(|v| v * cfg.force_scale));
        data.extend(r[3..].iter().map(|v| v * cfg.torque_scale));
    }
    Tensor::matrix(ft.len(), 6, data)
}

/// Pooled per-step tokens `(t_o / force_pool, d)` with sinusoidal encodings.
fn force_tokens(g: &mut Graph, cfg: &PolicyConfig, ft: &[[f64; 6]]) -> Result<(Var, Var), NumericError> {
    let x = g.input(scaled_window(cfg, ft)?)?;
    let feats = mlp_apply(g, FORCE_STEP, x, &force_step_dims(cfg))?;
    let n = cfg.t_o / cfg.force_pool;
    let tokens = if cfg.force_pool == 1 {
        feats
    } else {
        let seg: Vec<u32> = (0..cfg.t_o).map(|i| (i / cfg.force_pool) as u32).collect();
        g.segment_mean(feats, &seg, n)?
    };
    let pe = g.input(nn::sinusoidal_pe(n, cfg.d_model)?)?;
    Ok((tokens, pe))
}

pub fn encode_force(g: &mut Graph, cfg: &PolicyConfig, ft: &[[f64; 6]]) -> Result<Var, NumericError> {
    if cfg.fusion == FusionMode::GatedMlpFt {
        let x = g.input(scaled_window(cfg, ft)?.reshape(&[1, 6 * cfg.t_o])?)?;
        return mlp_apply(g, FORCE_FLAT, x, &[6 * cfg.t_o, FLAT_HIDDEN, cfg.d_model]);
    }
    let (tokens, pe) = force_tokens(g, cfg, ft)?;
    let readout = g.param(FORCE_READOUT)?;
    attention_encode(g, FORCE_TF, tokens, pe, readout, &cfg.encoder())
}

/// Contact logit `(1, 1)`. `scene` replaces the image branch in the
/// scene-feature predictor variant.
pub fn contact_logit(
    g: &mut Graph,
    cfg: &PolicyConfig,
    image: &ImageGrid,
    ft: &[[f64; 6]],
    scene: Option<Var>,
) -> Result<Var, NumericError> {
    let visual = match (cfg.fusion, scene) {
        (FusionMode::Gated3dCls, Some(h)) => h,
        (FusionMode::Gated3dCls, None) => return Err(NumericError::Config("scene feature required")),
        _ => {
            let s = cfg.image_size;
            if image.h != s || image.w != s || image.c != 3 {
                return Err(NumericError::ShapeMismatch {
                    op: "predictor image",
                    expected: vec![s, s, 3],
                    got: vec![image.h, image.w, image.c],
                });
            }
            let (c1, c2) = convs(cfg);
            let x = g.input(Tensor::matrix(s * s, 3, image.data.clone())?)?;
            let h = c1.apply(g, PRED_CONV1, x)?;
            let h = g.gelu(h)?;
            let h = c2.apply(g, PRED_CONV2, h)?;
            let h = g.gelu(h)?;
            let h = nn::flatten_row(g, h)?;
            let h = nn::linear(g, PRED_IMG, h)?;
            g.gelu(h)?
        }
    };
    let f = g.input(scaled_window(cfg, ft)?.reshape(&[1, 6 * cfg.t_o])?)?;
    let f = nn::linear(g, PRED_FT, f)?;
    let f = g.gelu(f)?;
    let z = nn::concat_cols(g, &[visual, f])?;
    nn::linear(g, PRED_OUT, z)
}

/// `[h_s ; phi * h_f + (1 - phi) * h*]` with a one-element `phi`.
pub fn fuse(g: &mut Graph, h_s: Var, h_f: Var, phi: Var, h_star: Var) -> Result<Var, NumericError> {
    if g.shape(h_s) != g.shape(h_f) {
        return Err(NumericError::ShapeMismatch {
            op: "fuse",
            expected: g.shape(h_s).to_vec(),
            got: g.shape(h_f).to_vec(),
        });
    }
    let gated = g.gate(h_f, h_star, phi)?;
    nn::concat_cols(g, &[h_s, gated])
}

#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// Predictor output before the sigmoid, `(1, 1)`.
    pub logit: Var,
    /// Contact probability used by the gate (the override when given).
    pub phi: f64,
    /// `(1, 2 d)` conditioning row.
    pub cond: Var,
}

pub fn policy_forward(
    g: &mut Graph,
    cfg: &PolicyConfig,
    input: &PolicyInput,
    phi_override: Option<f64>,
) -> Result<Forward, NumericError> {
    let d = cfg.d_model;
    let spec = cfg.encoder();
    let (h_s, cond_force) = match cfg.fusion {
        FusionMode::ForceToken => {
            let (st, spe) = scene_tokens(g, cfg, &input.cloud)?;
            let (ft, fpe) = force_tokens(g, cfg, &input.ft)?;
            let tokens = g.concat(&[st, ft], Axis::Rows)?;
            let pe = g.concat(&[spe, fpe], Axis::Rows)?;
            let readout = g.param(SCENE_READOUT)?;
            let h = attention_encode(g, SCENE_TF, tokens, pe, readout, &spec)?;
            (h, None)
        }
        FusionMode::VisionOnly => (encode_scene(g, cfg, &input.cloud)?, None),
        _ => {
            let h_s = encode_scene(g, cfg, &input.cloud)?;
            let h_f = encode_force(g, cfg, &input.ft)?;
            (h_s, Some(h_f))
        }
    };
    let logit = contact_logit(g, cfg, &input.image, &input.ft, Some(h_s))?;
    let (phi_var, phi) = match phi_override {
        Some(p) => {
            if !(0.0..=1.0).contains(&p) {
                return Err(NumericError::Config("phi override must lie in [0, 1]"));
            }
            (g.input(Tensor::matrix(1, 1, vec![p])?)?, p)
        }
        None => {
            let v = g.sigmoid(logit)?;
            (v, sigmoid(g.value(logit).data()[0]))
        }
    };
    let cond = match (cfg.fusion, cond_force) {
        (m, Some(h_f)) if m.is_gated() => {
            let h_star = g.param(NEUTRAL)?;
            fuse(g, h_s, h_f, phi_var, h_star)?
        }
        (_, Some(h_f)) => nn::concat_cols(g, &[h_s, h_f])?,
        (_, None) => {
            let z = nn::zeros_row(g, d)?;
            nn::concat_cols(g, &[h_s, z])?
        }
    };
    Ok(Forward { logit, phi, cond })
}

/// Constant inputs of the noise predictor for `n` rows.
#[derive(Debug, Clone)]
pub struct HeadInputs {
    noisy: Tensor,
    temb: Tensor,
    proprio: Tensor,
    /// Residual gain broadcast over each row.
    out_gain: Tensor,
    /// Best linear noise estimate from `x_t` alone.
    skip: Tensor,
}

impl HeadInputs {
    pub fn new(
        cfg: &PolicyConfig,
        schedule: &NoiseSchedule,
        noisy: Vec<f64>,
        timesteps: &[usize],
        proprio: &[[f64; POSE_DIM]],
    ) -> Result<Self, NumericError> {
        let n = timesteps.len();
        let width = cfg.chunk_width();
        if proprio.len() != n {
            return Err(NumericError::Dimension("one proprio row per timestep"));
        }
        if noisy.len() != n * width {
            return Err(NumericError::Dimension("noisy chunk width"));
        }
        if timesteps.iter().any(|&t| t > schedule.steps()) {
            return Err(NumericError::Config("timestep beyond the schedule"));
        }
        let mut temb = vec![0.0; n * cfg.time_embed];
        for (row, &t) in temb.chunks_mut(cfg.time_embed).zip(timesteps) {
            nn::sinusoidal_row(t as f64, cfg.time_embed, row);
        }
        let mut gain = Vec::with_capacity(n * width);
        let mut skip = Vec::with_capacity(n * width);
        for (row, &t) in noisy.chunks(width).zip(timesteps) {
            let (c_skip, c_out) = head_preconditioning(schedule.alpha_bar(t), cfg.target_std);
            gain.extend(core::iter::repeat_n(c_out, width));
            skip.extend(row.iter().map(|x| c_skip * x));
        }
        Ok(Self {
            noisy: Tensor::matrix(n, width, noisy)?,
            temb: Tensor::matrix(n, cfg.time_embed, temb)?,
            proprio: Tensor::matrix(n, POSE_DIM, proprio.iter().flatten().copied().collect())?,
            out_gain: Tensor::matrix(n, width, gain)?,
            skip: Tensor::matrix(n, width, skip)?,
        })
    }
}

/// Diffusion target: the normalized chunk minus the current normalized
/// pose, row by row.
pub fn relative_chunk(actions: &[[f64; POSE_DIM]], proprio: &[f64; POSE_DIM]) -> Vec<f64> {
    actions
        .iter()
        .flat_map(|a| a.iter().zip(proprio).map(|(x, p)| x - p))
        .collect()
}

/// Inverse of [`relative_chunk`].
pub fn absolute_chunk(rel: &[f64], proprio: &[f64; POSE_DIM]) -> Vec<[f64; POSE_DIM]> {
    rel.chunks(POSE_DIM)
        .map(|r| {
            let mut a = [0.0; POSE_DIM];
            for ((o, x), p) in a.iter_mut().zip(r).zip(proprio) {
                *o = x + p;
            }
            a
        })
        .collect()
}

/// For targets with std `sigma`, the least-squares noise estimate from
/// `x_t` alone is `c_skip x_t`; `c_out` is the std of what remains.
pub fn head_preconditioning(alpha_bar: f64, sigma: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let var = alpha_bar * s2 + (1.0 - alpha_bar);
    (libm::sqrt(1.0 - alpha_bar) / var, libm::sqrt(alpha_bar) * sigma / libm::sqrt(var))
}

/// Predicted noise `(n, chunk)` given per-row conditioning `(n, 2 d)`.
/// The MLP output enters as `c_skip x_t + c_out v`.
pub fn predict_noise(g: &mut Graph, cfg: &PolicyConfig, inputs: HeadInputs, cond: Var) -> Result<Var, NumericError> {
    let x = g.input(inputs.noisy)?;
    let t = g.input(inputs.temb)?;
    let p = g.input(inputs.proprio)?;
    let z = nn::concat_cols(g, &[x, t, cond, p])?;
    let v = mlp_apply(g, HEAD, z, &head_dims(cfg))?;
    let gain = g.input(inputs.out_gain)?;
    let skip = g.input(inputs.skip)?;
    let v = g.mul(v, gain)?;
    g.add(v, skip)
}

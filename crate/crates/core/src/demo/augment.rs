//! Joint rigid perturbation of cloud and action targets plus color jitter.

use super::TrainingSample;
use crate::geom::{Quat, Vec3};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AugmentConfig {
    /// Max translation per axis, normalized units.
    pub translation: f64,
    /// Max rotation about the vertical axis, radians.
    pub rotation: f64,
    /// Max brightness offset and contrast deviation.
    pub color: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            translation: 0.1,
            rotation: 10f64.to_radians(),
            color: 0.2,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            translation: 0.0,
            rotation: 0.0,
            color: 0.0,
        }
    }
}

fn rotate_xy(x: f64, y: f64, c: f64, s: f64) -> (f64, f64) {
    (c * x - s * y, s * x + c * y)
}

/// Rotates about the vertical axis through the normalized origin, then
/// translates by `delta`. Applies to cloud points, the proprio pose and all
/// action targets; orientations are pre-multiplied by the same yaw.
pub fn apply_rigid(sample: &mut TrainingSample, delta: Vec3, yaw: f64) {
    let (s, c) = (libm::sin(yaw), libm::cos(yaw));
    let q = Quat::from_yaw(yaw);
    let rotate = yaw != 0.0;
    let mv = |p: &mut [f64]| {
        if rotate {
            let (x, y) = rotate_xy(p[0], p[1], c, s);
            p[0] = x;
            p[1] = y;
        }
        p[0] += delta.x;
        p[1] += delta.y;
        p[2] += delta.z;
    };
    let turn = |a: &mut [f64]| {
        if rotate {
            let r = q.mul(Quat::new(a[3], a[4], a[5], a[6]));
            a[3..7].copy_from_slice(&r.to_array());
        }
    };
    for p in sample.input.cloud.iter_mut() {
        mv(&mut p[..3]);
    }
    mv(&mut sample.input.proprio[..3]);
    turn(&mut sample.input.proprio);
    for a in sample.actions.iter_mut() {
        mv(&mut a[..3]);
        turn(a);
    }
}

/// Brightness/contrast jitter on cloud colors and the image.
pub fn apply_color(sample: &mut TrainingSample, brightness: f64, contrast: f64) {
    if brightness == 0.0 && contrast == 1.0 {
        return;
    }
    let j = |v: f64| ((v - 0.5) * contrast + 0.5 + brightness).clamp(0.0, 1.0);
    for p in sample.input.cloud.iter_mut() {
        for v in p[3..].iter_mut() {
            *v = j(*v);
        }
    }
    for v in sample.input.image.data.iter_mut() {
        *v = j(*v);
    }
}

pub fn augment(sample: &mut TrainingSample, cfg: &AugmentConfig, rng: &mut Rng) {
    let t = cfg.translation;
    let delta = Vec3::new(rng.range(-t, t), rng.range(-t, t), rng.range(-t, t));
    let yaw = rng.range(-cfg.rotation, cfg.rotation);
    let b = rng.range(-cfg.color, cfg.color);
    let k = 1.0 + rng.range(-cfg.color, cfg.color);
    apply_rigid(sample, delta, yaw);
    apply_color(sample, b, k);
}

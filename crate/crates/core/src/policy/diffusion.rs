//! Noise schedules, forward noising and the deterministic
//! strided sampler.

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    /// `alpha_bar[t]` for `t = 0..=steps`, with `alpha_bar[0] = 1`.
    alpha_bar: Vec<f64>,
    steps: usize,
}

impl NoiseSchedule {
    /// `beta_t` linear from `beta_start` (t = 1) to `beta_end` (t = steps).
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Self {
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for t in 1..=steps {
            let beta = if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * (t - 1) as f64 / (steps - 1) as f64
            };
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        Self { alpha_bar, steps }
    }

    /// Squared-cosine `alpha_bar` with offset 0.008 and each beta capped
    /// at 0.999.
    pub fn squared_cosine(steps: usize) -> Self {
        let s = 0.008;
        let f = |t: usize| {
            let c = libm::cos((t as f64 / steps as f64 + s) / (1.0 + s) * core::f64::consts::FRAC_PI_2);
            c * c
        };
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for t in 1..=steps {
            let beta = (1.0 - f(t) / f(t - 1)).min(0.999);
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        Self { alpha_bar, steps }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// `x_t = sqrt(ab) x0 + sqrt(1 - ab) eps`.
    pub fn add_noise(&self, x0: &[f64], eps: &[f64], t: usize, out: &mut Vec<f64>) {
        let ab = self.alpha_bar[t];
        let (a, b) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
        out.extend(x0.iter().zip(eps).map(|(&x, &e)| a * x + b * e));
    }

    /// Evenly strided timesteps from `steps` down to `steps / n`.
    pub fn inference_timesteps(&self, n: usize) -> Vec<usize> {
        let n = n.clamp(1, self.steps);
        let stride = self.steps / n;
        (0..n).map(|i| self.steps - i * stride).collect()
    }

    /// One deterministic update from `t` to `t_prev` given a noise
    /// prediction. The clean estimate is clipped to `[-clip, clip]` and the
    /// noise re-derived from the clipped estimate.
    pub fn ddim_step(&self, x: &mut [f64], eps: &[f64], t: usize, t_prev: usize, clip: f64) {
        let ab = self.alpha_bar[t];
        let ab_prev = self.alpha_bar[t_prev];
        let (sa, sb) = (libm::sqrt(ab), libm::sqrt(1.0 - ab));
        let (pa, pb) = (libm::sqrt(ab_prev), libm::sqrt(1.0 - ab_prev));
        for (xi, &e) in x.iter_mut().zip(eps) {
            let x0 = ((*xi - sb * e) / sa).clamp(-clip, clip);
            let e2 = if sb > 0.0 { (*xi - sa * x0) / sb } else { e };
            *xi = pa * x0 + pb * e2;
        }
    }
}

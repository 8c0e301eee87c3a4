//! Future-contact labels from a force/torque stream.

use alloc::vec::Vec;

use super::DemoError;
use crate::sim::FtSample;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LabelConfig {
    /// Force-norm threshold, N.
    pub force: f64,
    /// Torque-norm threshold, N·m.
    pub torque: f64,
    /// Half-width of the centred window, s.
    pub window_s: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            force: 2.0,
            torque: 0.5,
            window_s: 2.0,
        }
    }
}

impl LabelConfig {
    pub fn validate(&self) -> Result<(), DemoError> {
        if !(self.force > 0.0 && self.torque > 0.0 && self.window_s >= 0.0) {
            return Err(DemoError::Config("label thresholds must be positive"));
        }
        Ok(())
    }
}

/// Slack on window edges so that `t ± w` lands on sample timestamps that
/// are equal in exact arithmetic.
pub const TIME_EPS: f64 = 1e-9;

pub fn exceeds(s: &FtSample, cfg: &LabelConfig) -> bool {
    s.force_norm() > cfg.force || s.torque_norm() > cfg.torque
}

/// Label is 1 iff some sample with timestamp in `[t - w, t + w]` (clipped
/// to the stream) has force norm above `force` or torque norm above `torque`.
pub fn extract_contact_labels(stream: &[FtSample], cfg: &LabelConfig, tick_times: &[f64]) -> Result<Vec<u8>, DemoError> {
    cfg.validate()?;
    if stream.is_empty() {
        return Err(DemoError::EmptyStream);
    }
    let mut prefix = Vec::with_capacity(stream.len() + 1);
    prefix.push(0u32);
    for s in stream {
        let last = *prefix.last().unwrap();
        prefix.push(last + exceeds(s, cfg) as u32);
    }
    let out = tick_times
        .iter()
        .map(|&t| {
            let lo = stream.partition_point(|s| s.t < t - cfg.window_s - TIME_EPS);
            let hi = stream.partition_point(|s| s.t <= t + cfg.window_s + TIME_EPS);
            (hi > lo && prefix[hi] > prefix[lo]) as u8
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn stream(n: usize, f: impl Fn(usize) -> ([f64; 3], [f64; 3])) -> Vec<FtSample> {
        (0..n)
            .map(|i| {
                let (f, tau) = f(i);
                FtSample {
                    t: (i + 1) as f64 / 100.0,
                    f,
                    tau,
                }
            })
            .collect()
    }

    #[test]
    fn all_zero_stream() {
        let s = stream(1000, |_| ([0.0; 3], [0.0; 3]));
        let ticks: Vec<f64> = (0..80).map(|k| 1.0 + k as f64 * 0.1).collect();
        let l = extract_contact_labels(&s, &LabelConfig::default(), &ticks).unwrap();
        assert!(l.iter().all(|&v| v == 0));
    }

    #[test]
    fn spike_window_is_exact() {
        // spike of 5 N at t = 5.0 s (sample index 499)
        let s = stream(1000, |i| if i == 499 { ([0.0, 0.0, 5.0], [0.0; 3]) } else { ([0.0; 3], [0.0; 3]) });
        assert_eq!(s[499].t, 5.0);
        let ticks: Vec<f64> = (0..=100).map(|k| k as f64 / 10.0).collect();
        let l = extract_contact_labels(&s, &LabelConfig::default(), &ticks).unwrap();
        for (k, &t) in ticks.iter().enumerate() {
            assert_eq!(l[k] == 1, (30..=70).contains(&k), "t = {t}");
        }
    }

    #[test]
    fn empty_stream_is_error() {
        assert!(matches!(
            extract_contact_labels(&[], &LabelConfig::default(), &[1.0]),
            Err(DemoError::EmptyStream)
        ));
    }

    #[test]
    fn monotone_in_threshold() {
        let mut rng = Rng::seed(3);
        let s = stream(800, |_| ([0.0; 3], [0.0; 3]))
            .into_iter()
            .map(|mut x| {
                x.f[2] = 3.0 * rng.uniform();
                x
            })
            .collect::<Vec<_>>();
        let ticks: Vec<f64> = (0..60).map(|k| 0.5 + k as f64 * 0.12).collect();
        let lo = extract_contact_labels(&s, &LabelConfig { force: 2.9, ..Default::default() }, &ticks).unwrap();
        let hi = extract_contact_labels(&s, &LabelConfig { force: 2.99, ..Default::default() }, &ticks).unwrap();
        assert!(lo.iter().zip(&hi).all(|(&a, &b)| b <= a));
    }
}

//! Reactive deployment: periodic chunk inference, contact-routed temporal
//! ensembles and force-insufficiency correction.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::geom::{Pose, Quat, Vec3};
use crate::sim::FtSample;


#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ReactiveThresholds {
    /// Contact-probability threshold for buffer routing and correction.
    pub delta_phi: f64,
    /// Force norm (N) at or above which contact counts as sufficient.
    pub delta_f: f64,
    /// Torque norm (N·m) at or above which contact counts as sufficient.
    pub delta_t: f64,
    /// Correction step (m).
    pub epsilon: f64,
    /// Leading chunk steps that define the motion direction.
    pub t_f: usize,
}

impl Default for ReactiveThresholds {
    fn default() -> Self {
        Self {
            delta_phi: 0.9,
            delta_f: 8.0,
            delta_t: 5.0,
            epsilon: 0.006,
            t_f: 5,
        }
    }
}

impl ReactiveThresholds {
    pub fn validate(&self, t_a: usize) -> Result<(), &'static str> {
        if !(self.delta_phi > 0.0 && self.delta_phi < 1.0) {
            return Err("delta_phi must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return Err("epsilon must be positive");
        }
        if self.t_f == 0 || self.t_f > t_a {
            return Err("t_f must be in 1..=t_a");
        }
        if !(self.delta_f >= 0.0 && self.delta_t >= 0.0) {
            return Err("force thresholds must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RuntimeConfig {
    pub n_max: usize,
    /// Ticks between inferences.
    pub n_inference: usize,
    pub control_period: f64,
    /// Age decay `m` in `exp(-m k)`.
    pub decay: f64,
    /// Enables the correction step.
    pub reactive: bool,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            n_max: 300,
            n_inference: 10,
            control_period: 0.1,
            decay: 0.25,
            reactive: true,
        }
    }
}

impl RuntimeConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.n_max == 0 || self.n_inference == 0 {
            return Err("n_max and n_inference must be positive");
        }
        if !(self.decay >= 0.0) || !(self.control_period > 0.0) {
            return Err("decay must be non-negative and the control period positive");
        }
        Ok(())
    }
}

/// Predictions per future tick, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnsembleBuffer {
    slots: BTreeMap<usize, Vec<(Pose, u32)>>,
    batches: u32,
}

impl EnsembleBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Files action `i` of `chunk` under tick `t0 + i`.
    pub fn add(&mut self, chunk: &[Pose], t0: usize) {
        let batch = self.batches;
        self.batches += 1;
        for (i, a) in chunk.iter().enumerate() {
            self.slots.entry(t0 + i).or_default().push((*a, batch));
        }
    }

    pub fn entries(&self, t: usize) -> &[(Pose, u32)] {
        self.slots.get(&t).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has(&self, t: usize) -> bool {
        !self.entries(t).is_empty()
    }

    pub fn batches(&self) -> u32 {
        self.batches
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Age-weighted blend at `t`; `None` when nothing covers `t`.
    pub fn get(&self, t: usize, decay: f64) -> Option<Pose> {
        ensemble_get(self.entries(t), decay)
    }
}

/// Weighted mean with `w_k = exp(-decay k)`, `k = 0` for the newest entry.
/// Quaternions are sign-aligned to the newest before averaging.
pub fn ensemble_get(entries: &[(Pose, u32)], decay: f64) -> Option<Pose> {
    let n = entries.len();
    let newest = entries.last()?.0;
    if n == 1 {
        return Some(newest);
    }
    let mut wsum = 0.0;
    let mut pos = Vec3::ZERO;
    let mut q = [0.0; 4];
    let mut width = 0.0;
    for (i, (a, _)) in entries.iter().enumerate() {
        let w = libm::exp(-decay * (n - 1 - i) as f64);
        wsum += w;
        pos = pos + a.pos * w;
        width += w * a.width;
        let s = if a.rot.dot(newest.rot) < 0.0 { -w } else { w };
        for (acc, v) in q.iter_mut().zip(a.rot.to_array()) {
            *acc += s * v;
        }
    }
    Some(Pose::new(
        pos * (1.0 / wsum),
        Quat::new(q[0], q[1], q[2], q[3]).normalized(),
        width / wsum,
    ))
}

/// Shifts every chunk position by `epsilon` toward the mean of the first
/// `t_f` targets when contact is expected but force and torque are both
/// below threshold. Returns the applied shift.
pub fn correct_actions(chunk: &mut [Pose], q_t: &Pose, f_t: &FtSample, thr: &ReactiveThresholds) -> Option<Vec3> {
    if f_t.force_norm() >= thr.delta_f || f_t.torque_norm() >= thr.delta_t {
        return None;
    }
    let n = thr.t_f.min(chunk.len());
    if n == 0 {
        return None;
    }
    let mut sum = Vec3::ZERO;
    for a in &chunk[..n] {
        sum = sum + a.pos;
    }
    let k = n as f64;
    let d = Vec3::new(sum.x / k - q_t.pos.x, sum.y / k - q_t.pos.y, sum.z / k - q_t.pos.z);
    let norm = d.norm();
    if norm < 1e-9 {
        return None;
    }
    let e = thr.epsilon;
    let shift = Vec3::new(e * d.x / norm, e * d.y / norm, e * d.z / norm);
    for a in chunk.iter_mut() {
        a.pos = a.pos + shift;
    }
    Some(shift)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferChoice {
    Contact,
    NonContact,
    /// The selected buffer was empty at this tick; the other one served.
    Fallback,
    Hold,
}

impl BufferChoice {
    pub fn name(self) -> &'static str {
        match self {
            BufferChoice::Contact => "contact",
            BufferChoice::NonContact => "noncontact",
            BufferChoice::Fallback => "fallback",
            BufferChoice::Hold => "hold",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Contact, Self::NonContact, Self::Fallback, Self::Hold]
            .into_iter()
            .find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickLog {
    pub tick: usize,
    pub t: f64,
    /// Most recent contact probability.
    pub phi: f64,
    pub inference: bool,
    pub buffer: BufferChoice,
    pub correction: bool,
    pub force_norm: f64,
    pub torque_norm: f64,
    pub pose: Pose,
    /// Environment annotation emitted after executing this tick.
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rollout {
    pub ticks: Vec<TickLog>,
}

impl Rollout {
    pub fn inferences(&self) -> usize {
        self.ticks.iter().filter(|t| t.inference).count()
    }

    pub fn corrections(&self) -> usize {
        self.ticks.iter().filter(|t| t.correction).count()
    }

    pub fn notes(&self) -> impl Iterator<Item = (usize, &str)> {
        self.ticks.iter().filter_map(|t| t.note.as_deref().map(|n| (t.tick, n)))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("rollout aborted at tick {tick}: {reason}")]
pub struct RolloutAbort {
    pub tick: usize,
    pub reason: String,
    pub partial: Rollout,
}

/// The controlled system.
pub trait Env {
    type Obs;
    fn observe(&mut self) -> Result<Self::Obs, String>;
    fn proprio(&self) -> Pose;
    /// Current wrench reading.
    fn wrench(&self) -> FtSample;
    fn execute(&mut self, action: &Pose) -> Result<(), String>;
    /// Called once per tick after execution; may return an annotation.
    fn after_tick(&mut self, _log: &TickLog) -> Option<String> {
        None
    }
}

/// Chunk predictor: contact probability and `t_a` absolute targets.
pub trait ChunkPolicy<O> {
    fn infer(&mut self, obs: &O) -> Result<(f64, Vec<Pose>), String>;
}

/// Runs `cfg.n_max` ticks of inference, routing, correction and ensembled
/// execution.
pub fn control_loop<E: Env, P: ChunkPolicy<E::Obs>>(
    env: &mut E,
    policy: &mut P,
    cfg: &RuntimeConfig,
    thr: &ReactiveThresholds,
) -> Result<Rollout, RolloutAbort> {
    let mut rollout = Rollout::default();
    let mut non_contact = EnsembleBuffer::new();
    let mut contact = EnsembleBuffer::new();
    let mut phi = 0.0;
    for t in 0..cfg.n_max {
        let abort = |rollout: Rollout, reason: String| RolloutAbort {
            tick: t,
            reason,
            partial: rollout,
        };
        let wrench = env.wrench();
        let mut inference = false;
        let mut corrected = false;
        if t % cfg.n_inference == 0 {
            let obs = match env.observe() {
                Ok(o) => o,
                Err(e) => return Err(abort(rollout, e)),
            };
            let (p, mut chunk) = match policy.infer(&obs) {
                Ok(r) => r,
                Err(e) => return Err(abort(rollout, e)),
            };
            if !(0.0..=1.0).contains(&p) || chunk.iter().any(|a| !a.is_finite()) {
                return Err(abort(rollout, "policy returned invalid output".into()));
            }
            phi = p;
            inference = true;
            if phi < thr.delta_phi {
                non_contact.add(&chunk, t);
            } else {
                if cfg.reactive {
                    corrected = correct_actions(&mut chunk, &env.proprio(), &wrench, thr).is_some();
                }
                contact.add(&chunk, t);
            }
        }
        let (primary, secondary) = if phi >= thr.delta_phi {
            ((&contact, BufferChoice::Contact), &non_contact)
        } else {
            ((&non_contact, BufferChoice::NonContact), &contact)
        };
        let (action, choice) = match primary.0.get(t, cfg.decay) {
            Some(a) => (a, primary.1),
            None => match secondary.get(t, cfg.decay) {
                Some(a) => (a, BufferChoice::Fallback),
                None => (env.proprio(), BufferChoice::Hold),
            },
        };
        if let Err(e) = env.execute(&action) {
            return Err(abort(rollout, e));
        }
        let mut log = TickLog {
            tick: t,
            t: t as f64 * cfg.control_period,
            phi,
            inference,
            buffer: choice,
            correction: corrected,
            force_norm: wrench.force_norm(),
            torque_norm: wrench.torque_norm(),
            pose: action,
            note: None,
        };
        log.note = env.after_tick(&log);
        rollout.ticks.push(log);
    }
    Ok(rollout)
}

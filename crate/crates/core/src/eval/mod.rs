//! Trial scoring, action success rates and comparison tables.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::demo::normalize_observation;
use crate::geom::Pose;
use crate::policy::Policy;
use crate::rng::Rng;
use crate::runtime::{control_loop, ChunkPolicy, Env, ReactiveThresholds, Rollout, RolloutAbort, RuntimeConfig, TickLog};
use crate::sim::{
    apply_disturbance, segment_stats, Disturbance, FtSample, Observation, SegmentStats, SimConfig, SimState, Task,
    World,
};

#[cfg(test)]
mod tests;

/// Coverage at or above which a wipe counts as complete.
pub const FULL_WIPE: f64 = 0.95;
/// Coverage at or above which a wipe counts as partial.
pub const PARTIAL_WIPE: f64 = 0.2;

pub fn discrete_score(coverage: f64) -> f64 {
    if coverage >= FULL_WIPE {
        1.0
    } else if coverage >= PARTIAL_WIPE {
        0.5
    } else {
        0.0
    }
}

/// `(coverage, score)`; a state without a board scores zero.
pub fn wiping_score(state: &SimState) -> (f64, f64) {
    let c = state.board.as_ref().map_or(0.0, |b| b.coverage());
    (c, discrete_score(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AsrEvents {
    pub grasp: bool,
    pub operate: bool,
    pub place: bool,
}

pub fn asr_events(state: &SimState, task: Task) -> AsrEvents {
    let grasp = state.tool.ever_attached;
    let worked = match task {
        Task::Wipe => state.board.as_ref().is_some_and(|b| b.erased > 0),
        Task::Cut => state.object.as_ref().is_some_and(|o| o.cells.iter().any(|&c| c)),
    };
    AsrEvents {
        grasp,
        operate: grasp && worked,
        place: grasp && !state.tool.attached && state.tool.released_in_zone == Some(true),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub task: Task,
    pub method: String,
    pub seed: u64,
    pub score: f64,
    pub coverage: f64,
    pub asr: AsrEvents,
    pub segments: Option<SegmentStats>,
    pub disturbance: Option<Disturbance>,
    /// Tick at which the disturbance fired, if it did.
    pub disturbed_at: Option<usize>,
    pub corrections: usize,
}

/// Simulator wrapped for the control loop, with optional one-shot
/// disturbance injection once a first wiping pass is done and the tool is
/// lifted with low contact probability.
pub struct SimEnv {
    pub world: World,
    pub t_o: usize,
    pub disturbance: Option<Disturbance>,
    pub disturbed_at: Option<usize>,
    pub delta_phi: f64,
    rng: Rng,
}

/// Coverage that marks a completed first pass.
pub const DISTURB_COVERAGE: f64 = 0.6;
/// Tool clearance above the surface required before disturbing (m).
pub const DISTURB_CLEARANCE: f64 = 0.01;

const STREAM_DISTURB: u64 = 6;
const STREAM_SAMPLER: u64 = 7;

impl SimEnv {
    pub fn new(
        cfg: SimConfig,
        seed: u64,
        t_o: usize,
        disturbance: Option<Disturbance>,
        delta_phi: f64,
    ) -> Result<Self, crate::sim::SimError> {
        Ok(Self {
            world: World::new(cfg, seed)?,
            t_o,
            disturbance,
            disturbed_at: None,
            delta_phi,
            rng: Rng::derive(seed, STREAM_DISTURB),
        })
    }
}

impl Env for SimEnv {
    type Obs = Observation;

    fn observe(&mut self) -> Result<Observation, String> {
        Ok(self.world.observe(self.t_o))
    }

    fn proprio(&self) -> Pose {
        self.world.state.ee
    }

    fn wrench(&self) -> FtSample {
        self.world.latest_sample()
    }

    fn execute(&mut self, action: &Pose) -> Result<(), String> {
        self.world.step(action).map(|_| ()).map_err(|e| e.to_string())
    }

    fn after_tick(&mut self, log: &TickLog) -> Option<String> {
        let kind = self.disturbance?;
        if self.disturbed_at.is_some() || self.world.cfg.task != Task::Wipe {
            return None;
        }
        let coverage = self.world.state.board.as_ref()?.coverage();
        if coverage < DISTURB_COVERAGE || log.phi >= self.delta_phi || self.world.tip_clearance() <= DISTURB_CLEARANCE {
            return None;
        }
        let cfg = self.world.cfg.clone();
        let ev = apply_disturbance(&mut self.world.state, &cfg, kind, &mut self.rng);
        self.disturbed_at = Some(log.tick);
        let mut note = format!("disturb:{} rewritten={}", kind.name(), ev.rewritten.len());
        if let Some((dx, dy, dyaw)) = ev.moved {
            let _ = write!(note, " dx={dx:.4} dy={dy:.4} dyaw={dyaw:.4}");
        }
        Some(note)
    }
}

/// Adapts a trained policy to the control loop.
pub struct PolicyAgent<'a> {
    pub policy: &'a Policy,
    pub phi_override: Option<f64>,
    rng: Rng,
}

impl<'a> PolicyAgent<'a> {
    pub fn new(policy: &'a Policy, seed: u64) -> Self {
        Self {
            policy,
            phi_override: None,
            rng: Rng::derive(seed, STREAM_SAMPLER),
        }
    }
}

impl ChunkPolicy<Observation> for PolicyAgent<'_> {
    fn infer(&mut self, obs: &Observation) -> Result<(f64, Vec<Pose>), String> {
        let input = normalize_observation(obs, &self.policy.norm);
        let out = self
            .policy
            .infer(&input, self.phi_override, &mut self.rng)
            .map_err(|e| e.to_string())?;
        Ok((out.phi, out.chunk))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub sim: SimConfig,
    pub seed: u64,
    pub disturbance: Option<Disturbance>,
    pub runtime: RuntimeConfig,
    pub thresholds: ReactiveThresholds,
}

/// `(coverage, score, segments)` of a finished simulation. For cutting,
/// coverage is the fraction of the configured notches present and the score
/// applies the wiping thresholds to it.
pub fn score_state(state: &SimState, cfg: &SimConfig) -> (f64, f64, Option<SegmentStats>) {
    match cfg.task {
        Task::Wipe => {
            let (c, s) = wiping_score(state);
            (c, s, None)
        }
        Task::Cut => {
            let seg = state.object.as_ref().map(segment_stats);
            let notches = seg.map_or(0, |g| g.count.saturating_sub(1));
            let c = (notches as f64 / cfg.cuts.max(1) as f64).min(1.0);
            (c, discrete_score(c), seg)
        }
    }
}

/// One rollout. Correction is enabled only for gated fusion modes.
pub fn run_trial(policy: &Policy, method: &str, spec: &TrialSpec) -> Result<(TrialResult, Rollout), RolloutAbort> {
    let task = spec.sim.task;
    let abort = |reason: String| RolloutAbort {
        tick: 0,
        reason,
        partial: Rollout::default(),
    };
    let mut env = SimEnv::new(
        spec.sim.clone(),
        spec.seed,
        policy.cfg.t_o,
        spec.disturbance,
        spec.thresholds.delta_phi,
    )
    .map_err(|e| abort(e.to_string()))?;
    let mut agent = PolicyAgent::new(policy, spec.seed);
    let runtime = RuntimeConfig {
        reactive: spec.runtime.reactive && policy.cfg.fusion.is_gated(),
        ..spec.runtime.clone()
    };
    let rollout = control_loop(&mut env, &mut agent, &runtime, &spec.thresholds)?;
    let state = &env.world.state;
    let (coverage, score, segments) = score_state(state, &spec.sim);
    Ok((
        TrialResult {
            task,
            method: method.to_string(),
            seed: spec.seed,
            score,
            coverage,
            asr: asr_events(state, task),
            segments,
            disturbance: spec.disturbance,
            disturbed_at: env.disturbed_at,
            corrections: rollout.corrections(),
        },
        rollout,
    ))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn std(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = mean(xs.clone());
    libm::sqrt(mean(xs.map(|x| (x - m) * (x - m))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub trials: usize,
    pub mean_score: f64,
    pub mean_coverage: f64,
    pub std_coverage: f64,
    /// Percentages.
    pub grasp: f64,
    pub operate: f64,
    pub place: f64,
    pub segments: Option<SegmentStats>,
    pub corrections: f64,
}

pub fn summarize(method: &str, trials: &[TrialResult]) -> TableRow {
    let pct = |f: fn(&AsrEvents) -> bool| 100.0 * mean(trials.iter().map(|t| f(&t.asr) as u8 as f64));
    let segs: Vec<SegmentStats> = trials.iter().filter_map(|t| t.segments).collect();
    let segments = (!segs.is_empty()).then(|| SegmentStats {
        count: libm::round(mean(segs.iter().map(|s| s.count as f64))) as usize,
        mean: mean(segs.iter().map(|s| s.mean)),
        std: mean(segs.iter().map(|s| s.std)),
    });
    TableRow {
        method: method.to_string(),
        trials: trials.len(),
        mean_score: mean(trials.iter().map(|t| t.score)),
        mean_coverage: mean(trials.iter().map(|t| t.coverage)),
        std_coverage: std(trials.iter().map(|t| t.coverage)),
        grasp: pct(|a| a.grasp),
        operate: pct(|a| a.operate),
        place: pct(|a| a.place),
        segments,
        corrections: mean(trials.iter().map(|t| t.corrections as f64)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub title: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<TableRow>,
}

impl ComparisonTable {
    pub fn new(title: &str, seeds: Vec<u64>, rows: Vec<TableRow>) -> Result<Self, &'static str> {
        if rows.iter().any(|r| r.trials != seeds.len()) {
            return Err("every method must run the same trials");
        }
        Ok(Self {
            title: title.to_string(),
            seeds,
            rows,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "method,trials,mean_score,mean_coverage,std_coverage,grasp_pct,operate_pct,place_pct,seg_count,seg_mean,seg_std,mean_corrections\n",
        );
        for r in &self.rows {
            let (c, m, d) = r
                .segments
                .map_or((String::new(), String::new(), String::new()), |g| {
                    (format!("{}", g.count), format!("{:.4}", g.mean), format!("{:.4}", g.std))
                });
            let _ = writeln!(
                s,
                "{},{},{:.4},{:.4},{:.4},{:.1},{:.1},{:.1},{c},{m},{d},{:.2}",
                r.method, r.trials, r.mean_score, r.mean_coverage, r.std_coverage, r.grasp, r.operate, r.place, r.corrections
            );
        }
        s
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.title);
        let _ = writeln!(s, "seeds: {:?}", self.seeds);
        let _ = writeln!(
            s,
            "{:<24} {:>6} {:>7} {:>15} {:>7} {:>8} {:>7}",
            "method", "trials", "score", "coverage", "grasp%", "operate%", "place%"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<24} {:>6} {:>7.3} {:>7.3} ± {:<5.3} {:>7.1} {:>8.1} {:>7.1}",
                r.method, r.trials, r.mean_score, r.mean_coverage, r.std_coverage, r.grasp, r.operate, r.place
            );
            if let Some(g) = r.segments {
                let _ = writeln!(s, "{:<24} segments {} mean {:.3} std {:.3}", "", g.count, g.mean, g.std);
            }
        }
        s
    }
}

//! Scripted-expert episode recording (in memory; file IO lives elsewhere).

use alloc::vec::Vec;

use crate::geom::Pose;
use crate::rng::Rng;
use crate::sim::{
    apply_disturbance, Disturbance, Expert, ExpertAction, FtSample, ImageGrid, PointCloud, SimConfig, SimError, Task,
    World,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub proprio: Pose,
    pub action: Pose,
}

/// Floats per tick in the low-dimensional record: time, proprio, action.
pub const LOWDIM_WIDTH: usize = 17;

impl TickRecord {
    pub fn to_row(&self) -> [f64; LOWDIM_WIDTH] {
        let mut r = [0.0; LOWDIM_WIDTH];
        r[0] = self.t;
        r[1..9].copy_from_slice(&self.proprio.to_array());
        r[9..17].copy_from_slice(&self.action.to_array());
        r
    }

    pub fn from_row(r: &[f64]) -> Self {
        Self {
            t: r[0],
            proprio: Pose::from_slice(&r[1..9]),
            action: Pose::from_slice(&r[9..17]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeData {
    pub task: Task,
    pub seed: u64,
    pub ticks: Vec<TickRecord>,
    pub ft: Vec<FtSample>,
    pub clouds: Vec<PointCloud>,
    pub images: Vec<ImageGrid>,
    /// Disturbance injected during recording, with its tick.
    pub disturbance: Option<(Disturbance, usize)>,
    pub final_coverage: Option<f64>,
}

impl EpisodeData {
    pub fn tick_times(&self) -> Vec<f64> {
        self.ticks.iter().map(|t| t.t).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RecordOptions {
    /// Probability that an episode gets a mid-task disturbance after the
    /// first pass, so that recovery appears in the demonstrations.
    pub disturb_prob: f64,
    /// Keep point clouds and images (off for metrics-only runs).
    pub render: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            disturb_prob: 0.3,
            render: true,
        }
    }
}

/// Ticks without contact before a lifted tool counts as "done wiping".
pub const LIFT_TICKS: usize = 3;
/// Coverage that must be reached before a disturbance may fire.
pub const TRIGGER_COVERAGE: f64 = 0.6;
/// Tool-tip clearance above the board that marks the tool as lifted.
pub const TRIGGER_CLEARANCE: f64 = 0.01;

pub fn record_episode(cfg: &SimConfig, seed: u64, opts: &RecordOptions) -> Result<EpisodeData, SimError> {
    let mut world = World::new(cfg.clone(), seed)?;
    let mut expert = Expert::new(&world, seed);
    let mut rng = Rng::derive(seed, 4);
    let planned = if cfg.task == Task::Wipe && rng.uniform() < opts.disturb_prob {
        Some(match rng.below(3) {
            0 => Disturbance::Rewrite,
            1 => Disturbance::Move,
            _ => Disturbance::RewriteMove,
        })
    } else {
        None
    };
    let mut ep = EpisodeData {
        task: cfg.task,
        seed,
        ticks: Vec::new(),
        ft: Vec::new(),
        clouds: Vec::new(),
        images: Vec::new(),
        disturbance: None,
        final_coverage: None,
    };
    let mut was_in_contact = false;
    let mut since_contact = 0usize;
    for _ in 0..cfg.max_ticks {
        if let (Some(kind), None) = (planned, ep.disturbance) {
            let cov = world.state.board.as_ref().map_or(0.0, |b| b.coverage());
            if was_in_contact && since_contact >= LIFT_TICKS && cov >= TRIGGER_COVERAGE && world.tip_clearance() > TRIGGER_CLEARANCE {
                let wcfg = world.cfg.clone();
                apply_disturbance(&mut world.state, &wcfg, kind, &mut rng);
                ep.disturbance = Some((kind, world.state.tick));
            }
        }
        let t = world.state.clock;
        let proprio = world.state.ee;
        let action = match expert.act(&world)? {
            ExpertAction::Move(a) => a,
            ExpertAction::Done => {
                ep.ft = world.ft_stream().to_vec();
                ep.final_coverage = world.state.board.as_ref().map(|b| b.coverage());
                return Ok(ep);
            }
        };
        if opts.render {
            ep.clouds.push(world.render_cloud());
            ep.images.push(crate::sim::render_image(&world.state, &world.cfg));
        }
        ep.ticks.push(TickRecord { t, proprio, action });
        world.step(&action)?;
        if world.state.normal_force > 0.0 {
            was_in_contact = true;
            since_contact = 0;
        } else {
            since_contact += 1;
        }
    }
    Err(SimError::ExpertFailed("tick budget exhausted"))
}

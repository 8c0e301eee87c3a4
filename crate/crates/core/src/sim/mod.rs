//! Seeded contact-rich simulator: a whiteboard wiping task and a notch
//! cutting task, a noisy six-axis wrist force/torque sensor, renderers, a
//! scripted expert and disturbance injection.

use alloc::vec::Vec;

mod config;
pub mod disturb;
pub mod expert;
pub mod metrics;
pub mod render;
mod world;

pub use config::{ContactModel, SimConfig, Task};
pub use disturb::{apply_disturbance, move_board, rewrite_marks, Disturbance, DisturbanceEvent};
pub use expert::{Expert, ExpertAction};
pub use metrics::{segment_stats, task_metrics, Metrics, SegmentStats};
pub use render::{render_image, render_pointcloud};
pub use world::{window_ending_at, Board, CutObject, SimState, Tool, ToolKind, World};

use crate::geom::Pose;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("non-finite action rejected")]
    NonFiniteAction,
    #[error("invalid simulator configuration: {0}")]
    Config(&'static str),
    #[error("expert failed: {0}")]
    ExpertFailed(&'static str),
}

/// One wrist force/torque reading in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FtSample {
    pub t: f64,
    pub f: [f64; 3],
    pub tau: [f64; 3],
}

impl FtSample {
    pub fn row(&self) -> [f64; 6] {
        [self.f[0], self.f[1], self.f[2], self.tau[0], self.tau[1], self.tau[2]]
    }

    pub fn force_norm(&self) -> f64 {
        libm::sqrt(self.f.iter().map(|v| v * v).sum())
    }

    pub fn torque_norm(&self) -> f64 {
        libm::sqrt(self.tau.iter().map(|v| v * v).sum())
    }
}

/// `N × 6` points: xyz in metres, rgb in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<[f64; 6]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Row-major `h × w × c` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<f64>,
}

impl ImageGrid {
    pub fn filled(h: usize, w: usize, color: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(h * w * 3);
        for _ in 0..h * w {
            data.extend_from_slice(&color);
        }
        Self { h, w, c: 3, data }
    }

    pub fn get(&self, r: usize, col: usize) -> [f64; 3] {
        let i = (r * self.w + col) * self.c;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, r: usize, col: usize, v: [f64; 3]) {
        let i = (r * self.w + col) * self.c;
        self.data[i..i + 3].copy_from_slice(&v);
    }
}

/// Everything the policy perceives at a control tick, in raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub tick: usize,
    pub t: f64,
    pub cloud: PointCloud,
    pub image: ImageGrid,
    /// Last `T_o` readings, oldest first.
    pub ft_window: Vec<[f64; 6]>,
    pub proprio: Pose,
}

const STREAM_RENDER: u64 = 0x1000_0000;

impl World {
    pub fn render_cloud(&self) -> PointCloud {
        let mut rng = Rng::derive(self.seed, STREAM_RENDER + self.state.tick as u64);
        render_pointcloud(&self.state, &self.cfg, &mut rng)
    }

    pub fn observe(&self, ft_len: usize) -> Observation {
        Observation {
            tick: self.state.tick,
            t: self.state.clock,
            cloud: self.render_cloud(),
            image: render_image(&self.state, &self.cfg),
            ft_window: self.ft_window(ft_len),
            proprio: self.state.ee,
        }
    }

    /// Tool-tip height above the board surface (wipe) or object top (cut).
    pub fn tip_clearance(&self) -> f64 {
        let st = &self.state;
        let tip = if st.tool.attached {
            st.tool.tip
        } else {
            return f64::INFINITY;
        };
        let surface = match (&st.board, &st.object) {
            (Some(b), _) => b.surface_z(),
            (_, Some(o)) => o.top_z(),
            _ => 0.0,
        };
        tip.z - surface
    }
}

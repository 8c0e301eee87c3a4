use alloc::vec::Vec;

use super::config::{SimConfig, Task};
use super::{FtSample, SimError};
use crate::geom::{Pose, Quat, Vec3};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ToolKind {
    Eraser,
    Knife,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tool {
    pub kind: ToolKind,
    /// Tip position; the tool is a rigid segment of `length` along the
    /// end-effector z axis when attached, upright when resting.
    pub tip: Vec3,
    pub rot: Quat,
    pub length: f64,
    pub attached: bool,
    /// Distance from the tip to the grasp point, m.
    pub grasp_offset: f64,
    pub ever_attached: bool,
    /// Set when the tool is let go: whether the tip was within the place zone.
    pub released_in_zone: Option<bool>,
}

impl Tool {
    pub fn top(&self) -> Vec3 {
        self.tip + self.rot.rotate(Vec3::new(0.0, 0.0, self.length))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Board {
    /// Centre of the board footprint on the table.
    pub center: Vec3,
    pub yaw: f64,
    pub size: [f64; 2],
    pub thickness: f64,
    pub grid: [usize; 2],
    /// Row-major `grid[1]` rows of `grid[0]` cells; true = marked.
    pub marks: Vec<bool>,
    /// Every cell that has carried a mark at some point.
    pub ever_marked: Vec<bool>,
    /// Marked cells wiped clean so far.
    pub erased: usize,
}

impl Board {
    pub fn surface_z(&self) -> f64 {
        self.center.z + self.thickness
    }

    pub fn cell_size(&self) -> [f64; 2] {
        [self.size[0] / self.grid[0] as f64, self.size[1] / self.grid[1] as f64]
    }

    /// Board-frame xy of a world point.
    pub fn to_local(&self, p: Vec3) -> [f64; 2] {
        let dx = p.x - self.center.x;
        let dy = p.y - self.center.y;
        let (s, c) = (libm::sin(self.yaw), libm::cos(self.yaw));
        [c * dx + s * dy, -s * dx + c * dy]
    }

    pub fn to_world(&self, lx: f64, ly: f64, z: f64) -> Vec3 {
        let (s, c) = (libm::sin(self.yaw), libm::cos(self.yaw));
        Vec3::new(self.center.x + c * lx - s * ly, self.center.y + s * lx + c * ly, z)
    }

    pub fn contains_local(&self, l: [f64; 2]) -> bool {
        libm::fabs(l[0]) <= self.size[0] / 2.0 && libm::fabs(l[1]) <= self.size[1] / 2.0
    }

    pub fn cell_center_local(&self, i: usize, j: usize) -> [f64; 2] {
        let cs = self.cell_size();
        [
            -self.size[0] / 2.0 + (i as f64 + 0.5) * cs[0],
            -self.size[1] / 2.0 + (j as f64 + 0.5) * cs[1],
        ]
    }

    /// Cell index under a board-frame point, if on the board.
    pub fn cell_at_local(&self, l: [f64; 2]) -> Option<usize> {
        if !self.contains_local(l) {
            return None;
        }
        let cs = self.cell_size();
        let i = (((l[0] + self.size[0] / 2.0) / cs[0]) as usize).min(self.grid[0] - 1);
        let j = (((l[1] + self.size[1] / 2.0) / cs[1]) as usize).min(self.grid[1] - 1);
        Some(j * self.grid[0] + i)
    }

    pub fn corners(&self) -> [Vec3; 4] {
        let (hx, hy) = (self.size[0] / 2.0, self.size[1] / 2.0);
        let z = self.center.z;
        [
            self.to_world(-hx, -hy, z),
            self.to_world(hx, -hy, z),
            self.to_world(hx, hy, z),
            self.to_world(-hx, hy, z),
        ]
    }

    pub fn marked_count(&self) -> usize {
        self.marks.iter().filter(|&&m| m).count()
    }

    /// Erased fraction of every cell that ever carried a mark.
    pub fn coverage(&self) -> f64 {
        let total = self.ever_marked.iter().filter(|&&m| m).count();
        if total == 0 {
            return 1.0;
        }
        let erased = self
            .ever_marked
            .iter()
            .zip(&self.marks)
            .filter(|(&e, &m)| e && !m)
            .count();
        erased as f64 / total as f64
    }
}

/// Elongated object lying along the world x axis, split into cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CutObject {
    pub center: Vec3,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// True = notched.
    pub cells: Vec<bool>,
}

impl CutObject {
    pub fn top_z(&self) -> f64 {
        self.center.z + self.height
    }

    pub fn cell_at(&self, p: Vec3) -> Option<usize> {
        let u = (p.x - self.center.x) / self.length + 0.5;
        if !(0.0..1.0).contains(&u) || libm::fabs(p.y - self.center.y) > self.width / 2.0 {
            return None;
        }
        Some(((u * self.cells.len() as f64) as usize).min(self.cells.len() - 1))
    }

    /// World x of a fractional position along the object.
    pub fn x_at(&self, u: f64) -> f64 {
        self.center.x + (u - 0.5) * self.length
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub clock: f64,
    pub tick: usize,
    pub ee: Pose,
    pub tool: Tool,
    pub holder: Vec3,
    pub board: Option<Board>,
    pub object: Option<CutObject>,
    /// Sensor noise stream.
    pub rng: Rng,
    /// True (noise-free) normal contact force at the end of the last tick.
    pub normal_force: f64,
}

impl SimState {
    /// Height of the supporting surface under a world xy point.
    pub fn surface_at(&self, p: Vec3) -> f64 {
        if let Some(b) = &self.board {
            if b.contains_local(b.to_local(p)) {
                return b.surface_z();
            }
        }
        if let Some(o) = &self.object {
            if o.cell_at(p).is_some() {
                return o.top_z();
            }
        }
        0.0
    }
}

/// A seeded episode: configuration, state and the full F/T stream.
#[derive(Debug, Clone)]
pub struct World {
    pub cfg: SimConfig,
    pub seed: u64,
    pub state: SimState,
    ft: Vec<FtSample>,
    samples: u64,
    last_tick_start: usize,
}

const STREAM_SCENE: u64 = 1;
const STREAM_SENSOR: u64 = 2;

impl World {
    pub fn new(cfg: SimConfig, seed: u64) -> Result<Self, SimError> {
        cfg.validate().map_err(SimError::Config)?;
        let mut rng = Rng::derive(seed, STREAM_SCENE);
        let j = cfg.holder_jitter;
        let holder = cfg.holder + Vec3::new(rng.range(-j, j), rng.range(-j, j), 0.0);
        let kind = match cfg.task {
            Task::Wipe => ToolKind::Eraser,
            Task::Cut => ToolKind::Knife,
        };
        let tool = Tool {
            kind,
            tip: holder,
            rot: Quat::IDENTITY,
            length: cfg.tool_length,
            attached: false,
            grasp_offset: 0.0,
            ever_attached: false,
            released_in_zone: None,
        };
        let (board, object) = match cfg.task {
            Task::Wipe => (Some(random_board(&cfg, &mut rng)), None),
            Task::Cut => (
                None,
                Some(CutObject {
                    center: cfg.object_center,
                    length: cfg.object_length,
                    width: cfg.object_width,
                    height: cfg.object_height,
                    cells: alloc::vec![false; cfg.object_cells],
                }),
            ),
        };
        let state = SimState {
            clock: 0.0,
            tick: 0,
            ee: Pose::new(cfg.home, Quat::IDENTITY, cfg.gripper_max),
            tool,
            holder,
            board,
            object,
            rng: Rng::derive(seed, STREAM_SENSOR),
            normal_force: 0.0,
        };
        let mut w = World {
            cfg,
            seed,
            state,
            ft: Vec::new(),
            samples: 0,
            last_tick_start: 0,
        };
        for _ in 0..w.cfg.history_samples() {
            w.emit([0.0; 3], [0.0; 3]);
        }
        w.last_tick_start = w.ft.len().saturating_sub(w.cfg.samples_per_tick());
        Ok(w)
    }

    pub fn ft_stream(&self) -> &[FtSample] {
        &self.ft
    }

    /// Samples emitted during the most recent control tick.
    pub fn last_tick_samples(&self) -> &[FtSample] {
        &self.ft[self.last_tick_start..]
    }

    /// Mean sensed wrench over the most recent tick.
    pub fn sensed(&self) -> FtSample {
        let s = self.last_tick_samples();
        let n = s.len().max(1) as f64;
        let mut out = FtSample {
            t: s.last().map_or(0.0, |x| x.t),
            f: [0.0; 3],
            tau: [0.0; 3],
        };
        for x in s {
            for k in 0..3 {
                out.f[k] += x.f[k] / n;
                out.tau[k] += x.tau[k] / n;
            }
        }
        out
    }

    pub fn latest_sample(&self) -> FtSample {
        *self.ft.last().expect("stream always has history")
    }

    /// The `len` samples ending at the current time, front-padded with the
    /// earliest available sample.
    pub fn ft_window(&self, len: usize) -> Vec<[f64; 6]> {
        window_ending_at(&self.ft, self.ft.len(), len)
    }

    fn emit(&mut self, f: [f64; 3], tau: [f64; 3]) {
        self.samples += 1;
        let c = &self.cfg.contact;
        let (sf, st) = (c.noise_force, c.noise_torque);
        let rng = &mut self.state.rng;
        let mut s = FtSample {
            t: self.samples as f64 / self.cfg.ft_rate_hz,
            f,
            tau,
        };
        for k in 0..3 {
            s.f[k] += sf * rng.normal();
        }
        for k in 0..3 {
            s.tau[k] += st * rng.normal();
        }
        self.state.clock = s.t;
        self.ft.push(s);
    }

    /// Executes one control period toward `action`. Emits exactly
    /// `samples_per_tick` sensor readings.
    pub fn step(&mut self, action: &Pose) -> Result<&[FtSample], SimError> {
        if !action.is_finite() {
            return Err(SimError::NonFiniteAction);
        }
        let lo = self.cfg.workspace_lo;
        let hi = self.cfg.workspace_hi;
        let target = Vec3::new(
            action.pos.x.clamp(lo.x, hi.x),
            action.pos.y.clamp(lo.y, hi.y),
            action.pos.z.clamp(lo.z, hi.z),
        );
        let target_rot = action.rot.normalized();
        let target_width = action.width.clamp(0.0, self.cfg.gripper_max);
        let n = self.cfg.samples_per_tick();
        let dt = 1.0 / self.cfg.ft_rate_hz;
        let start = self.ft.len();
        for _ in 0..n {
            let (f, tau) = self.substep(target, target_rot, target_width, dt);
            self.emit(f, tau);
        }
        self.last_tick_start = start;
        self.state.tick += 1;
        Ok(&self.ft[start..])
    }

    fn substep(&mut self, target: Vec3, target_rot: Quat, target_width: f64, dt: f64) -> ([f64; 3], [f64; 3]) {
        let cfg = &self.cfg;
        let st = &mut self.state;
        let prev_tip = st.tool.tip;

        let delta = target - st.ee.pos;
        let dist = delta.norm();
        let max_step = cfg.max_speed * dt;
        st.ee.pos = if dist <= max_step {
            target
        } else {
            st.ee.pos + delta.scale(max_step / dist)
        };
        st.ee.rot = st.ee.rot.step_toward(target_rot, cfg.max_ang_speed * dt);

        let prev_width = st.ee.width;
        let dw = target_width - prev_width;
        let max_dw = cfg.gripper_speed * dt;
        st.ee.width = prev_width + dw.clamp(-max_dw, max_dw);
        let close_at = cfg.handle_width + 0.01;
        if !st.tool.attached && prev_width > close_at && st.ee.width <= close_at {
            let lateral = libm::hypot(st.ee.pos.x - st.tool.tip.x, st.ee.pos.y - st.tool.tip.y);
            let along = st.ee.pos.z - st.tool.tip.z;
            if lateral <= cfg.grasp_tolerance && along >= 0.01 && along <= st.tool.length {
                st.tool.attached = true;
                st.tool.ever_attached = true;
                st.tool.grasp_offset = along;
                st.tool.released_in_zone = None;
            }
        }
        if st.tool.attached {
            st.ee.width = st.ee.width.max(cfg.handle_width);
            if st.ee.width > close_at {
                st.tool.attached = false;
                let tip = st.tool.tip;
                let h = libm::hypot(tip.x - st.holder.x, tip.y - st.holder.y);
                st.tool.released_in_zone = Some(h <= cfg.place_radius);
                st.tool.rot = Quat::IDENTITY;
                st.tool.tip = Vec3::new(tip.x, tip.y, st.surface_at(tip));
            }
        }
        if !st.tool.attached {
            st.normal_force = 0.0;
            return ([0.0; 3], [0.0; 3]);
        }

        let axis = st.ee.rot.rotate(Vec3::new(0.0, 0.0, -1.0));
        st.tool.rot = st.ee.rot;
        st.tool.tip = st.ee.pos + axis.scale(st.tool.grasp_offset);
        let surface = st.surface_at(st.tool.tip);
        let k = cfg.contact.k_n;
        let mut fn_ = k * (surface - st.tool.tip.z);
        if fn_ > cfg.contact.slip_force {
            // The tool slides up in the fingers until the axial load drops.
            let slide = (fn_ - cfg.contact.slip_force) / k;
            st.tool.grasp_offset = (st.tool.grasp_offset - slide).max(0.0);
            st.tool.tip = st.ee.pos + axis.scale(st.tool.grasp_offset);
            fn_ = cfg.contact.slip_force;
        }
        if fn_ <= 0.0 {
            st.normal_force = 0.0;
            return ([0.0; 3], [0.0; 3]);
        }
        st.normal_force = fn_;
        let tip = st.tool.tip;
        let v = (tip - prev_tip).scale(1.0 / dt);
        let vt = libm::hypot(v.x, v.y);
        let (fx, fy) = if vt > 1e-6 {
            let s = -cfg.contact.mu * fn_ / vt;
            (s * v.x, s * v.y)
        } else {
            (0.0, 0.0)
        };
        let force = Vec3::new(fx, fy, fn_);

        match cfg.task {
            Task::Wipe => {
                if fn_ >= cfg.contact.wipe_min_force {
                    if let Some(b) = st.board.as_mut() {
                        erase_under(b, tip, cfg.footprint_radius);
                    }
                }
            }
            Task::Cut => {
                if fn_ >= cfg.contact.cut_impulse_threshold {
                    if let Some(o) = st.object.as_mut() {
                        if let Some(c) = o.cell_at(tip) {
                            o.cells[c] = true;
                        }
                    }
                }
            }
        }

        let torque = (tip - st.ee.pos).cross(force);
        let inv = st.ee.rot.conj();
        (inv.rotate(force).to_array(), inv.rotate(torque).to_array())
    }
}

fn erase_under(b: &mut Board, tip: Vec3, radius: f64) {
    let l = b.to_local(tip);
    if !b.contains_local(l) || tip.z > b.surface_z() {
        return;
    }
    for j in 0..b.grid[1] {
        for i in 0..b.grid[0] {
            let c = b.cell_center_local(i, j);
            let k = j * b.grid[0] + i;
            if b.marks[k] && libm::hypot(c[0] - l[0], c[1] - l[1]) <= radius {
                b.marks[k] = false;
                b.erased += 1;
            }
        }
    }
}

fn random_board(cfg: &SimConfig, rng: &mut Rng) -> Board {
    let j = cfg.board_jitter;
    let center = cfg.board_center + Vec3::new(rng.range(-j, j), rng.range(-j, j), 0.0);
    let yaw = rng.range(-cfg.board_yaw_jitter, cfg.board_yaw_jitter);
    let cells = cfg.board_grid[0] * cfg.board_grid[1];
    let frac = rng.range(cfg.mark_fraction[0], cfg.mark_fraction[1]);
    let count = (libm::round(frac * cells as f64) as usize).clamp(1, cells);
    let mut order: Vec<usize> = (0..cells).collect();
    rng.shuffle(&mut order);
    let mut marks = alloc::vec![false; cells];
    for &c in &order[..count] {
        marks[c] = true;
    }
    Board {
        center,
        yaw,
        size: cfg.board_size,
        thickness: cfg.board_thickness,
        grid: cfg.board_grid,
        ever_marked: marks.clone(),
        marks,
        erased: 0,
    }
}

/// `len` rows ending just before index `end` of `stream`, front-padded with
/// the earliest sample.
pub fn window_ending_at(stream: &[FtSample], end: usize, len: usize) -> Vec<[f64; 6]> {
    let mut out = Vec::with_capacity(len);
    if stream.is_empty() || end == 0 {
        out.resize(len, [0.0; 6]);
        return out;
    }
    let end = end.min(stream.len());
    let start = end.saturating_sub(len);
    let first = stream[start].row();
    for _ in 0..len - (end - start) {
        out.push(first);
    }
    for s in &stream[start..end] {
        out.push(s.row());
    }
    out
}

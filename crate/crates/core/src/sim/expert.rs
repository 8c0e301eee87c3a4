//! Scripted phase-machine demonstrator. It reads privileged scene geometry
//! (tool, board, object poses) but finds contact through the sensed force,
//! the way a teleoperator relies on haptic feedback.

use alloc::vec::Vec;

use super::config::Task;
use super::world::World;
use super::SimError;
use crate::geom::{Pose, Quat, Vec3};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExpertAction {
    Move(Pose),
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Approach,
    DescendGrasp,
    Close,
    Lift,
    Transit,
    FastDescend,
    SlowDescend,
    Sweep,
    LiftOff,
    Hover,
    CutTransit,
    CutPress,
    CutLift,
    TransitBack,
    PlaceDescend,
    Open,
    Retreat,
    Done,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Approach => "approach",
            Phase::DescendGrasp => "descend_grasp",
            Phase::Close => "close",
            Phase::Lift => "lift",
            Phase::Transit => "transit",
            Phase::FastDescend => "fast_descend",
            Phase::SlowDescend => "slow_descend",
            Phase::Sweep => "sweep",
            Phase::LiftOff => "lift_off",
            Phase::Hover => "hover",
            Phase::CutTransit => "cut_transit",
            Phase::CutPress => "cut_press",
            Phase::CutLift => "cut_lift",
            Phase::TransitBack => "transit_back",
            Phase::PlaceDescend => "place_descend",
            Phase::Open => "open",
            Phase::Retreat => "retreat",
            Phase::Done => "done",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExpertParams {
    pub transit_speed: f64,
    pub sweep_speed: f64,
    pub probe_step: f64,
    pub press_step: f64,
    pub contact_force: f64,
    pub force_band: [f64; 2],
    pub cut_force: f64,
    pub hover_clearance: f64,
    pub max_resweeps: usize,
    pub phase_timeout: usize,
}

impl Default for ExpertParams {
    fn default() -> Self {
        Self {
            transit_speed: 0.012,
            sweep_speed: 0.012,
            probe_step: 0.002,
            press_step: 0.005,
            contact_force: 3.0,
            force_band: [2.5, 5.5],
            cut_force: 12.0,
            hover_clearance: 0.04,
            max_resweeps: 3,
            phase_timeout: 80,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Expert {
    pub params: ExpertParams,
    pub phase: Phase,
    phase_ticks: usize,
    /// Intended grasp height above the tool tip.
    pub grasp_height: f64,
    /// Clearance left by the fast descent before probing for contact.
    probe_gap: f64,
    cmd: Option<Pose>,
    sweep_z: f64,
    waypoints: Vec<Vec3>,
    waypoint: usize,
    resweeps: usize,
    hold: usize,
    pub cut_positions: Vec<f64>,
    cut_index: usize,
}

const TOL: f64 = 0.003;

impl Expert {
    pub fn new(world: &World, seed: u64) -> Self {
        let mut rng = Rng::derive(seed, 3);
        let cfg = &world.cfg;
        let spread = cfg.grasp_spread * cfg.tool_length;
        let grasp_height = cfg.grasp_height + rng.range(-spread, spread);
        let probe_gap = rng.range(0.005, 0.02);
        let k = cfg.cuts;
        let cut_positions = (0..k)
            .map(|i| (i + 1) as f64 / (k + 1) as f64 + rng.range(-cfg.cut_jitter, cfg.cut_jitter))
            .collect();
        Self {
            params: ExpertParams::default(),
            phase: Phase::Approach,
            phase_ticks: 0,
            grasp_height,
            probe_gap,
            cmd: None,
            sweep_z: 0.0,
            waypoints: Vec::new(),
            waypoint: 0,
            resweeps: 0,
            hold: 0,
            cut_positions,
            cut_index: 0,
        }
    }

    fn enter(&mut self, p: Phase) {
        self.phase = p;
        self.phase_ticks = 0;
        self.hold = 0;
    }

    fn offset(&self, w: &World) -> f64 {
        if w.state.tool.attached {
            w.state.tool.grasp_offset
        } else {
            self.grasp_height
        }
    }

    fn surface(w: &World) -> f64 {
        match (&w.state.board, &w.state.object) {
            (Some(b), _) => b.surface_z(),
            (_, Some(o)) => o.top_z(),
            _ => 0.0,
        }
    }

    /// Moves the command toward `goal` at `speed` per tick; true once the
    /// command sits on the goal and the end-effector has caught up.
    fn toward(&mut self, w: &World, goal: Vec3, width: f64, speed: f64) -> (Pose, bool) {
        let cmd = self.cmd.unwrap_or(w.state.ee);
        let d = goal - cmd.pos;
        let n = d.norm();
        let pos = if n <= speed { goal } else { cmd.pos + d.scale(speed / n) };
        let pose = Pose::new(pos, Quat::IDENTITY, width);
        let reached = n <= speed && (w.state.ee.pos - goal).norm() <= TOL;
        (pose, reached)
    }

    fn sweep_waypoints(w: &World) -> Vec<Vec3> {
        let Some(b) = &w.state.board else {
            return Vec::new();
        };
        let r = w.cfg.footprint_radius;
        let passes = libm::ceil(b.size[1] / (1.6 * r)).max(1.0) as usize;
        let xe = b.size[0] / 2.0 - 0.6 * r;
        let mut pts = Vec::with_capacity(2 * passes);
        for k in 0..passes {
            let y = -b.size[1] / 2.0 + (k as f64 + 0.5) * b.size[1] / passes as f64;
            let (a, c) = if k % 2 == 0 { (-xe, xe) } else { (xe, -xe) };
            pts.push(b.to_world(a, y, 0.0));
            pts.push(b.to_world(c, y, 0.0));
        }
        pts
    }

    pub fn act(&mut self, w: &World) -> Result<ExpertAction, SimError> {
        self.phase_ticks += 1;
        if self.phase_ticks > self.params.phase_timeout {
            return Err(SimError::ExpertFailed(self.phase.name()));
        }
        let p = self.params.clone();
        let open = w.cfg.gripper_max;
        let st = &w.state;
        let tool = st.tool.tip;
        let offset = self.offset(w);
        let surface = Self::surface(w);
        let ee = st.ee.pos;

        let pose = match self.phase {
            Phase::Approach => {
                let goal = Vec3::new(tool.x, tool.y, tool.z + self.grasp_height + 0.05);
                let (pose, done) = self.toward(w, goal, open, p.transit_speed);
                if done {
                    self.enter(Phase::DescendGrasp);
                }
                pose
            }
            Phase::DescendGrasp => {
                let goal = Vec3::new(tool.x, tool.y, tool.z + self.grasp_height);
                let (pose, done) = self.toward(w, goal, open, p.transit_speed);
                if done {
                    self.enter(Phase::Close);
                }
                pose
            }
            Phase::Close => {
                let pose = Pose::new(self.cmd.map_or(ee, |c| c.pos), Quat::IDENTITY, 0.0);
                if st.tool.attached {
                    self.hold += 1;
                    if self.hold >= 2 {
                        self.enter(Phase::Lift);
                    }
                } else if self.phase_ticks > 10 {
                    return Err(SimError::ExpertFailed("grasp"));
                }
                pose
            }
            Phase::Lift => {
                let goal = Vec3::new(ee.x, ee.y, surface + p.hover_clearance + 0.02 + offset);
                let (pose, done) = self.toward(w, goal, 0.0, p.transit_speed);
                if done {
                    self.enter(match w.cfg.task {
                        Task::Wipe => Phase::Transit,
                        Task::Cut => Phase::CutTransit,
                    });
                    self.waypoints = Self::sweep_waypoints(w);
                }
                pose
            }
            Phase::Transit => {
                if self.phase_ticks == 1 {
                    self.waypoints = Self::sweep_waypoints(w);
                }
                let start = self.waypoints[0];
                let goal = Vec3::new(start.x, start.y, surface + p.hover_clearance + offset);
                let (pose, done) = self.toward(w, goal, 0.0, p.transit_speed);
                if done {
                    self.enter(Phase::FastDescend);
                }
                pose
            }
            Phase::FastDescend => {
                let start = self.waypoints[0];
                let goal = Vec3::new(start.x, start.y, surface + self.probe_gap + offset);
                let (pose, done) = self.toward(w, goal, 0.0, 0.01);
                if done {
                    self.enter(Phase::SlowDescend);
                }
                pose
            }
            Phase::SlowDescend => {
                let cmd = self.cmd.unwrap_or(st.ee).pos;
                if w.sensed().f[2] >= p.contact_force {
                    self.sweep_z = cmd.z;
                    self.waypoint = 1;
                    self.enter(Phase::Sweep);
                    Pose::new(cmd, Quat::IDENTITY, 0.0)
                } else {
                    Pose::new(Vec3::new(cmd.x, cmd.y, cmd.z - p.probe_step), Quat::IDENTITY, 0.0)
                }
            }
            Phase::Sweep => {
                let fz = w.sensed().f[2];
                if fz < p.force_band[0] {
                    self.sweep_z -= 0.001;
                } else if fz > p.force_band[1] {
                    self.sweep_z += 0.001;
                }
                let wp = self.waypoints[self.waypoint];
                let cmd = self.cmd.unwrap_or(st.ee).pos;
                let flat = Vec3::new(wp.x - cmd.x, wp.y - cmd.y, 0.0);
                let n = flat.norm();
                let step = if n <= p.sweep_speed {
                    flat
                } else {
                    flat.scale(p.sweep_speed / n)
                };
                if n <= p.sweep_speed {
                    self.waypoint += 1;
                    if self.waypoint == self.waypoints.len() {
                        self.enter(Phase::LiftOff);
                    }
                }
                Pose::new(
                    Vec3::new(cmd.x + step.x, cmd.y + step.y, self.sweep_z),
                    Quat::IDENTITY,
                    0.0,
                )
            }
            Phase::LiftOff => {
                let cmd = self.cmd.unwrap_or(st.ee).pos;
                let goal = Vec3::new(cmd.x, cmd.y, surface + p.hover_clearance + offset);
                let (pose, done) = self.toward(w, goal, 0.0, p.transit_speed);
                if done {
                    self.enter(Phase::Hover);
                }
                pose
            }
            Phase::Hover => {
                let pose = self.cmd.unwrap_or(st.ee);
                if self.phase_ticks >= 3 {
                    let marked = st.board.as_ref().map_or(0, |b| b.marked_count());
                    if marked > 0 && self.resweeps < p.max_resweeps {
                        self.resweeps += 1;
                        self.enter(Phase::Transit);
                    } else {
                        self.enter(Phase::TransitBack);
                    }
                }
                pose
            }
            Phase::CutTransit => {
                let o = st.object.as_ref().ok_or(SimError::ExpertFailed("no object"))?;
                let x = o.x_at(self.cut_positions[self.cut_index]);
                let goal = Vec3::new(x, o.center.y, o.top_z() + 0.03 + offset);
                let (pose, done) = self.toward(w, goal, 0.0, p.transit_speed);
                if done {
                    self.enter(Phase::CutPress);
                }
                pose
            }
            Phase::CutPress => {
                let cmd = self.cmd.unwrap_or(st.ee).pos;
                if w.sensed().f[2] >= p.cut_force {
                    self.enter(Phase::CutLift);
                    Pose::new(cmd, Quat::IDENTITY, 0.0)
                } else {
                    Pose::new(Vec3::new(cmd.x, cmd.y, cmd.z - p.press_step), Quat::IDENTITY, 0.0)
                }
            }
            Phase::CutLift => {
                let cmd = self.cmd.unwrap_or(st.ee).pos;
                let top = st.object.as_ref().map_or(0.0, |o| o.top_z());
                let goal = Vec3::new(cmd.x, cmd.y, top + 0.03 + offset);
                let (pose, done) = self.toward(w, goal, 0.0, p.transit_speed);
                if done {
                    self.cut_index += 1;
                    self.enter(if self.cut_index < self.cut_positions.len() {
                        Phase::CutTransit
                    } else {
                        Phase::TransitBack
                    });
                }
                pose
            }
            Phase::TransitBack => {
                let marked = st.board.as_ref().map_or(0, |b| b.marked_count());
                if marked > 0 && self.resweeps < p.max_resweeps && self.phase_ticks > 1 {
                    self.resweeps += 1;
                    self.enter(Phase::Transit);
                }
                let h = st.holder;
                let goal = Vec3::new(h.x, h.y, h.z + 0.04 + offset);
                let (pose, done) = self.toward(w, goal, 0.0, p.transit_speed);
                if done {
                    self.enter(Phase::PlaceDescend);
                }
                pose
            }
            Phase::PlaceDescend => {
                let h = st.holder;
                let goal = Vec3::new(h.x, h.y, h.z + 0.003 + offset);
                let (pose, done) = self.toward(w, goal, 0.0, 0.01);
                if done {
                    self.enter(Phase::Open);
                }
                pose
            }
            Phase::Open => {
                let pose = Pose::new(self.cmd.map_or(ee, |c| c.pos), Quat::IDENTITY, open);
                if st.ee.width >= open - 1e-9 {
                    self.enter(Phase::Retreat);
                }
                pose
            }
            Phase::Retreat => {
                let goal = Vec3::new(ee.x, ee.y, w.cfg.home.z);
                let (pose, done) = self.toward(w, goal, open, p.transit_speed);
                if done {
                    self.enter(Phase::Done);
                    return Ok(ExpertAction::Done);
                }
                pose
            }
            Phase::Done => return Ok(ExpertAction::Done),
        };
        self.cmd = Some(pose);
        Ok(ExpertAction::Move(pose))
    }
}

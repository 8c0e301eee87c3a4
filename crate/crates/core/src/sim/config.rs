use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Task {
    /// Sustained surface force: erase marks from a whiteboard.
    #[default]
    Wipe,
    /// Short presses: notch an elongated object at evenly spaced points.
    Cut,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Wipe => "wipe",
            Task::Cut => "cut",
        }
    }

    pub fn parse(s: &str) -> Option<Task> {
        match s {
            "wipe" | "surface-wipe" => Some(Task::Wipe),
            "cut" | "notch-cut" => Some(Task::Cut),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ContactModel {
    /// Normal stiffness, N/m.
    pub k_n: f64,
    pub mu: f64,
    /// Normal force needed to erase marks under the tool footprint, N.
    pub wipe_min_force: f64,
    /// Normal force needed to notch a cell of the cut object, N.
    pub cut_impulse_threshold: f64,
    /// Per-axis sensor noise std for force (N) and torque (N·m).
    pub noise_force: f64,
    pub noise_torque: f64,
    /// Axial force at which the tool slides in the gripper, N.
    pub slip_force: f64,
}

impl Default for ContactModel {
    fn default() -> Self {
        Self {
            k_n: 1000.0,
            mu: 0.5,
            wipe_min_force: 2.0,
            cut_impulse_threshold: 10.0,
            noise_force: 0.3,
            noise_torque: 0.02,
            slip_force: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SimConfig {
    pub task: Task,
    pub contact: ContactModel,
    /// Workspace box, metres.
    pub workspace_lo: Vec3,
    pub workspace_hi: Vec3,
    /// Control period, s.
    pub control_period: f64,
    pub ft_rate_hz: f64,
    /// Sensor history recorded before the first control tick, s.
    pub ft_history_s: f64,
    pub max_speed: f64,
    pub max_ang_speed: f64,
    pub gripper_speed: f64,
    pub gripper_max: f64,

    pub tool_length: f64,
    pub handle_width: f64,
    pub footprint_radius: f64,
    /// Nominal grasp height above the tool tip, m.
    pub grasp_height: f64,
    /// Grasp height spread as a fraction of tool length (uniform ±).
    pub grasp_spread: f64,
    /// Lateral distance from the tool axis within which closing grasps it.
    pub grasp_tolerance: f64,
    pub holder: Vec3,
    pub holder_jitter: f64,
    pub place_radius: f64,
    pub home: Vec3,

    pub board_size: [f64; 2],
    pub board_thickness: f64,
    pub board_grid: [usize; 2],
    pub board_center: Vec3,
    pub board_jitter: f64,
    pub board_yaw_jitter: f64,
    pub mark_fraction: [f64; 2],

    pub object_length: f64,
    pub object_width: f64,
    pub object_height: f64,
    pub object_cells: usize,
    pub object_center: Vec3,
    pub cuts: usize,
    /// Expert cut-position jitter as a fraction of object length (uniform ±).
    pub cut_jitter: f64,

    pub cloud_noise: f64,
    pub image_size: usize,
    pub max_ticks: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            task: Task::Wipe,
            contact: ContactModel::default(),
            workspace_lo: Vec3::new(0.0, 0.0, 0.0),
            workspace_hi: Vec3::new(0.45, 0.60, 0.40),
            control_period: 0.1,
            ft_rate_hz: 100.0,
            ft_history_s: 2.0,
            max_speed: 0.15,
            max_ang_speed: 1.0,
            gripper_speed: 0.2,
            gripper_max: 0.08,
            tool_length: 0.10,
            handle_width: 0.02,
            footprint_radius: 0.025,
            grasp_height: 0.05,
            grasp_spread: 0.3,
            grasp_tolerance: 0.02,
            holder: Vec3::new(0.10, 0.15, 0.0),
            holder_jitter: 0.01,
            place_radius: 0.03,
            home: Vec3::new(0.20, 0.25, 0.25),
            board_size: [0.16, 0.12],
            board_thickness: 0.01,
            board_grid: [8, 6],
            board_center: Vec3::new(0.28, 0.36, 0.0),
            board_jitter: 0.04,
            board_yaw_jitter: 0.17,
            mark_fraction: [0.7, 1.0],
            object_length: 0.12,
            object_width: 0.03,
            object_height: 0.03,
            object_cells: 100,
            object_center: Vec3::new(0.28, 0.36, 0.0),
            cuts: 4,
            cut_jitter: 0.06,
            cloud_noise: 0.002,
            image_size: 32,
            max_ticks: 300,
        }
    }
}

impl SimConfig {
    pub fn for_task(task: Task) -> Self {
        Self {
            task,
            ..Self::default()
        }
    }

    /// F/T samples per control tick.
    pub fn samples_per_tick(&self) -> usize {
        libm::round(self.control_period * self.ft_rate_hz) as usize
    }

    pub fn history_samples(&self) -> usize {
        libm::round(self.ft_history_s * self.ft_rate_hz) as usize
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        let c = &self.contact;
        if !(c.k_n > 0.0) {
            return Err("k_n must be positive");
        }
        if !(c.mu >= 0.0 && c.noise_force >= 0.0 && c.noise_torque >= 0.0) {
            return Err("friction and noise must be non-negative");
        }
        if !(self.control_period > 0.0 && self.ft_rate_hz > 0.0) || self.samples_per_tick() == 0 {
            return Err("control period and sensor rate must be positive");
        }
        if self.board_grid[0] == 0 || self.board_grid[1] == 0 || self.object_cells == 0 {
            return Err("grid sizes must be positive");
        }
        if self.image_size == 0 {
            return Err("image size must be positive");
        }
        let lo = self.workspace_lo;
        let hi = self.workspace_hi;
        if !(hi.x > lo.x && hi.y > lo.y && hi.z > lo.z) {
            return Err("empty workspace");
        }
        if !(self.tool_length > 0.0) || !(self.grasp_spread >= 0.0 && self.grasp_spread < 0.5) {
            return Err("tool geometry out of range");
        }
        Ok(())
    }
}

//! Mid-episode perturbations: new marks on wiped cells, a relocated board,
//! or both.

use alloc::vec::Vec;

use super::config::SimConfig;
use super::world::{Board, SimState};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Disturbance {
    Rewrite,
    Move,
    RewriteMove,
}

impl Disturbance {
    pub fn name(self) -> &'static str {
        match self {
            Disturbance::Rewrite => "rewrite",
            Disturbance::Move => "move",
            Disturbance::RewriteMove => "rewrite+move",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rewrite" => Some(Disturbance::Rewrite),
            "move" => Some(Disturbance::Move),
            "rewrite+move" | "rewrite_move" => Some(Disturbance::RewriteMove),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DisturbanceEvent {
    pub rewritten: Vec<usize>,
    /// Board translation and rotation actually applied.
    pub moved: Option<(f64, f64, f64)>,
}

pub const REWRITE_FRACTION: [f64; 2] = [0.3, 0.6];
pub const MOVE_TRANSLATION: f64 = 0.05;
pub const MOVE_ROTATION: f64 = 0.2;

/// Re-marks a random 30-60% subset of the currently clean cells.
pub fn rewrite_marks(board: &mut Board, rng: &mut Rng) -> Vec<usize> {
    let mut clean: Vec<usize> = (0..board.marks.len()).filter(|&i| !board.marks[i]).collect();
    if clean.is_empty() {
        return clean;
    }
    let frac = rng.range(REWRITE_FRACTION[0], REWRITE_FRACTION[1]);
    let n = (libm::round(frac * clean.len() as f64) as usize).clamp(1, clean.len());
    rng.shuffle(&mut clean);
    clean.truncate(n);
    clean.sort_unstable();
    for &c in &clean {
        board.marks[c] = true;
        board.ever_marked[c] = true;
    }
    clean
}

/// Translates and rotates the board about its centre; marks are untouched.
pub fn move_board(board: &mut Board, dx: f64, dy: f64, dyaw: f64) {
    board.center.x += dx;
    board.center.y += dy;
    board.yaw += dyaw;
}

fn inside_workspace(board: &Board, cfg: &SimConfig) -> bool {
    let (lo, hi) = (cfg.workspace_lo, cfg.workspace_hi);
    board
        .corners()
        .iter()
        .all(|c| c.x >= lo.x && c.x <= hi.x && c.y >= lo.y && c.y <= hi.y)
}

fn random_move(board: &mut Board, cfg: &SimConfig, rng: &mut Rng) -> Option<(f64, f64, f64)> {
    for _ in 0..100 {
        let dx = rng.range(-MOVE_TRANSLATION, MOVE_TRANSLATION);
        let dy = rng.range(-MOVE_TRANSLATION, MOVE_TRANSLATION);
        let dyaw = rng.range(-MOVE_ROTATION, MOVE_ROTATION);
        let mut trial = board.clone();
        move_board(&mut trial, dx, dy, dyaw);
        if inside_workspace(&trial, cfg) {
            *board = trial;
            return Some((dx, dy, dyaw));
        }
    }
    None
}

/// Applies `kind` to the board. `RewriteMove` is exactly a rewrite followed
/// by a move drawn from the same generator.
pub fn apply_disturbance(state: &mut SimState, cfg: &SimConfig, kind: Disturbance, rng: &mut Rng) -> DisturbanceEvent {
    let mut ev = DisturbanceEvent::default();
    let Some(board) = state.board.as_mut() else {
        return ev;
    };
    if matches!(kind, Disturbance::Rewrite | Disturbance::RewriteMove) {
        ev.rewritten = rewrite_marks(board, rng);
    }
    if matches!(kind, Disturbance::Move | Disturbance::RewriteMove) {
        ev.moved = random_move(board, cfg, rng);
    }
    ev
}

//! Point-cloud and top-down image rendering of a [`SimState`].

use alloc::vec::Vec;

use super::config::SimConfig;
use super::world::SimState;
use super::{ImageGrid, PointCloud};
use crate::geom::Vec3;
use crate::rng::Rng;

pub const MARK_COLOR: [f64; 3] = [0.1, 0.1, 0.15];
pub const CLEAN_COLOR: [f64; 3] = [0.95, 0.95, 0.95];
pub const TABLE_COLOR: [f64; 3] = [0.5, 0.45, 0.4];
const TOOL_COLOR: [f64; 3] = [0.85, 0.2, 0.2];
const GRIPPER_COLOR: [f64; 3] = [0.2, 0.3, 0.9];
const HOLDER_COLOR: [f64; 3] = [0.2, 0.7, 0.3];
const OBJECT_COLOR: [f64; 3] = [0.9, 0.6, 0.2];
const NOTCH_COLOR: [f64; 3] = [0.35, 0.2, 0.05];

const TABLE_GRID: [usize; 2] = [9, 12];
const TOOL_POINTS: usize = 6;

fn push(out: &mut Vec<[f64; 6]>, p: Vec3, c: [f64; 3]) {
    out.push([p.x, p.y, p.z, c[0], c[1], c[2]]);
}

/// Samples the visible surfaces, adds isotropic position noise and crops to
/// the workspace. Deterministic in `(state, rng)`.
pub fn render_pointcloud(state: &SimState, cfg: &SimConfig, rng: &mut Rng) -> PointCloud {
    let mut pts = Vec::with_capacity(400);
    let lo = cfg.workspace_lo;
    let hi = cfg.workspace_hi;

    for j in 0..TABLE_GRID[1] {
        for i in 0..TABLE_GRID[0] {
            let p = Vec3::new(
                lo.x + (i as f64 + 0.5) * (hi.x - lo.x) / TABLE_GRID[0] as f64,
                lo.y + (j as f64 + 0.5) * (hi.y - lo.y) / TABLE_GRID[1] as f64,
                lo.z,
            );
            if state.surface_at(p) > lo.z {
                continue;
            }
            push(&mut pts, p, TABLE_COLOR);
        }
    }

    if let Some(b) = &state.board {
        let cs = b.cell_size();
        for j in 0..b.grid[1] {
            for i in 0..b.grid[0] {
                let c = b.cell_center_local(i, j);
                let col = if b.marks[j * b.grid[0] + i] { MARK_COLOR } else { CLEAN_COLOR };
                for (sx, sy) in [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)] {
                    push(&mut pts, b.to_world(c[0] + sx * cs[0], c[1] + sy * cs[1], b.surface_z()), col);
                }
            }
        }
    }

    if let Some(o) = &state.object {
        let n = o.cells.len();
        let stride = (n / 25).max(1);
        for c in (0..n).step_by(stride) {
            let x = o.x_at((c as f64 + 0.5) / n as f64);
            let notched = o.cells[c..(c + stride).min(n)].iter().any(|&v| v);
            let col = if notched { NOTCH_COLOR } else { OBJECT_COLOR };
            for dy in [-0.25, 0.25] {
                push(&mut pts, Vec3::new(x, o.center.y + dy * o.width, o.top_z()), col);
            }
        }
    }

    for k in 0..4 {
        let a = k as f64 * core::f64::consts::FRAC_PI_2;
        let p = state.holder + Vec3::new(0.02 * libm::cos(a), 0.02 * libm::sin(a), 0.002);
        push(&mut pts, p, HOLDER_COLOR);
    }

    let tool = &state.tool;
    let top = tool.top();
    for k in 0..TOOL_POINTS {
        let u = k as f64 / (TOOL_POINTS - 1) as f64;
        push(&mut pts, tool.tip + (top - tool.tip).scale(u), TOOL_COLOR);
    }

    let ee = state.ee;
    let side = ee.rot.rotate(Vec3::new(ee.width / 2.0 + 0.005, 0.0, 0.0));
    let up = ee.rot.rotate(Vec3::new(0.0, 0.0, 0.03));
    for p in [ee.pos + side, ee.pos - side, ee.pos + up, ee.pos + up + side, ee.pos + up - side] {
        push(&mut pts, p, GRIPPER_COLOR);
    }

    let sigma = cfg.cloud_noise;
    let mut points = Vec::with_capacity(pts.len());
    for mut p in pts {
        for v in p.iter_mut().take(3) {
            *v += sigma * rng.normal();
        }
        let inside = p[0] >= lo.x && p[0] <= hi.x && p[1] >= lo.y && p[1] <= hi.y && p[2] >= lo.z - 3.0 * sigma
            && p[2] <= hi.z;
        if inside {
            p[2] = p[2].max(lo.z);
            points.push(p);
        }
    }
    PointCloud { points }
}

/// Coarse top-down render: the table, board cells by mark state, the cut
/// object, the holder, the tool and the end-effector (blue intensity grows
/// with height).
pub fn render_image(state: &SimState, cfg: &SimConfig) -> ImageGrid {
    let n = cfg.image_size;
    let lo = cfg.workspace_lo;
    let hi = cfg.workspace_hi;
    let px = (hi.x - lo.x) / n as f64;
    let py = (hi.y - lo.y) / n as f64;
    let mut img = ImageGrid::filled(n, n, TABLE_COLOR);
    let pixel_of = |p: Vec3| -> Option<(usize, usize)> {
        let c = (p.x - lo.x) / px;
        let r = (p.y - lo.y) / py;
        if c < 0.0 || r < 0.0 || c >= n as f64 || r >= n as f64 {
            None
        } else {
            Some((r as usize, c as usize))
        }
    };
    for r in 0..n {
        for c in 0..n {
            let p = Vec3::new(lo.x + (c as f64 + 0.5) * px, lo.y + (r as f64 + 0.5) * py, 0.0);
            if let Some(b) = &state.board {
                if let Some(cell) = b.cell_at_local(b.to_local(p)) {
                    img.set(r, c, if b.marks[cell] { MARK_COLOR } else { CLEAN_COLOR });
                }
            }
            if let Some(o) = &state.object {
                if let Some(cell) = o.cell_at(p) {
                    img.set(r, c, if o.cells[cell] { NOTCH_COLOR } else { OBJECT_COLOR });
                }
            }
        }
    }
    if let Some((r, c)) = pixel_of(state.holder) {
        img.set(r, c, HOLDER_COLOR);
    }
    if let Some((r, c)) = pixel_of(state.tool.tip) {
        img.set(r, c, TOOL_COLOR);
    }
    if let Some((r, c)) = pixel_of(state.ee.pos) {
        let h = ((state.ee.pos.z - lo.z) / (hi.z - lo.z)).clamp(0.0, 1.0);
        img.set(r, c, [0.1, 0.1, 0.3 + 0.7 * h]);
    }
    img
}

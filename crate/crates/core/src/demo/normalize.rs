//! Affine maps between workspace units and the `[-1, 1]` training range.

use core::sync::atomic::{AtomicUsize, Ordering};

use crate::geom::{Pose, Quat, Vec3, POSE_DIM};
use crate::sim::SimConfig;

/// Per-axis affine map of the workspace box and the gripper range onto
/// `[-1, 1]`. Out-of-range inputs are clamped and counted.
#[derive(Debug)]
pub struct Normalizer {
    pub lo: Vec3,
    pub hi: Vec3,
    pub width_range: [f64; 2],
    clamped: AtomicUsize,
}

impl Clone for Normalizer {
    fn clone(&self) -> Self {
        Self {
            lo: self.lo,
            hi: self.hi,
            width_range: self.width_range,
            clamped: AtomicUsize::new(self.clamped()),
        }
    }
}

impl PartialEq for Normalizer {
    fn eq(&self, o: &Self) -> bool {
        self.lo == o.lo && self.hi == o.hi && self.width_range == o.width_range
    }
}

fn to_unit(v: f64, lo: f64, hi: f64) -> f64 {
    2.0 * (v - lo) / (hi - lo) - 1.0
}

fn from_unit(u: f64, lo: f64, hi: f64) -> f64 {
    lo + (u + 1.0) * 0.5 * (hi - lo)
}

impl Normalizer {
    pub fn new(lo: Vec3, hi: Vec3, width_range: [f64; 2]) -> Self {
        Self {
            lo,
            hi,
            width_range,
            clamped: AtomicUsize::new(0),
        }
    }

    pub fn from_sim(cfg: &SimConfig) -> Self {
        Self::new(cfg.workspace_lo, cfg.workspace_hi, [0.0, cfg.gripper_max])
    }

    /// Number of coordinates clamped so far.
    pub fn clamped(&self) -> usize {
        self.clamped.load(Ordering::Relaxed)
    }

    fn clamp_count(&self, u: f64) -> f64 {
        if u < -1.0 || u > 1.0 {
            self.clamped.fetch_add(1, Ordering::Relaxed);
            u.clamp(-1.0, 1.0)
        } else {
            u
        }
    }

    pub fn point(&self, p: Vec3) -> Vec3 {
        Vec3::new(
            self.clamp_count(to_unit(p.x, self.lo.x, self.hi.x)),
            self.clamp_count(to_unit(p.y, self.lo.y, self.hi.y)),
            self.clamp_count(to_unit(p.z, self.lo.z, self.hi.z)),
        )
    }

    pub fn unpoint(&self, u: Vec3) -> Vec3 {
        Vec3::new(
            from_unit(u.x, self.lo.x, self.hi.x),
            from_unit(u.y, self.lo.y, self.hi.y),
            from_unit(u.z, self.lo.z, self.hi.z),
        )
    }

    pub fn width(&self, w: f64) -> f64 {
        self.clamp_count(to_unit(w, self.width_range[0], self.width_range[1]))
    }

    pub fn unwidth(&self, u: f64) -> f64 {
        from_unit(u, self.width_range[0], self.width_range[1])
    }

    /// `[px, py, pz, qw, qx, qy, qz, width]` in normalized units; the
    /// quaternion is already bounded and passes through.
    pub fn pose(&self, p: &Pose) -> [f64; POSE_DIM] {
        let n = self.point(p.pos);
        let q = p.rot;
        [n.x, n.y, n.z, q.w, q.x, q.y, q.z, self.width(p.width)]
    }

    /// Inverse of [`Normalizer::pose`]; the quaternion is renormalized.
    pub fn unpose(&self, a: &[f64]) -> Pose {
        Pose::new(
            self.unpoint(Vec3::new(a[0], a[1], a[2])),
            Quat::new(a[3], a[4], a[5], a[6]).normalized(),
            self.unwidth(a[7]),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn norm() -> Normalizer {
        Normalizer::from_sim(&SimConfig::default())
    }

    #[test]
    fn center_and_corners() {
        let n = norm();
        let c = n.point(Vec3::new(0.225, 0.30, 0.20));
        assert!(c.x.abs() < 1e-15 && c.y.abs() < 1e-15 && c.z.abs() < 1e-15);
        assert_eq!(n.point(Vec3::new(0.0, 0.0, 0.0)), Vec3::new(-1.0, -1.0, -1.0));
        assert_eq!(n.point(Vec3::new(0.45, 0.60, 0.40)), Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(n.width(0.08), 1.0);
        assert_eq!(n.clamped(), 0);
    }

    #[test]
    fn round_trip() {
        let n = norm();
        let mut rng = Rng::seed(2);
        for _ in 0..1000 {
            let p = Pose::new(
                Vec3::new(rng.range(0.0, 0.45), rng.range(0.0, 0.6), rng.range(0.0, 0.4)),
                Quat::from_yaw(rng.range(-3.0, 3.0)),
                rng.range(0.0, 0.08),
            );
            let back = n.unpose(&n.pose(&p));
            assert!((back.pos - p.pos).norm() < 1e-6);
            assert!((back.width - p.width).abs() < 1e-6);
            assert!(back.rot.angle_to(p.rot) < 1e-6);
        }
    }

    #[test]
    fn out_of_bounds_clamped_and_counted() {
        let n = norm();
        assert_eq!(n.point(Vec3::new(0.5, 0.3, 0.2)).x, 1.0);
        assert_eq!(n.clamped(), 1);
    }
}

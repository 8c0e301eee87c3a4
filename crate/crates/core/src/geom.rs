//! Small fixed-size geometry: 3-vectors, unit quaternions, end-effector poses.

use core::ops::{Add, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        self.scale(s)
    }
}

/// Quaternion stored as (w, x, y, z).
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_yaw(yaw: f64) -> Self {
        let h = 0.5 * yaw;
        Quat::new(libm::cos(h), 0.0, 0.0, libm::sin(h))
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Quat::IDENTITY;
        }
        let a = axis.scale(1.0 / n);
        let h = 0.5 * angle;
        let s = libm::sin(h);
        Quat::new(libm::cos(h), a.x * s, a.y * s, a.z * s)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Quat::new(s[0], s[1], s[2], s[3])
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        libm::sqrt(self.dot(self))
    }

    pub fn scale(self, s: f64) -> Quat {
        Quat::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Unit quaternion in the same direction; a degenerate input maps to the
    /// identity. The sign is canonicalized so that `w >= 0`.
    pub fn normalized(self) -> Quat {
        let n = self.norm();
        if !(n > 1e-12) || !n.is_finite() {
            return Quat::IDENTITY;
        }
        let q = self.scale(1.0 / n);
        if q.w < 0.0 {
            q.scale(-1.0)
        } else {
            q
        }
    }

    pub fn conj(self) -> Quat {
        Quat::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self * o`.
    pub fn mul(self, o: Quat) -> Quat {
        Quat::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let t = u.cross(v).scale(2.0);
        v + t.scale(self.w) + u.cross(t)
    }

    /// Rotation angle to `o` in radians.
    pub fn angle_to(self, o: Quat) -> f64 {
        let d = libm::fabs(self.dot(o)).min(1.0);
        2.0 * libm::acos(d)
    }

    /// Rotates toward `target` by at most `max_angle` radians.
    pub fn step_toward(self, target: Quat, max_angle: f64) -> Quat {
        let target = if self.dot(target) < 0.0 {
            target.scale(-1.0)
        } else {
            target
        };
        let angle = self.angle_to(target);
        if angle <= max_angle || angle < 1e-12 {
            return target.normalized();
        }
        // slerp with fraction max_angle / angle
        let half = angle / 2.0;
        let t = max_angle / angle;
        let sin_half = libm::sin(half);
        let a = libm::sin((1.0 - t) * half) / sin_half;
        let b = libm::sin(t * half) / sin_half;
        Quat::new(
            a * self.w + b * target.w,
            a * self.x + b * target.x,
            a * self.y + b * target.y,
            a * self.z + b * target.z,
        )
        .normalized()
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// End-effector pose plus gripper opening: the 8-wide action/proprio record
/// laid out as `[px, py, pz, qw, qx, qy, qz, width]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Pose {
    pub pos: Vec3,
    pub rot: Quat,
    pub width: f64,
}

pub const POSE_DIM: usize = 8;

impl Pose {
    pub fn new(pos: Vec3, rot: Quat, width: f64) -> Self {
        Self { pos, rot, width }
    }

    pub fn to_array(self) -> [f64; POSE_DIM] {
        [
            self.pos.x, self.pos.y, self.pos.z, self.rot.w, self.rot.x, self.rot.y, self.rot.z,
            self.width,
        ]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Pose {
            pos: Vec3::from_slice(&s[0..3]),
            rot: Quat::from_slice(&s[3..7]),
            width: s[7],
        }
    }

    pub fn is_finite(self) -> bool {
        self.pos.is_finite() && self.rot.is_finite() && self.width.is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yaw_rotation() {
        let q = Quat::from_yaw(core::f64::consts::FRAC_PI_2);
        let v = q.rotate(Vec3::new(1.0, 0.0, 0.0));
        assert!((v.x).abs() < 1e-12 && (v.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_toward_caps_angle() {
        let a = Quat::IDENTITY;
        let b = Quat::from_yaw(1.0);
        let c = a.step_toward(b, 0.1);
        assert!((a.angle_to(c) - 0.1).abs() < 1e-3);
        assert_eq!(a.step_toward(b, 2.0), b.normalized());
    }

    #[test]
    fn degenerate_quat_normalizes_to_identity() {
        assert_eq!(Quat::new(0.0, 0.0, 0.0, 0.0).normalized(), Quat::IDENTITY);
    }
}

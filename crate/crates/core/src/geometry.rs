//! Rigid-body pose algebra on SO(3), SE(3) and SE(2).
//!
//! Quaternions are stored as `(w, x, y, z)` and multiplied with the Hamilton
//! convention. A pose `T` written `T^A_B` maps coordinates from frame `B` to
//! frame `A`, so `compose(a, b)` is the homogeneous product `a * b`.
//!
//! Every quaternion-producing operation renormalizes its result.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = [f64; 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("pose pitch {pitch_deg:.3} deg is too close to vertical for a heading")]
    DegeneratePitch { pitch_deg: f64 },
    #[error("quaternion has zero or non-finite norm")]
    ZeroQuaternion,
}

/// Largest pitch (away from level) for which a heading is still extracted.
pub const MAX_HEADING_PITCH_DEG: f64 = 89.0;

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

pub fn add3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale3(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

pub fn lerp3(a: Vec3, b: Vec3, s: f64) -> Vec3 {
    [
        a[0] + (b[0] - a[0]) * s,
        a[1] + (b[1] - a[1]) * s,
        a[2] + (b[2] - a[2]) * s,
    ]
}

/// Unit quaternion `(w, x, y, z)`.
///
/// The fields are private so that every value in circulation has unit norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuat {
    fn default() -> Self {
        Self::identity()
    }
}

impl UnitQuat {
    pub const fn identity() -> Self {
        Self {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Normalizes the given components.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-300 {
            return Err(GeometryError::ZeroQuaternion);
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Like [`UnitQuat::new`] but falls back to identity on a zero input.
    pub fn normalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self::new(w, x, y, z).unwrap_or_else(|_| Self::identity())
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = norm3(axis);
        if n < 1e-300 {
            return Self::identity();
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let k = s / n;
        Self::normalized(c, axis[0] * k, axis[1] * k, axis[2] * k)
    }

    pub fn from_rotation_vector(v: Vec3) -> Self {
        let angle = norm3(v);
        if angle < 1e-12 {
            return Self::normalized(1.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]);
        }
        Self::from_axis_angle(v, angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle([0.0, 0.0, 1.0], angle)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &UnitQuat) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn neg(&self) -> Self {
        Self {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Hamilton product `self ⊗ rhs`, renormalized.
    pub fn mul(&self, rhs: &UnitQuat) -> Self {
        let (a, b) = (self, rhs);
        Self::normalized(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    /// Representative with `w >= 0`. For `w == 0` the first non-zero vector
    /// component is made positive so the map stays idempotent.
    pub fn canonical(&self) -> Self {
        let flip = if self.w != 0.0 {
            self.w < 0.0
        } else if self.x != 0.0 {
            self.x < 0.0
        } else if self.y != 0.0 {
            self.y < 0.0
        } else {
            self.z < 0.0
        };
        if flip {
            self.neg()
        } else {
            *self
        }
    }

    /// Returns `self` or `-self`, whichever lies in the hemisphere of `reference`.
    pub fn aligned_to(&self, reference: &UnitQuat) -> Self {
        if self.dot(reference) < 0.0 {
            self.neg()
        } else {
            *self
        }
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let u = [self.x, self.y, self.z];
        let t = scale3(cross3(u, v), 2.0);
        add3(add3(v, scale3(t, self.w)), cross3(u, t))
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        let v = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        2.0 * v.atan2(self.w.abs())
    }

    /// Rotation vector (axis times angle) of the shortest representative.
    pub fn log(&self) -> Vec3 {
        let q = self.canonical();
        let v = [q.x, q.y, q.z];
        let vn = norm3(v);
        if vn < 1e-12 {
            return scale3(v, 2.0);
        }
        let angle = 2.0 * vn.atan2(q.w);
        scale3(v, angle / vn)
    }
}

/// Spherical linear interpolation from `q0` (s = 0) to `q1` (s = 1).
///
/// `q1` is first moved into the hemisphere of `q0`. Pairs that are nearly
/// orthogonal in quaternion space (rotations about 180 degrees apart) fall
/// back to normalized linear interpolation, as do nearly identical pairs.
pub fn slerp(q0: &UnitQuat, q1: &UnitQuat, s: f64) -> UnitQuat {
    if s == 0.0 {
        return *q0;
    }
    let q1 = q1.aligned_to(q0);
    if s == 1.0 {
        return q1;
    }
    let d = q0.dot(&q1).min(1.0);
    let nlerp = |a: f64, b: f64| {
        UnitQuat::normalized(
            a * q0.w + b * q1.w,
            a * q0.x + b * q1.x,
            a * q0.y + b * q1.y,
            a * q0.z + b * q1.z,
        )
    };
    if !(1e-6..=1.0 - 1e-12).contains(&d) {
        return nlerp(1.0 - s, s);
    }
    let theta = d.acos();
    let sin_t = theta.sin();
    nlerp(((1.0 - s) * theta).sin() / sin_t, (s * theta).sin() / sin_t)
}

/// Geodesic distance on SO(3), `||log(R0^T R1)||`, in `[0, pi]`.
pub fn geodesic_so3(r0: &UnitQuat, r1: &UnitQuat) -> f64 {
    r0.conjugate().mul(r1).angle()
}

/// Applies a rotation increment: `q_next = dq ⊗ q`.
pub fn quat_increment_apply(q: &UnitQuat, dq: &UnitQuat) -> UnitQuat {
    dq.mul(q)
}

/// Rotation increment taking `from` to `to` (`to = dq ⊗ from`), canonical.
pub fn quat_increment_between(from: &UnitQuat, to: &UnitQuat) -> UnitQuat {
    to.mul(&from.conjugate()).canonical()
}

/// Rigid transform in SE(3).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 7]", into = "[f64; 7]")]
pub struct Pose3 {
    pub rotation: UnitQuat,
    pub translation: Vec3,
}

impl From<[f64; 7]> for Pose3 {
    fn from(a: [f64; 7]) -> Self {
        Pose3 {
            translation: [a[0], a[1], a[2]],
            rotation: UnitQuat::normalized(a[3], a[4], a[5], a[6]),
        }
    }
}

impl From<Pose3> for [f64; 7] {
    fn from(p: Pose3) -> Self {
        p.to_array()
    }
}

impl Pose3 {
    pub const fn identity() -> Self {
        Self {
            rotation: UnitQuat::identity(),
            translation: [0.0; 3],
        }
    }

    pub fn new(rotation: UnitQuat, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(UnitQuat::identity(), t)
    }

    /// `[px, py, pz, qw, qx, qy, qz]`.
    pub fn to_array(&self) -> [f64; 7] {
        let t = self.translation;
        let q = self.rotation;
        [t[0], t[1], t[2], q.w, q.x, q.y, q.z]
    }

    pub fn compose(&self, b: &Pose3) -> Pose3 {
        Pose3 {
            rotation: self.rotation.mul(&b.rotation),
            translation: add3(self.rotation.rotate(b.translation), self.translation),
        }
    }

    pub fn inverse(&self) -> Pose3 {
        let r = self.rotation.conjugate();
        Pose3 {
            rotation: r,
            translation: scale3(r.rotate(self.translation), -1.0),
        }
    }

    pub fn transform_point(&self, p: Vec3) -> Vec3 {
        add3(self.rotation.rotate(p), self.translation)
    }

    /// Linear translation, slerp rotation.
    pub fn interpolate(&self, other: &Pose3, s: f64) -> Pose3 {
        Pose3 {
            rotation: slerp(&self.rotation, &other.rotation, s),
            translation: lerp3(self.translation, other.translation, s),
        }
    }

    /// Row-major 4x4 homogeneous matrix.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let r = self.rotation.to_matrix();
        let t = self.translation;
        [
            [r[0][0], r[0][1], r[0][2], t[0]],
            [r[1][0], r[1][1], r[1][2], t[1]],
            [r[2][0], r[2][1], r[2][2], t[2]],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    /// Lifts a planar pose to SE(3) at height `z` (yaw about +z).
    pub fn from_pose2(p: &Pose2, z: f64) -> Pose3 {
        Pose3::new(UnitQuat::rot_z(p.theta), [p.x, p.y, z])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

pub fn compose(a: &Pose3, b: &Pose3) -> Pose3 {
    a.compose(b)
}

pub fn inverse(p: &Pose3) -> Pose3 {
    p.inverse()
}

/// Planar pose; `theta` is kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl From<[f64; 3]> for Pose2 {
    fn from(a: [f64; 3]) -> Self {
        Pose2::new(a[0], a[1], a[2])
    }
}

impl From<Pose2> for [f64; 3] {
    fn from(p: Pose2) -> Self {
        [p.x, p.y, p.theta]
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn compose(&self, b: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.x + c * b.x - s * b.y,
            self.y + s * b.x + c * b.y,
            self.theta + b.theta,
        )
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.theta)
    }

    /// Expresses the world-frame vector `(dx, dy)` in this pose's frame.
    pub fn to_local(&self, dx: f64, dy: f64) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn heading(&self) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [c, s]
    }
}

/// Planar distance with the heading folded into a length through `fold_radius`.
pub fn dist_se2(a: &Pose2, b: &Pose2, fold_radius: f64) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dth = fold_radius * wrap_angle(a.theta - b.theta);
    (dx * dx + dy * dy + dth * dth).sqrt()
}

/// Default heading fold radius for [`dist_se2`], meters.
pub const DEFAULT_FOLD_RADIUS: f64 = 0.5;

/// Ground-plane projection: position `(x, y)` and the heading of the body
/// `+x` (forward) axis.
pub fn yaw_project(p: &Pose3) -> Result<Pose2, GeometryError> {
    let fwd = p.rotation.rotate([1.0, 0.0, 0.0]);
    let pitch = fwd[2].clamp(-1.0, 1.0).asin();
    if pitch.abs() > MAX_HEADING_PITCH_DEG.to_radians() {
        return Err(GeometryError::DegeneratePitch {
            pitch_deg: pitch.to_degrees(),
        });
    }
    Ok(Pose2::new(p.translation[0], p.translation[1], fwd[1].atan2(fwd[0])))
}

/// A value stamped with a time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timestamped<T> {
    pub t: f64,
    pub value: T,
}

impl<T> Timestamped<T> {
    pub fn new(t: f64, value: T) -> Self {
        Self { t, value }
    }
}

/// True when timestamps are finite and strictly increasing.
pub fn strictly_increasing<T>(stream: &[Timestamped<T>]) -> bool {
    stream.iter().all(|s| s.t.is_finite()) && stream.windows(2).all(|w| w[0].t < w[1].t)
}

/// Locates `t` in a time-ordered stream: the index `i` of the left sample and
/// the fraction `s` toward sample `i + 1`. `None` outside the stream span.
pub fn bracket<T>(stream: &[Timestamped<T>], t: f64) -> Option<(usize, f64)> {
    let first = stream.first()?;
    let last = stream.last()?;
    if !(t >= first.t && t <= last.t) {
        return None;
    }
    if stream.len() == 1 {
        return Some((0, 0.0));
    }
    let j = stream.partition_point(|s| s.t <= t);
    if j >= stream.len() {
        return Some((stream.len() - 2, 1.0));
    }
    let i = j - 1;
    let (t0, t1) = (stream[i].t, stream[j].t);
    Some((i, (t - t0) / (t1 - t0)))
}

/// Pose of a trajectory at `t`: linear in position, slerp in rotation.
pub fn interpolate_pose(stream: &[Timestamped<Pose3>], t: f64) -> Option<Pose3> {
    let (i, s) = bracket(stream, t)?;
    if s == 0.0 || stream.len() == 1 {
        return Some(stream[i].value);
    }
    Some(stream[i].value.interpolate(&stream[i + 1].value, s))
}

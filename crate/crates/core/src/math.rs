//! Vector, quaternion and time-series primitives shared by the model blocks.
//!
//! Quaternions are scalar-first with the Hamilton product. Orientation
//! quaternions map head-frame vectors into the reference frame:
//! `v_ref = q ∘ v_head ∘ q⁻¹`.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit-quaternion tolerance used when a caller hands in an orientation.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Right-handed cross product.
    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Rescales `self` to have L2 norm `target_norm`, keeping its direction.
    pub fn normalize_to(self, target_norm: f64) -> Result<Vec3> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateDirection);
        }
        Ok(self * (target_norm / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Angle between two non-zero vectors in radians.
    pub fn angle_to(self, other: Vec3) -> f64 {
        // atan2 form stays accurate for nearly parallel vectors
        self.cross(other).norm().atan2(self.dot(other))
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, k: f64) -> Vec3 {
        Vec3::new(self.x / k, self.y / k, self.z / k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Scalar-first Hamilton quaternion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Quaternion::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    pub fn from_vector(v: Vec3) -> Self {
        Quaternion::new(0.0, v.x, v.y, v.z)
    }

    pub fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Quaternion::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis * (s / n);
        Quaternion::new(c, a.x, a.y, a.z)
    }

    /// Exponential map of a rotation vector (axis times angle).
    pub fn from_rotation_vector(r: Vec3) -> Self {
        Quaternion::from_axis_angle(r, r.norm())
    }

    /// Shortest-arc rotation taking the direction of `from` onto the
    /// direction of `to`.
    pub fn from_two_vectors(from: Vec3, to: Vec3) -> Result<Self> {
        let a = from.normalize_to(1.0)?;
        let b = to.normalize_to(1.0)?;
        let d = a.dot(b);
        if d < -1.0 + 1e-12 {
            // antiparallel: any axis orthogonal to `a` works
            let helper = if a.x.abs() < 0.9 { Vec3::X } else { Vec3::Y };
            return Ok(Quaternion::from_axis_angle(a.cross(helper), std::f64::consts::PI));
        }
        let c = a.cross(b);
        Ok(Quaternion::new(1.0 + d, c.x, c.y, c.z).normalized())
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(self) -> Self {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn inverse(self) -> Self {
        let n2 = self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z;
        let c = self.conjugate();
        Quaternion::new(c.w / n2, c.x / n2, c.y / n2, c.z / n2)
    }

    pub fn is_unit(self) -> bool {
        (self.norm() - 1.0).abs() <= UNIT_TOLERANCE
    }

    /// Rotates a vector by this (unit) quaternion: `q ∘ v ∘ q⁻¹`.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        (self * Quaternion::from_vector(v) * self.conjugate()).vector()
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(self) -> f64 {
        2.0 * self.vector().norm().atan2(self.w.abs())
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    fn mul(self, r: Quaternion) -> Quaternion {
        Quaternion::new(
            self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        )
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;

    fn sub(self, r: Quaternion) -> Quaternion {
        Quaternion::new(self.w - r.w, self.x - r.x, self.y - r.y, self.z - r.z)
    }
}

impl Mul<f64> for Quaternion {
    type Output = Quaternion;

    fn mul(self, k: f64) -> Quaternion {
        Quaternion::new(self.w * k, self.x * k, self.y * k, self.z * k)
    }
}

/// Head-frame angular velocity implied by two consecutive orientation
/// samples, `ω_q = vec(2 q⁻¹ ∘ dq/dt)` with `dq/dt ≈ (q₁ − q₀)/dt`.
///
/// For head-to-reference quaternions this product order yields the rate
/// expressed in the head frame, which is where the gravity observer lives.
pub fn quat_derivative_body_rate(q0: Quaternion, q1: Quaternion, dt: f64) -> Result<Vec3> {
    check_step(dt)?;
    for q in [q0, q1] {
        if !q.is_unit() {
            return Err(Error::NonUnitQuaternion { norm: q.norm() });
        }
    }
    // q1 and -q1 encode the same rotation; keep the pair on one hemisphere
    let q1 = if dot4(q0, q1) < 0.0 { q1 * -1.0 } else { q1 };
    let q_dot = (q1 - q0) * (1.0 / dt);
    Ok((q0.inverse() * q_dot).vector() * 2.0)
}

fn dot4(a: Quaternion, b: Quaternion) -> f64 {
    a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z
}

pub(crate) fn check_step(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidStep(dt))
    }
}

/// Timestamped samples with strictly increasing times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries<T> {
    times: Vec<f64>,
    values: Vec<T>,
}

impl<T> Default for TimeSeries<T> {
    fn default() -> Self {
        TimeSeries {
            times: Vec::new(),
            values: Vec::new(),
        }
    }
}

impl<T> TimeSeries<T> {
    pub fn new(times: Vec<f64>, values: Vec<T>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::LengthMismatch(times.len(), values.len()));
        }
        for (i, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::Invalid(format!(
                    "timestamps must be strictly increasing (index {}: {} then {})",
                    i + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        if let Some(t) = times.iter().find(|t| !t.is_finite()) {
            return Err(Error::Invalid(format!("non-finite timestamp {t}")));
        }
        Ok(TimeSeries { times, values })
    }

    /// Builds a series on the uniform grid `t0 + k·dt`.
    pub fn uniform(t0: f64, dt: f64, values: Vec<T>) -> Self {
        let times = (0..values.len()).map(|k| t0 + k as f64 * dt).collect();
        TimeSeries { times, values }
    }

    /// Appends a sample; panics if `t` does not advance time.
    pub fn push(&mut self, t: f64, value: T) {
        if let Some(&last) = self.times.last() {
            assert!(t > last, "time must increase: {t} after {last}");
        }
        self.times.push(t);
        self.values.push(value);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn first_time(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &T)> {
        self.times.iter().copied().zip(self.values.iter())
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<T>) {
        (self.times, self.values)
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> TimeSeries<U> {
        TimeSeries {
            times: self.times.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }

    /// Keeps the samples with `start <= t <= end`.
    pub fn clip(&self, start: f64, end: f64) -> TimeSeries<T>
    where
        T: Clone,
    {
        let (times, values) = self
            .iter()
            .filter(|(t, _)| *t >= start && *t <= end)
            .map(|(t, v)| (t, v.clone()))
            .unzip();
        TimeSeries { times, values }
    }

    /// Mean sample spacing, if the spacing is uniform to within `rel_tol`
    /// of that mean.
    pub fn uniform_step(&self, rel_tol: f64) -> Option<f64> {
        if self.len() < 2 {
            return None;
        }
        let span = self.times[self.len() - 1] - self.times[0];
        let dt = span / (self.len() - 1) as f64;
        let uniform = self
            .times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= rel_tol * dt);
        uniform.then_some(dt)
    }
}

/// Fixed-step classical Runge-Kutta on any state that supports `x + k·dx`.
pub trait OdeState: Copy {
    fn add_scaled(self, k: f64, dx: Self) -> Self;
}

impl OdeState for f64 {
    fn add_scaled(self, k: f64, dx: f64) -> f64 {
        self + k * dx
    }
}

impl OdeState for Vec3 {
    fn add_scaled(self, k: f64, dx: Vec3) -> Vec3 {
        self + dx * k
    }
}

impl<const N: usize> OdeState for [f64; N] {
    fn add_scaled(self, k: f64, dx: Self) -> Self {
        let mut out = self;
        for (o, d) in out.iter_mut().zip(dx) {
            *o += k * d;
        }
        out
    }
}

/// One RK4 step of `dx/dt = f(x)` with inputs held constant over the step.
pub fn rk4<S: OdeState>(x: S, dt: f64, f: impl Fn(S) -> S) -> S {
    let k1 = f(x);
    let k2 = f(x.add_scaled(0.5 * dt, k1));
    let k3 = f(x.add_scaled(0.5 * dt, k2));
    let k4 = f(x.add_scaled(dt, k3));
    x.add_scaled(dt / 6.0, k1)
        .add_scaled(dt / 3.0, k2)
        .add_scaled(dt / 3.0, k3)
        .add_scaled(dt / 6.0, k4)
}

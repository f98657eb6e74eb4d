//! Central-nervous-system internal models and the gravity observer.
//!
//! The internal canal model, the predicted-motion laws, the internal
//! vertical estimate and the visual-vertical projection live here, together
//! with the complementary filter that splits measured GIA into gravity and
//! linear acceleration.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::math::{quat_derivative_body_rate, rk4, Quaternion, Vec3};
use crate::model::GRAVITY;
pub use crate::vestibular::lp_step as internal_lp_step;

/// Full internal-model state carried between steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InternalState {
    /// Lag state of the internal canal washout, per axis.
    pub scc_hat: Vec3,
    pub v_hat_s: Vec3,
    pub g_hat: Vec3,
    /// Observer gravity in the head frame.
    pub g: Vec3,
    /// Complementary-filter orientation, head to reference frame.
    pub q: Quaternion,
}

/// Differences between sensed signals and their internal predictions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConflictSignals {
    pub d_omega: Vec3,
    pub d_a: Vec3,
    pub d_v: Vec3,
    pub d_vv: Vec3,
}

/// Internal model of the canals, `τd·s / (τd·s + 1)`, one lag state per axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InternalCanal {
    pub tau_d: f64,
}

impl InternalCanal {
    pub fn derivative(&self, x: Vec3, omega_hat: Vec3) -> Vec3 {
        (omega_hat - x) / self.tau_d
    }

    pub fn output(&self, x: Vec3, omega_hat: Vec3) -> Vec3 {
        omega_hat - x
    }

    pub fn step(&self, x: Vec3, omega_hat: Vec3, dt: f64) -> (Vec3, Vec3) {
        let next = rk4(x, dt, |x| self.derivative(x, omega_hat));
        (next, self.output(next, omega_hat))
    }
}

/// `ω̂ = K_ω·ω + K_ωc·Δω`.
pub fn predicted_omega(omega: Vec3, d_omega: Vec3, k_omega: f64, k_omega_c: f64) -> Vec3 {
    omega * k_omega + d_omega * k_omega_c
}

/// `â = K_a·a + K_ac·Δa`.
pub fn predicted_acceleration(a: Vec3, d_a: Vec3, k_a: f64, k_ac: f64) -> Vec3 {
    a * k_a + d_a * k_ac
}

/// Solves `ω̂ = K_ω·ω + K_ωc·(ω_s − ω̂_s)` together with `ω̂_s = ω̂ − x̂`.
///
/// The internal canal has unit feedthrough, so the feedback is algebraic.
/// Returns `(ω̂, ω̂_s)`.
pub fn resolve_predicted_omega(
    omega: Vec3,
    omega_s: Vec3,
    scc_hat: Vec3,
    k_omega: f64,
    k_omega_c: f64,
) -> (Vec3, Vec3) {
    let omega_hat = (omega * k_omega + (omega_s + scc_hat) * k_omega_c) / (1.0 + k_omega_c);
    (omega_hat, omega_hat - scc_hat)
}

/// Internal GIA prediction and the signals derived from it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictedGia {
    pub f_hat: Vec3,
    pub f_hat_s: Vec3,
    pub a_hat_s: Vec3,
}

/// `f̂ = ĝ + â`, `f̂_s = f̂`, `â_s = f̂_s − v̂_s`.
pub fn predicted_gia(g_hat: Vec3, a_hat: Vec3, v_hat_s: Vec3) -> PredictedGia {
    let f_hat = g_hat + a_hat;
    let f_hat_s = f_hat;
    PredictedGia {
        f_hat,
        f_hat_s,
        a_hat_s: f_hat_s - v_hat_s,
    }
}

/// Solves `â = K_a·a + K_ac·(a_s − â_s)` with `â_s = ĝ + â − v̂_s`.
pub fn resolve_predicted_acceleration(a: Vec3, a_s: Vec3, g_hat: Vec3, v_hat_s: Vec3, k_a: f64, k_ac: f64) -> Vec3 {
    (a * k_a + (a_s - g_hat + v_hat_s) * k_ac) / (1.0 + k_ac)
}

/// Projection of the internal vertical onto the image plane (x-y).
pub fn sensed_vv_hat(g_hat: Vec3) -> Vec3 {
    Vec3::new(g_hat.x, g_hat.y, 0.0)
}

pub fn g_hat_derivative(d_vv: Vec3, d_v: Vec3, k_vvc: f64, k_vc: f64) -> Vec3 {
    d_vv * k_vvc + d_v * k_vc
}

/// One step of `dĝ/dt = K_vvc·Δvv + K_vc·Δv` with both conflicts held.
pub fn g_hat_step(g_hat: Vec3, d_vv: Vec3, d_v: Vec3, k_vvc: f64, k_vc: f64, dt: f64) -> Vec3 {
    rk4(g_hat, dt, |_| g_hat_derivative(d_vv, d_v, k_vvc, k_vc))
}

/// Attitude filter blending gyro integration with accelerometer tilt.
///
/// After propagating with the gyro, the orientation is rotated toward the
/// attitude implied by the accelerometer by `(1 − alpha)` of the tilt error.
/// `alpha` applies per step of `reference_dt`; other steps use
/// `alpha^(dt / reference_dt)` so the correction time constant is fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplementaryFilter {
    pub alpha: f64,
    pub reference_dt: f64,
    /// Accelerometer norm below which tilt correction is skipped, m/s².
    pub freefall_threshold: f64,
}

impl Default for ComplementaryFilter {
    fn default() -> Self {
        ComplementaryFilter {
            alpha: 0.98,
            reference_dt: 0.01,
            freefall_threshold: 0.5,
        }
    }
}

/// Reference-frame up axis. The head frame has x to the right, y up and z
/// pointing backward, so an upright head reads gravity along +y.
pub const UP: Vec3 = Vec3::Y;

impl ComplementaryFilter {
    pub fn step(&self, q: Quaternion, omega: Vec3, f: Vec3, dt: f64) -> Quaternion {
        let q = (q * Quaternion::from_rotation_vector(omega * dt)).normalized();
        if f.norm() < self.freefall_threshold {
            return q;
        }
        let f_ref = q.rotate(f);
        let axis = f_ref.cross(UP);
        let tilt = f_ref.angle_to(UP);
        let alpha = self.alpha.powf(dt / self.reference_dt);
        let correction = Quaternion::from_axis_angle(axis, (1.0 - alpha) * tilt);
        (correction * q).normalized()
    }
}

/// Orientation whose tilt maps the measured vertical `g` onto [`UP`], with
/// no heading component.
pub fn tilt_quaternion(g: Vec3) -> Result<Quaternion> {
    Quaternion::from_two_vectors(g, UP)
}

/// Advances the observer gravity with the body rate implied by `q0 → q1`:
/// `dg/dt = −ω_q × g`, then renormalizes to [`GRAVITY`].
pub fn gravity_observer_step(g: Vec3, q0: Quaternion, q1: Quaternion, dt: f64) -> Result<Vec3> {
    let omega_q = quat_derivative_body_rate(q0, q1, dt)?;
    let next = rk4(g, dt, |g| -omega_q.cross(g));
    next.normalize_to(GRAVITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    const TAU_D: f64 = 7.0;

    #[test]
    fn internal_canal_step_and_washout() {
        let canal = InternalCanal { tau_d: TAU_D };
        let (x, y) = canal.step(Vec3::ZERO, Vec3::ZERO, 0.01);
        assert_eq!((x, y), (Vec3::ZERO, Vec3::ZERO));

        let dt = 0.01;
        let u = Vec3::new(1.0, 0.0, 0.0);
        let mut x = Vec3::ZERO;
        let mut y = Vec3::ZERO;
        let n = (20.0 * TAU_D / dt).round() as usize;
        for k in 1..=n {
            (x, y) = canal.step(x, u, dt);
            let exact = (-(k as f64) * dt / TAU_D).exp();
            assert!((y.x - exact).abs() < 1e-3, "k={k}");
        }
        assert!(y.x.abs() < 1e-3);
    }

    #[test]
    fn predicted_motion_gains() {
        let w = predicted_omega(Vec3::X, Vec3::ZERO, 0.1, 10.0);
        assert_abs_diff_eq!(w.x, 0.1);
        let w = predicted_omega(Vec3::ZERO, Vec3::new(0.0, 0.2, 0.0), 0.1, 10.0);
        assert_abs_diff_eq!(w.y, 2.0, epsilon = 1e-15);
        assert_eq!(predicted_omega(Vec3::ZERO, Vec3::ZERO, 0.1, 10.0), Vec3::ZERO);

        let a = predicted_acceleration(Vec3::X, Vec3::ZERO, 0.1, 0.5);
        assert_abs_diff_eq!(a.x, 0.1);
        let a = predicted_acceleration(Vec3::ZERO, Vec3::new(0.4, 0.0, 0.0), 0.1, 0.5);
        assert_abs_diff_eq!(a.x, 0.2);
        assert_eq!(predicted_acceleration(Vec3::ZERO, Vec3::ZERO, 0.1, 0.5), Vec3::ZERO);
    }

    #[test]
    fn resolved_loops_satisfy_their_equations() {
        let omega = Vec3::new(0.3, -0.1, 0.7);
        let omega_s = Vec3::new(0.2, 0.05, 0.4);
        let x_hat = Vec3::new(0.01, -0.02, 0.03);
        let (w_hat, w_hat_s) = resolve_predicted_omega(omega, omega_s, x_hat, 0.1, 10.0);
        let rhs = predicted_omega(omega, omega_s - w_hat_s, 0.1, 10.0);
        assert!((w_hat - rhs).norm() < 1e-14);

        let (a, a_s) = (Vec3::new(1.0, 0.2, -0.4), Vec3::new(0.7, 0.1, -0.2));
        let g_hat = Vec3::new(0.1, 9.8, 0.0);
        let v_hat_s = Vec3::new(0.2, 9.7, 0.1);
        let a_hat = resolve_predicted_acceleration(a, a_s, g_hat, v_hat_s, 0.1, 0.5);
        let gia = predicted_gia(g_hat, a_hat, v_hat_s);
        let rhs = predicted_acceleration(a, a_s - gia.a_hat_s, 0.1, 0.5);
        assert!((a_hat - rhs).norm() < 1e-14);
    }

    #[test]
    fn predicted_gia_examples() {
        let g = Vec3::new(0.0, 0.0, 9.81);
        let p = predicted_gia(g, Vec3::ZERO, g);
        assert_eq!(p.f_hat, g);
        assert_eq!(p.f_hat_s, p.f_hat);
        assert_eq!(p.a_hat_s, Vec3::ZERO);
    }

    #[test]
    fn vv_hat_projection() {
        assert_eq!(sensed_vv_hat(Vec3::new(1.0, 2.0, 3.0)), Vec3::new(1.0, 2.0, 0.0));
        let up = Vec3::new(0.0, 9.81, 0.0);
        assert_eq!(sensed_vv_hat(up), up);
        let v = Vec3::new(-4.0, 0.5, 7.0);
        assert_eq!(sensed_vv_hat(sensed_vv_hat(v)), sensed_vv_hat(v));
    }

    #[test]
    fn g_hat_update() {
        let g = Vec3::new(0.1, 9.8, 0.2);
        assert_eq!(g_hat_step(g, Vec3::ZERO, Vec3::ZERO, 2.5, 2.5, 0.01), g);

        let d_v = Vec3::new(0.0, 0.0, 0.1);
        let mut g_hat = Vec3::ZERO;
        for _ in 0..100 {
            g_hat = g_hat_step(g_hat, Vec3::ZERO, d_v, 2.5, 2.5, 0.01);
        }
        assert_abs_diff_eq!(g_hat.z, 0.25, epsilon = 1e-12);

        // without visual gain only the vestibular conflict acts
        let d_vv = Vec3::new(3.0, -1.0, 0.0);
        let a = g_hat_step(g, d_vv, d_v, 0.0, 5.0, 0.01);
        let b = g_hat_step(g, Vec3::ZERO, d_v, 0.0, 5.0, 0.01);
        assert_eq!(a, b);

        // linear in the conflicts
        let d1 = g_hat_derivative(d_vv, d_v, 2.5, 2.5);
        let d2 = g_hat_derivative(d_vv * 2.0, d_v * 2.0, 2.5, 2.5);
        assert!((d2 - d1 * 2.0).norm() < 1e-15);
    }

    #[test]
    fn lp_is_shared() {
        let (v, f, w) = (Vec3::new(0.1, 9.0, 0.0), Vec3::new(0.0, 9.81, 0.3), Vec3::Z * 0.2);
        assert_eq!(
            internal_lp_step(v, f, w, 2.0, 0.01).to_array(),
            crate::vestibular::lp_step(v, f, w, 2.0, 0.01).to_array()
        );
    }

    #[test]
    fn complementary_filter_at_rest_stays_put() {
        let cf = ComplementaryFilter::default();
        let mut q = Quaternion::IDENTITY;
        for _ in 0..1000 {
            q = cf.step(q, Vec3::ZERO, Vec3::new(0.0, 9.81, 0.0), 0.01);
        }
        assert!(q.angle() < 1e-12);
    }

    #[test]
    fn complementary_filter_tracks_yaw() {
        // rotation about the vertical: accelerometer reading stays constant
        let cf = ComplementaryFilter::default();
        let rate = 0.3;
        let dt = 0.01;
        let mut q = Quaternion::IDENTITY;
        let n = (60.0 / dt) as usize;
        for k in 1..=n {
            q = cf.step(q, UP * rate, UP * GRAVITY, dt);
            let truth = Quaternion::from_axis_angle(UP, rate * k as f64 * dt);
            let err = (truth.conjugate() * q).angle();
            assert!(err.to_degrees() < 0.5, "k={k} err={}", err.to_degrees());
        }
    }

    #[test]
    fn complementary_filter_tracks_roll() {
        // roll about the forward axis: gravity rotates in the head frame
        let cf = ComplementaryFilter::default();
        let rate = 0.2;
        let dt = 0.01;
        let axis = Vec3::Z;
        let mut q = Quaternion::IDENTITY;
        let n = (60.0 / dt) as usize;
        for k in 1..=n {
            let t = k as f64 * dt;
            let truth = Quaternion::from_axis_angle(axis, rate * t);
            let f = truth.conjugate().rotate(UP * GRAVITY);
            q = cf.step(q, axis * rate, f, dt);
            let tilt = q.conjugate().rotate(UP).angle_to(f);
            assert!(tilt.to_degrees() < 0.5, "k={k}");
        }
    }

    #[test]
    fn complementary_filter_bounds_gyro_bias() {
        let cf = ComplementaryFilter::default();
        let dt = 0.01;
        let bias = Vec3::new(0.01, 0.0, 0.0);
        let f = UP * GRAVITY;
        let mut q = Quaternion::IDENTITY;
        let mut q_raw = Quaternion::IDENTITY;
        let n = (600.0 / dt) as usize;
        let mut worst = 0.0f64;
        let mut worst_raw = 0.0f64;
        for _ in 0..n {
            q = cf.step(q, bias, f, dt);
            q_raw = (q_raw * Quaternion::from_rotation_vector(bias * dt)).normalized();
            worst = worst.max(q.conjugate().rotate(UP).angle_to(UP));
            worst_raw = worst_raw.max(q_raw.conjugate().rotate(UP).angle_to(UP));
        }
        assert!(worst.to_degrees() < 2.0, "filtered {}", worst.to_degrees());
        // pure integration drifts without bound (wraps past 180 degrees)
        assert!(worst_raw.to_degrees() > 170.0, "raw {}", worst_raw.to_degrees());
    }

    #[test]
    fn complementary_filter_freefall_guard() {
        let cf = ComplementaryFilter::default();
        let q0 = Quaternion::from_axis_angle(Vec3::X, 0.3);
        let q = cf.step(q0, Vec3::ZERO, Vec3::new(0.0, 0.1, 0.0), 0.01);
        assert!((q.conjugate() * q0).angle() < 1e-12);
    }

    #[test]
    fn gravity_observer_examples() {
        let g = Vec3::new(0.0, GRAVITY, 0.0);
        let q = Quaternion::from_axis_angle(Vec3::X, 0.2);
        assert_eq!(gravity_observer_step(g, q, q, 0.01).unwrap(), g);

        // constant body rate about z: g rotates at -w in the head frame
        let w = 0.8;
        let dt = 0.01;
        let mut g = Vec3::new(0.0, GRAVITY, 0.0);
        let mut q = Quaternion::IDENTITY;
        for k in 1..=500 {
            let q1 = q * Quaternion::from_rotation_vector(Vec3::Z * (w * dt));
            let before = g;
            g = gravity_observer_step(g, q, q1, dt).unwrap();
            q = q1;
            // closed-form rotation of the previous sample
            let (s, c) = (-w * dt).sin_cos();
            let exact = Vec3::new(c * before.x - s * before.y, s * before.x + c * before.y, before.z);
            assert!((g - exact).norm() < 1e-6, "k={k}");
            assert_abs_diff_eq!(g.norm(), GRAVITY, epsilon = 1e-12);
        }
    }

    #[test]
    fn observer_stays_level_under_noisy_gyro() {
        let cf = ComplementaryFilter::default();
        let dt = 0.01;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let f = UP * GRAVITY;
        let mut q = Quaternion::IDENTITY;
        let mut g = f;
        let n = (25.0 * 60.0 / dt) as usize;
        let mut worst = 0.0f64;
        for _ in 0..n {
            let omega = Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            let q1 = cf.step(q, omega, f, dt);
            g = gravity_observer_step(g, q, q1, dt).unwrap();
            q = q1;
            worst = worst.max(g.angle_to(f));
        }
        assert!(worst.to_degrees() < 2.0, "worst {}", worst.to_degrees());
    }
}

//! Sensory organs: otoliths, semicircular canals and the otolith-canal
//! interaction that separates the sensed vertical from linear acceleration.

use serde::{Deserialize, Serialize};

use crate::math::{rk4, OdeState, Vec3};

/// Otolith transform. The afferent GIA equals the stimulus.
pub fn oto_sense(f: Vec3) -> Vec3 {
    f
}

/// Sensed linear acceleration, `a_s = f_s − v_s`.
pub fn sensed_acceleration(f_s: Vec3, v_s: Vec3) -> Vec3 {
    f_s - v_s
}

/// Per-axis controllable-canonical state of the canal filter
/// `τa·τd·s² / ((τa·s + 1)(τd·s + 1))`.
///
/// `pos` holds the first state of each axis and `vel` its derivative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SccState {
    pub pos: Vec3,
    pub vel: Vec3,
}

impl SccState {
    pub fn is_finite(&self) -> bool {
        self.pos.is_finite() && self.vel.is_finite()
    }
}

impl OdeState for SccState {
    fn add_scaled(self, k: f64, dx: Self) -> Self {
        SccState {
            pos: self.pos + dx.pos * k,
            vel: self.vel + dx.vel * k,
        }
    }
}

/// Semicircular-canal dynamics with adaptation (`tau_a`) and cupula
/// (`tau_d`) time constants, both in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Canal {
    pub tau_a: f64,
    pub tau_d: f64,
}

impl Canal {
    pub fn new(tau_a: f64, tau_d: f64) -> Self {
        Canal { tau_a, tau_d }
    }

    /// Monic denominator `s² + a1·s + a0`.
    fn coefficients(&self) -> (f64, f64) {
        let prod = self.tau_a * self.tau_d;
        (1.0 / prod, (self.tau_a + self.tau_d) / prod)
    }

    pub fn derivative(&self, s: SccState, omega: Vec3) -> SccState {
        let (a0, a1) = self.coefficients();
        SccState {
            pos: s.vel,
            vel: omega - s.pos * a0 - s.vel * a1,
        }
    }

    /// The numerator has the same degree as the denominator, so the output
    /// carries a unit feedthrough: `y = u − a0·x1 − a1·x2`.
    pub fn output(&self, s: SccState, omega: Vec3) -> Vec3 {
        let (a0, a1) = self.coefficients();
        omega - s.pos * a0 - s.vel * a1
    }

    /// Advances one step with `omega` held, returning the new state and the
    /// sensed angular velocity at the end of the step.
    pub fn step(&self, s: SccState, omega: Vec3, dt: f64) -> (SccState, Vec3) {
        let next = rk4(s, dt, |x| self.derivative(x, omega));
        (next, self.output(next, omega))
    }
}

/// Right-hand side of the otolith-canal interaction,
/// `dv/dt = (f − v)/τ − ω × v`.
pub fn vertical_derivative(v: Vec3, f: Vec3, omega: Vec3, tau: f64) -> Vec3 {
    (f - v) / tau - omega.cross(v)
}

/// One RK4 step of the sensed-vertical update with `f_s` and `omega_s` held.
/// The internal model's vertical estimate uses this same routine.
pub fn lp_step(v_s: Vec3, f_s: Vec3, omega_s: Vec3, tau: f64, dt: f64) -> Vec3 {
    rk4(v_s, dt, |v| vertical_derivative(v, f_s, omega_s, tau))
}

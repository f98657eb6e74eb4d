//! Motion sickness incidence from the vertical conflict.

use serde::{Deserialize, Serialize};

use crate::math::{rk4, Vec3};

/// Hill normalization of the conflict magnitude, `x / (1 + x)` with
/// `x = ‖Δv‖ / b`. Always in `[0, 1)`.
pub fn hill(d_v: Vec3, b: f64) -> f64 {
    let x = d_v.norm() / b;
    x / (1.0 + x)
}

/// Two cascaded first-order lag states realizing `P / (τ_I·s + 1)²`
/// (the gain `P` is applied at the output).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MsiState(pub [f64; 2]);

impl MsiState {
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MsiLag {
    pub tau_i: f64,
    /// Steady-state incidence in percent for a saturated Hill input.
    pub p: f64,
}

impl MsiLag {
    pub fn derivative(&self, x: [f64; 2], hill_value: f64) -> [f64; 2] {
        [(hill_value - x[0]) / self.tau_i, (x[0] - x[1]) / self.tau_i]
    }

    pub fn output(&self, s: MsiState) -> f64 {
        self.p * s.0[1]
    }

    /// Advances one step and returns the new state with MSI in percent.
    pub fn step(&self, s: MsiState, hill_value: f64, dt: f64) -> (MsiState, f64) {
        let next = MsiState(rk4(s.0, dt, |x| self.derivative(x, hill_value)));
        (next, self.output(next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const LAG: MsiLag = MsiLag { tau_i: 720.0, p: 85.0 };

    #[test]
    fn hill_examples() {
        assert_eq!(hill(Vec3::ZERO, 0.5), 0.0);
        assert_abs_diff_eq!(hill(Vec3::new(0.0, 0.5, 0.0), 0.5), 0.5, epsilon = 1e-15);
        // x = 9 → 9/10
        assert_abs_diff_eq!(hill(Vec3::new(4.5, 0.0, 0.0), 0.5), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn zero_input_stays_zero() {
        let mut s = MsiState::default();
        for _ in 0..1000 {
            let (n, m) = LAG.step(s, 0.0, 0.01);
            assert_eq!(m, 0.0);
            s = n;
        }
    }

    #[test]
    fn step_response_matches_repeated_pole() {
        let dt = 0.01;
        let mut s = MsiState::default();
        let n = (10.0 * LAG.tau_i / dt) as usize;
        let mut worst = 0.0f64;
        for k in 1..=n {
            let (next, m) = LAG.step(s, 1.0, dt);
            s = next;
            let t = k as f64 * dt / LAG.tau_i;
            let exact = LAG.p * (1.0 - (-t).exp() * (1.0 + t));
            worst = worst.max((m - exact).abs() / LAG.p);
        }
        assert!(worst < 1e-3, "relative error {worst}");
    }

    #[test]
    fn half_hill_settles_at_half_p() {
        let dt = 0.01;
        let mut s = MsiState::default();
        let mut m = 0.0;
        for _ in 0..(20.0 * LAG.tau_i / dt) as usize {
            (s, m) = LAG.step(s, 0.5, dt);
        }
        assert!((m - 42.5).abs() <= 0.1, "{m}");
    }

    #[test]
    fn decay_has_no_undershoot() {
        let dt = 0.1;
        let mut s = MsiState([0.8, 0.6]);
        let mut prev = LAG.output(s);
        let mut falling = false;
        for _ in 0..200_000 {
            let (n, m) = LAG.step(s, 0.0, dt);
            s = n;
            assert!(m >= 0.0);
            if m < prev {
                falling = true;
            } else {
                // once decaying, the repeated real pole never turns back up
                assert!(!falling, "oscillation at {m}");
            }
            prev = m;
        }
        assert!(prev < 1e-6);
    }

    proptest! {
        #[test]
        fn hill_in_unit_interval(x in 0.0..1e6f64, b in 0.01..10.0f64) {
            let h = hill(Vec3::new(x, 0.0, 0.0), b);
            prop_assert!((0.0..1.0).contains(&h));
        }

        #[test]
        fn hill_is_monotone(a in 0.0..100.0f64, d in 1e-6..100.0f64) {
            prop_assert!(hill(Vec3::X * a, 0.5) < hill(Vec3::X * (a + d), 0.5));
        }

        #[test]
        fn output_bounded(inputs in proptest::collection::vec(0.0..1.0f64, 1..50)) {
            let mut s = MsiState::default();
            for h in inputs {
                for _ in 0..200 {
                    let (n, m) = LAG.step(s, h, 1.0);
                    s = n;
                    prop_assert!((0.0..LAG.p).contains(&m));
                }
            }
        }
    }
}

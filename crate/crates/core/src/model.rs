//! The full observer loop: sensory organs, gravity observer, internal
//! models and the MSI stage, stepped at the IMU rate.
//!
//! Every continuous state of the loop is advanced together by one RK4 step
//! with the IMU sample, the observer gravity and the visual vertical held
//! over the step. Inside each derivative evaluation the blocks are evaluated
//! in a fixed order: canal and otolith, sensed vertical, internal canal with
//! its feedback solved algebraically, internal acceleration and GIA
//! prediction, internal vertical, visual-vertical projection, internal
//! gravity update, Hill function and the MSI lags.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::theta_g;
use crate::ingest::ImuSample;
use crate::internal::{
    g_hat_derivative, predicted_gia, resolve_predicted_acceleration, resolve_predicted_omega, sensed_vv_hat,
    tilt_quaternion, ComplementaryFilter, ConflictSignals, InternalCanal, InternalState,
};
use crate::math::{rk4, OdeState, TimeSeries, Vec3};
use crate::msi::{hill, MsiLag, MsiState};
use crate::vestibular::{oto_sense, sensed_acceleration, vertical_derivative, Canal, SccState};
use crate::vvp::theta_from_vv;

/// Magnitude of gravity used throughout, m/s².
pub const GRAVITY: f64 = 9.81;

/// Gains and time constants of the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSet {
    pub k_a: f64,
    pub k_omega: f64,
    pub k_omega_c: f64,
    pub k_ac: f64,
    pub k_vc: f64,
    pub k_vvc: f64,
    /// Otolith-canal interaction time constant, s.
    pub tau: f64,
    /// Canal adaptation time constant, s.
    pub tau_a: f64,
    /// Canal cupula time constant, s.
    pub tau_d: f64,
    /// MSI lag time constant, s.
    pub tau_i: f64,
    /// Hill half-saturation conflict, m/s².
    pub b: f64,
    /// Saturated incidence, percent.
    pub p: f64,
}

impl ParameterSet {
    /// Conventional 6-DoF SVC parameters.
    pub const SVC: ParameterSet = ParameterSet {
        k_a: 0.1,
        k_omega: 0.1,
        k_omega_c: 10.0,
        k_ac: 0.5,
        k_vc: 5.0,
        k_vvc: 0.0,
        tau: 2.0,
        tau_a: 190.0,
        tau_d: 7.0,
        tau_i: 720.0,
        b: 0.5,
        p: 85.0,
    };

    /// SVC with the visual-vertical pathway; the vertical feedback is split
    /// evenly between the vestibular and visual conflicts.
    pub const SVC_VV: ParameterSet = ParameterSet {
        k_vc: 2.5,
        k_vvc: 2.5,
        ..ParameterSet::SVC
    };

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("k_a", self.k_a),
            ("k_omega", self.k_omega),
            ("k_omega_c", self.k_omega_c),
            ("k_ac", self.k_ac),
            ("k_vc", self.k_vc),
            ("k_vvc", self.k_vvc),
            ("tau", self.tau),
            ("tau_a", self.tau_a),
            ("tau_d", self.tau_d),
            ("tau_i", self.tau_i),
            ("b", self.b),
            ("p", self.p),
        ];
        if let Some((name, v)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Config(format!("{name} must be finite, got {v}")));
        }
        for (name, v) in [
            ("tau", self.tau),
            ("tau_a", self.tau_a),
            ("tau_d", self.tau_d),
            ("tau_i", self.tau_i),
            ("b", self.b),
        ] {
            if v <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.p > 0.0 && self.p <= 100.0) {
            return Err(Error::Config(format!("p must be in (0, 100], got {}", self.p)));
        }
        // the algebraic feedback loops are singular at -1
        if self.k_omega_c <= -1.0 || self.k_ac <= -1.0 {
            return Err(Error::Config("feedback gains must exceed -1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "svc")]
    Svc,
    #[serde(rename = "svc-vv")]
    SvcVv,
}

impl Variant {
    pub fn preset(self) -> ParameterSet {
        match self {
            Variant::Svc => ParameterSet::SVC,
            Variant::SvcVv => ParameterSet::SVC_VV,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Svc => "svc",
            Variant::SvcVv => "svc-vv",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svc" => Ok(Variant::Svc),
            "svc-vv" => Ok(Variant::SvcVv),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected svc or svc-vv)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Starting value of the internal gravity estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GHatInit {
    /// Calibrated to the measured vertical at the start of the trial.
    #[default]
    Measured,
    /// Integral from zero.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelOptions {
    pub observer: ComplementaryFilter,
    pub ghat_init: GHatInit,
    /// Length of the stationary prefix averaged for the initial vertical, s.
    pub init_window: f64,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            observer: ComplementaryFilter::default(),
            ghat_init: GHatInit::Measured,
            init_window: 1.0,
        }
    }
}

/// Parameter file contents. Every key is optional and overrides the preset
/// named by `base` (or the variant's preset when `base` is absent).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterFile {
    pub base: Option<Variant>,
    pub k_a: Option<f64>,
    pub k_omega: Option<f64>,
    pub k_omega_c: Option<f64>,
    pub k_ac: Option<f64>,
    pub k_vc: Option<f64>,
    pub k_vvc: Option<f64>,
    pub tau: Option<f64>,
    pub tau_a: Option<f64>,
    pub tau_d: Option<f64>,
    pub tau_i: Option<f64>,
    pub b: Option<f64>,
    pub p: Option<f64>,
    pub cf_alpha: Option<f64>,
    pub freefall_threshold: Option<f64>,
    pub ghat_init: Option<GHatInit>,
    pub init_window: Option<f64>,
}

impl ParameterFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self, variant: Variant) -> Result<(ParameterSet, ModelOptions)> {
        let mut p = self.base.unwrap_or(variant).preset();
        let overrides = [
            (&mut p.k_a, self.k_a),
            (&mut p.k_omega, self.k_omega),
            (&mut p.k_omega_c, self.k_omega_c),
            (&mut p.k_ac, self.k_ac),
            (&mut p.k_vc, self.k_vc),
            (&mut p.k_vvc, self.k_vvc),
            (&mut p.tau, self.tau),
            (&mut p.tau_a, self.tau_a),
            (&mut p.tau_d, self.tau_d),
            (&mut p.tau_i, self.tau_i),
            (&mut p.b, self.b),
            (&mut p.p, self.p),
        ];
        for (slot, value) in overrides {
            if let Some(v) = value {
                *slot = v;
            }
        }
        p.validate()?;

        let mut o = ModelOptions::default();
        if let Some(a) = self.cf_alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("cf_alpha must be in [0, 1], got {a}")));
            }
            o.observer.alpha = a;
        }
        if let Some(t) = self.freefall_threshold {
            if !(t >= 0.0) {
                return Err(Error::Config(format!("freefall_threshold must be >= 0, got {t}")));
            }
            o.observer.freefall_threshold = t;
        }
        if let Some(g) = self.ghat_init {
            o.ghat_init = g;
        }
        if let Some(w) = self.init_window {
            if !(w > 0.0) {
                return Err(Error::Config(format!("init_window must be positive, got {w}")));
            }
            o.init_window = w;
        }
        Ok((p, o))
    }
}

/// Continuous states advanced by the integrator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Continuous {
    pub scc: SccState,
    pub v_s: Vec3,
    pub scc_hat: Vec3,
    pub v_hat_s: Vec3,
    pub g_hat: Vec3,
    pub msi: MsiState,
}

impl OdeState for Continuous {
    fn add_scaled(self, k: f64, d: Self) -> Self {
        Continuous {
            scc: self.scc.add_scaled(k, d.scc),
            v_s: self.v_s + d.v_s * k,
            scc_hat: self.scc_hat + d.scc_hat * k,
            v_hat_s: self.v_hat_s + d.v_hat_s * k,
            g_hat: self.g_hat + d.g_hat * k,
            msi: MsiState(self.msi.0.add_scaled(k, d.msi.0)),
        }
    }
}

/// Complete model state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub scc: SccState,
    pub v_s: Vec3,
    pub internal: InternalState,
    pub msi: MsiState,
    pub t: f64,
}

impl ModelState {
    fn continuous(&self) -> Continuous {
        Continuous {
            scc: self.scc,
            v_s: self.v_s,
            scc_hat: self.internal.scc_hat,
            v_hat_s: self.internal.v_hat_s,
            g_hat: self.internal.g_hat,
            msi: self.msi,
        }
    }

    fn with_continuous(mut self, c: Continuous) -> Self {
        self.scc = c.scc;
        self.v_s = c.v_s;
        self.internal.scc_hat = c.scc_hat;
        self.internal.v_hat_s = c.v_hat_s;
        self.internal.g_hat = c.g_hat;
        self.msi = c.msi;
        self
    }

    /// Name of the first block whose state is not finite.
    fn first_non_finite(&self) -> Option<&'static str> {
        let i = &self.internal;
        [
            ("scc", self.scc.is_finite()),
            ("lp", self.v_s.is_finite()),
            ("observer", i.q.is_finite() && i.g.is_finite()),
            ("internal_scc", i.scc_hat.is_finite()),
            ("internal_lp", i.v_hat_s.is_finite()),
            ("g_hat", i.g_hat.is_finite()),
            ("msi", self.msi.is_finite()),
        ]
        .into_iter()
        .find(|(_, ok)| !ok)
        .map(|(name, _)| name)
    }
}

/// Signals produced at one instant of the loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutputs {
    pub t: f64,
    pub msi: f64,
    pub hill: f64,
    pub omega_s: Vec3,
    pub a_s: Vec3,
    pub v_s: Vec3,
    pub omega_hat: Vec3,
    pub omega_hat_s: Vec3,
    pub a_hat: Vec3,
    pub f_hat: Vec3,
    pub a_hat_s: Vec3,
    pub v_hat_s: Vec3,
    pub vv_hat_s: Vec3,
    pub g: Vec3,
    pub g_hat: Vec3,
    pub conflicts: ConflictSignals,
}

impl StepOutputs {
    pub fn norm_dv(&self) -> f64 {
        self.conflicts.d_v.norm()
    }

    pub fn norm_dvv(&self) -> f64 {
        self.conflicts.d_vv.norm()
    }
}

#[derive(Clone, Copy)]
struct Held {
    f: Vec3,
    omega: Vec3,
    g: Vec3,
    vv_s: Option<Vec3>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Model {
    pub params: ParameterSet,
    pub options: ModelOptions,
}

impl Model {
    pub fn new(params: ParameterSet, options: ModelOptions) -> Result<Self> {
        params.validate()?;
        Ok(Model { params, options })
    }

    pub fn with_params(params: ParameterSet) -> Result<Self> {
        Model::new(params, ModelOptions::default())
    }

    /// Initial state from a stationary IMU prefix: the mean GIA over the
    /// prefix, rescaled to [`GRAVITY`], seeds the observer gravity, both
    /// vertical estimates and (by default) the internal gravity.
    pub fn init_state(&self, prefix: &TimeSeries<ImuSample>) -> Result<ModelState> {
        let n = prefix.len();
        let duration = match (prefix.first_time(), prefix.last_time()) {
            (Some(a), Some(b)) if n >= 2 => (b - a) * n as f64 / (n - 1) as f64,
            _ => 0.0,
        };
        let required = self.options.init_window;
        if duration + 1e-9 < required {
            return Err(Error::InsufficientInitWindow {
                available: duration,
                required,
            });
        }
        let sum = prefix.values().iter().fold(Vec3::ZERO, |acc, s| acc + s.f);
        let g0 = (sum / n as f64).normalize_to(GRAVITY)?;
        let q0 = tilt_quaternion(g0)?;
        let g_hat = match self.options.ghat_init {
            GHatInit::Measured => g0,
            GHatInit::Zero => Vec3::ZERO,
        };
        Ok(ModelState {
            scc: SccState::default(),
            v_s: g0,
            internal: InternalState {
                scc_hat: Vec3::ZERO,
                v_hat_s: g0,
                g_hat,
                g: g0,
                q: q0,
            },
            msi: MsiState::default(),
            t: prefix.first_time().unwrap_or(0.0),
        })
    }

    /// Derivative of the continuous states together with the algebraic
    /// signals at that point.
    fn evaluate(&self, x: &Continuous, h: &Held) -> (Continuous, StepOutputs) {
        let p = &self.params;
        let canal = Canal::new(p.tau_a, p.tau_d);
        let internal_canal = InternalCanal { tau_d: p.tau_d };
        let lag = MsiLag { tau_i: p.tau_i, p: p.p };

        // sensory organs
        let f_s = oto_sense(h.f);
        let omega_s = canal.output(x.scc, h.omega);
        let d_scc = canal.derivative(x.scc, h.omega);
        let d_v_s = vertical_derivative(x.v_s, f_s, omega_s, p.tau);
        let a_s = sensed_acceleration(f_s, x.v_s);

        // internal canal with its conflict feedback
        let (omega_hat, omega_hat_s) = resolve_predicted_omega(h.omega, omega_s, x.scc_hat, p.k_omega, p.k_omega_c);
        let d_scc_hat = internal_canal.derivative(x.scc_hat, omega_hat);

        // internal otolith path
        let a = h.f - h.g;
        let a_hat = resolve_predicted_acceleration(a, a_s, x.g_hat, x.v_hat_s, p.k_a, p.k_ac);
        let gia = predicted_gia(x.g_hat, a_hat, x.v_hat_s);
        let d_v_hat_s = vertical_derivative(x.v_hat_s, gia.f_hat_s, omega_hat_s, p.tau);

        // vertical conflicts drive the internal gravity
        let vv_hat_s = sensed_vv_hat(x.g_hat);
        let d_v = x.v_s - x.v_hat_s;
        let d_vv = match h.vv_s {
            Some(vv_s) => vv_s - vv_hat_s,
            None => Vec3::ZERO,
        };
        let d_g_hat = g_hat_derivative(d_vv, d_v, p.k_vvc, p.k_vc);

        let hill_value = hill(d_v, p.b);
        let d_msi = lag.derivative(x.msi.0, hill_value);

        let derivative = Continuous {
            scc: d_scc,
            v_s: d_v_s,
            scc_hat: d_scc_hat,
            v_hat_s: d_v_hat_s,
            g_hat: d_g_hat,
            msi: MsiState(d_msi),
        };
        let outputs = StepOutputs {
            t: 0.0,
            msi: lag.output(x.msi),
            hill: hill_value,
            omega_s,
            a_s,
            v_s: x.v_s,
            omega_hat,
            omega_hat_s,
            a_hat,
            f_hat: gia.f_hat,
            a_hat_s: gia.a_hat_s,
            v_hat_s: x.v_hat_s,
            vv_hat_s,
            g: h.g,
            g_hat: x.g_hat,
            conflicts: ConflictSignals {
                d_omega: omega_s - omega_hat_s,
                d_a: a_s - gia.a_hat_s,
                d_v,
                d_vv,
            },
        };
        (derivative, outputs)
    }

    /// Signals at `state` for the given held inputs, without advancing.
    pub fn observe(&self, state: &ModelState, f: Vec3, omega: Vec3, vv_s: Option<Vec3>) -> StepOutputs {
        let held = Held {
            f,
            omega,
            g: state.internal.g,
            vv_s,
        };
        let mut out = self.evaluate(&state.continuous(), &held).1;
        out.t = state.t;
        out
    }

    /// Advances the loop by `dt` with the IMU sample and visual vertical held.
    pub fn step(
        &self,
        state: &ModelState,
        f: Vec3,
        omega: Vec3,
        vv_s: Option<Vec3>,
        dt: f64,
    ) -> Result<(ModelState, StepOutputs)> {
        crate::math::check_step(dt)?;
        let t_next = state.t + dt;
        let diverged = |block| Error::NumericalDivergence { block, t: t_next };

        // gravity observer
        let q0 = state.internal.q;
        let q1 = self.options.observer.step(q0, omega, f, dt);
        if !q1.is_finite() {
            return Err(diverged("observer"));
        }
        let g =
            crate::internal::gravity_observer_step(state.internal.g, q0, q1, dt).map_err(|_| diverged("observer"))?;

        let held = Held { f, omega, g, vv_s };
        let x1 = rk4(state.continuous(), dt, |x| self.evaluate(&x, &held).0);

        let mut next = state.with_continuous(x1);
        next.internal.q = q1;
        next.internal.g = g;
        next.t = t_next;
        if let Some(block) = next.first_non_finite() {
            return Err(diverged(block));
        }
        let mut out = self.evaluate(&x1, &held).1;
        out.t = t_next;
        Ok((next, out))
    }

    /// Simulates a whole trial on a uniformly sampled IMU stream.
    ///
    /// `vv` must already be resampled onto the IMU timestamps; it is required
    /// for [`Variant::SvcVv`] and ignored for [`Variant::Svc`].
    pub fn run_trial(
        &self,
        imu: &TimeSeries<ImuSample>,
        vv: Option<&TimeSeries<Vec3>>,
        variant: Variant,
    ) -> Result<TrialResult> {
        let n = imu.len();
        let dt = trial_step(imu)?;
        let vv = match variant {
            Variant::Svc => None,
            Variant::SvcVv => {
                let vv = vv.ok_or_else(|| Error::Config("variant svc-vv requires a visual vertical series".into()))?;
                check_alignment(imu.times(), vv.times(), dt)?;
                Some(vv.values())
            }
        };

        let window = ((self.options.init_window / dt).round() as usize).clamp(1, n);
        let prefix = TimeSeries::new(imu.times()[..window].to_vec(), imu.values()[..window].to_vec())?;
        let mut state = self.init_state(&prefix)?;

        let samples = imu.values();
        let vv_at = |k: usize| vv.map(|v| v[k]);
        let mut result = TrialResult::with_capacity(n, self.params, self.options, variant);
        for k in 0..n {
            if k > 0 {
                let s = samples[k - 1];
                let dt_k = imu.times()[k] - imu.times()[k - 1];
                state = self.step(&state, s.f, s.omega, vv_at(k - 1), dt_k)?.0;
            }
            // signals at t_k see the sample that is held over the next interval
            let out = self.observe(&state, samples[k].f, samples[k].omega, vv_at(k));
            result.record(imu.times()[k], &out, vv_at(k));
        }
        result.finish();
        Ok(result)
    }
}

fn trial_step(imu: &TimeSeries<ImuSample>) -> Result<f64> {
    let n = imu.len();
    if n < 2 {
        return Err(Error::Invalid(format!("trial needs at least 2 IMU samples, got {n}")));
    }
    let t = imu.times();
    let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
    for (k, w) in t.windows(2).enumerate() {
        let gap = w[1] - w[0];
        if (gap - dt).abs() > 0.5 * dt {
            return Err(Error::Misaligned {
                index: k + 1,
                detail: format!("IMU spacing {gap} s deviates from nominal {dt} s by more than half a sample"),
            });
        }
    }
    Ok(dt)
}

fn check_alignment(imu: &[f64], vv: &[f64], dt: f64) -> Result<()> {
    if imu.len() != vv.len() {
        return Err(Error::Misaligned {
            index: imu.len().min(vv.len()),
            detail: format!("IMU has {} samples, visual vertical has {}", imu.len(), vv.len()),
        });
    }
    for (k, (a, b)) in imu.iter().zip(vv).enumerate() {
        if (a - b).abs() > 0.5 * dt {
            return Err(Error::Misaligned {
                index: k,
                detail: format!("IMU t={a} vs visual vertical t={b}"),
            });
        }
    }
    Ok(())
}

/// Per-sample outputs of one trial plus summary statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub variant: Variant,
    pub params: ParameterSet,
    pub options: ModelOptions,
    pub t: Vec<f64>,
    pub msi: Vec<f64>,
    pub norm_dv: Vec<f64>,
    pub norm_dvv: Vec<f64>,
    pub theta_vv: Vec<Option<f64>>,
    pub theta_g: Vec<Option<f64>>,
    pub mean_msi: f64,
    pub max_msi: f64,
}

impl TrialResult {
    fn with_capacity(n: usize, params: ParameterSet, options: ModelOptions, variant: Variant) -> Self {
        TrialResult {
            variant,
            params,
            options,
            t: Vec::with_capacity(n),
            msi: Vec::with_capacity(n),
            norm_dv: Vec::with_capacity(n),
            norm_dvv: Vec::with_capacity(n),
            theta_vv: Vec::with_capacity(n),
            theta_g: Vec::with_capacity(n),
            mean_msi: 0.0,
            max_msi: 0.0,
        }
    }

    fn record(&mut self, t: f64, out: &StepOutputs, vv_s: Option<Vec3>) {
        self.t.push(t);
        self.msi.push(out.msi);
        self.norm_dv.push(out.norm_dv());
        self.norm_dvv.push(out.norm_dvv());
        self.theta_vv.push(vv_s.map(theta_from_vv));
        self.theta_g.push(theta_g(out.g));
    }

    fn finish(&mut self) {
        let n = self.msi.len();
        if n > 0 {
            self.mean_msi = self.msi.iter().sum::<f64>() / n as f64;
            self.max_msi = self.msi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Hex SHA-256 of the parameters and model options that produced this
    /// result.
    pub fn params_hash(&self) -> String {
        params_hash(&self.params, &self.options)
    }

    /// Writes one row per sample: `t,msi,norm_dv,norm_dvv,theta_vv,theta_g`,
    /// preceded by a comment line carrying the parameter hash.
    pub fn write_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "# params_sha256={} variant={}", self.params_hash(), self.variant)?;
        writeln!(w, "t,msi,norm_dv,norm_dvv,theta_vv,theta_g")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for k in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.t[k],
                self.msi[k],
                self.norm_dv[k],
                self.norm_dvv[k],
                opt(self.theta_vv[k]),
                opt(self.theta_g[k])
            )?;
        }
        Ok(())
    }

    pub fn write_summary_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "variant,samples,duration,mean_msi,max_msi,params_sha256")?;
        let duration = match (self.t.first(), self.t.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        };
        writeln!(
            w,
            "{},{},{},{},{},{}",
            self.variant,
            self.len(),
            duration,
            self.mean_msi,
            self.max_msi,
            self.params_hash()
        )
    }
}

pub fn params_hash(params: &ParameterSet, options: &ModelOptions) -> String {
    #[derive(Serialize)]
    struct Provenance<'a> {
        params: &'a ParameterSet,
        options: &'a ModelOptions,
    }
    let json = serde_json::to_string(&Provenance { params, options }).expect("plain struct serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

/// Reads the `t` and `msi` columns of a file written by
/// [`TrialResult::write_csv`].
pub fn read_msi_csv(path: impl AsRef<Path>) -> Result<TimeSeries<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
    let header = lines.next().map(|(_, l)| l).unwrap_or_default();
    let cols: Vec<&str> = header.split(',').collect();
    let (Some(ti), Some(mi)) = (
        cols.iter().position(|c| *c == "t"),
        cols.iter().position(|c| *c == "msi"),
    ) else {
        return Err(Error::parse(path, 1, "expected `t` and `msi` columns"));
    };
    let (mut times, mut msi) = (Vec::new(), Vec::new());
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let num = |k: usize| -> Result<f64> {
            fields
                .get(k)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::parse(path, i as u64 + 1, format!("bad value in column {}", cols[k])))
        };
        times.push(num(ti)?);
        msi.push(num(mi)?);
    }
    TimeSeries::new(times, msi)
}

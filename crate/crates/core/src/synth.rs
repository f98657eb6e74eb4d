//! Synthetic inputs: slalom head motion and scenes with a known vertical.
//!
//! The slalom drives a sequence of semicircular arcs of alternating
//! direction in the horizontal plane. Each arc turns through 180° around its
//! own center, so consecutive arcs weave through a row of centers spaced one
//! diameter apart. Yaw rate changes between arcs with a linear blend.

use std::f64::consts::PI;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{frame_file_name, write_frame_index, ImuSample};
use crate::math::{Quaternion, TimeSeries, Vec3};
use crate::model::GRAVITY;
use crate::vvp::WINDOW;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlalomSpec {
    /// Diameter of each turn, m.
    pub rotation_diameter: f64,
    /// Number of turn centers per pass; 0 drives straight at constant speed.
    pub n_centers: usize,
    /// m/s
    pub max_speed: f64,
    /// m/s²
    pub max_accel: f64,
    /// s
    pub duration: f64,
    /// s
    pub dt: f64,
    /// Duration of each yaw-rate change between opposite arcs, s.
    pub blend: f64,
    /// Standstill before setting off, s.
    pub rest: f64,
    /// Lower the arc speed until the centripetal acceleration fits under
    /// `max_accel`. When false such a spec is rejected.
    pub clamp_speed: bool,
    /// Head roll as a fraction of the GIA tilt angle `atan2(a_lat, g)`.
    /// Zero keeps the head rigid with the vehicle.
    pub head_roll_gain: f64,
}

impl Default for SlalomSpec {
    fn default() -> Self {
        SlalomSpec {
            rotation_diameter: 2.5,
            n_centers: 4,
            max_speed: 6.0 / 3.6,
            max_accel: 1.7,
            duration: 1200.0,
            dt: 0.01,
            blend: 0.5,
            rest: 2.0,
            clamp_speed: true,
            head_roll_gain: 0.0,
        }
    }
}

/// Ground truth alongside the generated IMU stream, all in the head frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Slalom {
    pub imu: TimeSeries<ImuSample>,
    /// Gravity, norm [`GRAVITY`].
    pub gravity: Vec<Vec3>,
    /// Linear acceleration.
    pub accel: Vec<Vec3>,
    /// Speed along the path, m/s.
    pub speed: Vec<f64>,
    /// Yaw rate about the vertical, positive turning left, rad/s.
    pub yaw_rate: Vec<f64>,
    /// Head roll, rad.
    pub roll: Vec<f64>,
    /// Arc speed actually driven.
    pub arc_speed: f64,
    /// Set when the arc speed was lowered below `max_speed`.
    pub clamped: bool,
    /// Number of arcs turning left and right.
    pub arcs: (usize, usize),
}

/// Piecewise-linear profile through `(t, value)` knots, flat outside.
#[derive(Clone, Debug, Default)]
struct Profile {
    knots: Vec<(f64, f64)>,
}

impl Profile {
    fn push(&mut self, t: f64, v: f64) {
        self.knots.push((t, v));
    }

    /// Value and slope at `t`.
    fn eval(&self, t: f64, hint: &mut usize) -> (f64, f64) {
        let k = &self.knots;
        match k.len() {
            0 => return (0.0, 0.0),
            1 => return (k[0].1, 0.0),
            _ => {}
        }
        if t <= k[0].0 {
            return (k[0].1, 0.0);
        }
        if t >= k[k.len() - 1].0 {
            return (k[k.len() - 1].1, 0.0);
        }
        while *hint + 2 < k.len() && k[*hint + 1].0 <= t {
            *hint += 1;
        }
        let ((t0, v0), (t1, v1)) = (k[*hint], k[*hint + 1]);
        if t1 <= t0 {
            return (v1, 0.0);
        }
        let slope = (v1 - v0) / (t1 - t0);
        (v0 + slope * (t - t0), slope)
    }
}

fn infeasible(quantity: &'static str, value: f64, constraint: impl Into<String>) -> Error {
    Error::Infeasible {
        quantity,
        value,
        constraint: constraint.into(),
    }
}

impl SlalomSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rotation_diameter", self.rotation_diameter),
            ("max_speed", self.max_speed),
            ("max_accel", self.max_accel),
            ("dt", self.dt),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(infeasible(name, v, "must be positive and finite"));
            }
        }
        for (name, v) in [("duration", self.duration), ("blend", self.blend), ("rest", self.rest)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(infeasible(name, v, "must be non-negative and finite"));
            }
        }
        if !self.head_roll_gain.is_finite() {
            return Err(infeasible("head_roll_gain", self.head_roll_gain, "must be finite"));
        }
        if self.n_centers % 2 == 1 {
            return Err(infeasible(
                "n_centers",
                self.n_centers as f64,
                "must be even so left and right turns balance",
            ));
        }
        let radius = self.rotation_diameter / 2.0;
        let centripetal = self.max_speed * self.max_speed / radius;
        if self.n_centers > 0 && centripetal > self.max_accel && !self.clamp_speed {
            return Err(infeasible(
                "centripetal_accel",
                centripetal,
                format!("v²/r at max_speed exceeds max_accel {}", self.max_accel),
            ));
        }
        Ok(())
    }

    /// Speed on the arcs: `max_speed`, or lower if the acceleration limit
    /// binds on the turn radius.
    pub fn arc_speed(&self) -> (f64, bool) {
        let limit = (self.max_accel * self.rotation_diameter / 2.0).sqrt();
        if self.max_speed > limit {
            (limit, true)
        } else {
            (self.max_speed, false)
        }
    }

    pub fn samples(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// Generates the slalom head motion at `1/dt` Hz.
pub fn gen_slalom(spec: &SlalomSpec) -> Result<Slalom> {
    spec.validate()?;
    let n = spec.samples();
    let radius = spec.rotation_diameter / 2.0;

    let mut speed = Profile::default();
    let mut yaw = Profile::default();
    let (arc_speed, clamped, arcs);
    if spec.n_centers == 0 {
        arc_speed = spec.max_speed;
        clamped = false;
        arcs = (0, 0);
        speed.push(0.0, spec.max_speed);
    } else {
        (arc_speed, clamped) = spec.arc_speed();
        let r0 = arc_speed / radius;
        let ramp = arc_speed / spec.max_accel;
        // each arc turns 180° counting half of each adjoining blend
        let plateau = PI / r0 - spec.blend / 2.0;
        if plateau < 0.0 {
            return Err(infeasible(
                "blend",
                spec.blend,
                format!("must not exceed {} s", 2.0 * PI / r0),
            ));
        }
        let cycle = plateau + spec.blend;
        let budget = spec.duration - spec.rest - 2.0 * ramp;
        let count = if budget > 0.0 {
            (budget / cycle).floor() as usize
        } else {
            0
        };
        let count = count - count % 2;

        let go = spec.rest;
        let cruise = go + ramp;
        speed.push(go, 0.0);
        speed.push(cruise, arc_speed);
        yaw.push(cruise, 0.0);
        let mut t = cruise + spec.blend / 2.0;
        for k in 0..count {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            yaw.push(t, sign * r0);
            t += plateau;
            yaw.push(t, sign * r0);
            t += if k + 1 == count { spec.blend / 2.0 } else { spec.blend };
        }
        yaw.push(t, 0.0);
        let stop = if count == 0 { cruise } else { t };
        speed.push(stop, arc_speed);
        speed.push(stop + ramp, 0.0);
        arcs = (count / 2, count / 2);
    }

    let mut out = Slalom {
        imu: TimeSeries::default(),
        gravity: Vec::with_capacity(n),
        accel: Vec::with_capacity(n),
        speed: Vec::with_capacity(n),
        yaw_rate: Vec::with_capacity(n),
        roll: Vec::with_capacity(n),
        arc_speed,
        clamped,
        arcs,
    };
    let mut samples = Vec::with_capacity(n);
    let (mut hs, mut hy) = (0, 0);
    for k in 0..n {
        let t = k as f64 * spec.dt;
        let (v, v_dot) = speed.eval(t, &mut hs);
        let (r, r_dot) = yaw.eval(t, &mut hy);

        // vehicle frame: x right, y up, z backward
        let a_vehicle = Vec3::new(-r * v, 0.0, -v_dot);
        let lateral = r * v;
        let lateral_dot = r_dot * v + r * v_dot;
        let roll = spec.head_roll_gain * lateral.atan2(GRAVITY);
        let roll_rate = spec.head_roll_gain * GRAVITY * lateral_dot / (GRAVITY * GRAVITY + lateral * lateral);

        let to_head = Quaternion::from_axis_angle(Vec3::Z, -roll);
        let g = to_head.rotate(Vec3::new(0.0, GRAVITY, 0.0));
        let a = to_head.rotate(a_vehicle);
        let omega = to_head.rotate(Vec3::new(0.0, r, 0.0)) + Vec3::new(0.0, 0.0, roll_rate);

        samples.push(ImuSample { f: a + g, omega });
        out.gravity.push(g);
        out.accel.push(a);
        out.speed.push(v);
        out.yaw_rate.push(r);
        out.roll.push(roll);
    }
    out.imu = TimeSeries::uniform(0.0, spec.dt, samples);
    Ok(out)
}

/// Sensor imperfections added to a clean IMU stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Constant gyro offset per axis, rad/s.
    pub gyro_bias: [f64; 3],
    /// White gyro noise standard deviation, rad/s.
    pub gyro_sigma: f64,
    /// White accelerometer noise standard deviation, m/s².
    pub accel_sigma: f64,
}

impl NoiseSpec {
    pub fn is_zero(&self) -> bool {
        self.gyro_bias == [0.0; 3] && self.gyro_sigma == 0.0 && self.accel_sigma == 0.0
    }
}

/// Adds bias and Gaussian noise, reproducibly for a given seed.
pub fn add_noise(imu: &TimeSeries<ImuSample>, noise: &NoiseSpec, seed: u64) -> Result<TimeSeries<ImuSample>> {
    for (name, sigma) in [("gyro_sigma", noise.gyro_sigma), ("accel_sigma", noise.accel_sigma)] {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(infeasible(name, sigma, "must be non-negative and finite"));
        }
    }
    let gyro = Normal::new(0.0, noise.gyro_sigma)
        .map_err(|_| infeasible("gyro_sigma", noise.gyro_sigma, "must be non-negative and finite"))?;
    let accel = Normal::new(0.0, noise.accel_sigma)
        .map_err(|_| infeasible("accel_sigma", noise.accel_sigma, "must be non-negative and finite"))?;
    let bias = Vec3::from(noise.gyro_bias);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw3 = |d: &Normal<f64>, rng: &mut ChaCha8Rng| Vec3::new(d.sample(rng), d.sample(rng), d.sample(rng));
    Ok(imu.map(|s| {
        let omega = s.omega + bias + draw3(&gyro, &mut rng);
        let f = s.f + draw3(&accel, &mut rng);
        ImuSample { f, omega }
    }))
}

/// Image roll over time, degrees; positive rotates the scene's vertical
/// toward larger visual vertical angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RollProfile {
    Constant {
        deg: f64,
    },
    Sinusoid {
        amplitude_deg: f64,
        freq_hz: f64,
        phase_deg: f64,
    },
    /// One value per frame.
    Samples {
        deg: Vec<f64>,
    },
}

impl Default for RollProfile {
    fn default() -> Self {
        RollProfile::Constant { deg: 0.0 }
    }
}

impl RollProfile {
    fn at(&self, frame: usize, t: f64) -> f64 {
        match self {
            RollProfile::Constant { deg } => *deg,
            RollProfile::Sinusoid {
                amplitude_deg,
                freq_hz,
                phase_deg,
            } => amplitude_deg * (2.0 * PI * freq_hz * t + phase_deg.to_radians()).sin(),
            RollProfile::Samples { deg } => deg[frame],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    /// Stripe period across the stripes, px.
    pub stripe_period: f64,
    /// Frames per second.
    pub fps: f64,
    pub n_frames: usize,
    pub roll: RollProfile,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 1000,
            height: 480,
            stripe_period: 40.0,
            fps: 30.0,
            n_frames: 300,
            roll: RollProfile::default(),
        }
    }
}

/// Largest roll the estimator's search window can represent.
pub const MAX_ROLL_DEG: f64 = 90.0 - WINDOW.0 as f64 - 5.0;

/// Frame times and ground-truth visual vertical of a scene sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSequence {
    pub spec: SceneSpec,
    pub times: Vec<f64>,
    pub roll_deg: Vec<f64>,
    /// Ground-truth visual vertical, `90 + roll`.
    pub theta_vv: Vec<f64>,
}

impl SceneSequence {
    pub fn render(&self, frame: usize) -> RgbImage {
        render_stripes(
            self.spec.width,
            self.spec.height,
            self.spec.stripe_period,
            self.roll_deg[frame],
        )
    }

    /// Renders every frame into `dir` with its index file.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        (0..self.times.len()).into_par_iter().try_for_each(|i| {
            let path = dir.join(frame_file_name(i));
            self.render(i).save(&path).map_err(|e| Error::Image { path, source: e })
        })?;
        write_frame_index(dir, &self.times)
    }
}

pub fn gen_scene_sequence(spec: &SceneSpec) -> Result<SceneSequence> {
    if spec.width < 3 || spec.height < 3 {
        return Err(Error::Invalid(format!(
            "scene must be at least 3x3, got {}x{}",
            spec.width, spec.height
        )));
    }
    if !(spec.fps > 0.0 && spec.fps.is_finite()) {
        return Err(infeasible("fps", spec.fps, "must be positive"));
    }
    if !(spec.stripe_period >= 4.0 && spec.stripe_period.is_finite()) {
        return Err(infeasible("stripe_period", spec.stripe_period, "must be at least 4 px"));
    }
    if let RollProfile::Samples { deg } = &spec.roll {
        if deg.len() != spec.n_frames {
            return Err(Error::LengthMismatch(spec.n_frames, deg.len()));
        }
    }
    let times: Vec<f64> = (0..spec.n_frames).map(|i| i as f64 / spec.fps).collect();
    let roll_deg: Vec<f64> = times.iter().enumerate().map(|(i, &t)| spec.roll.at(i, t)).collect();
    if let Some(&bad) = roll_deg.iter().find(|r| !(r.abs() <= MAX_ROLL_DEG)) {
        return Err(infeasible("roll", bad, format!("must stay within ±{MAX_ROLL_DEG}°")));
    }
    Ok(SceneSequence {
        spec: spec.clone(),
        theta_vv: roll_deg.iter().map(|r| 90.0 + r).collect(),
        times,
        roll_deg,
    })
}

/// Scene whose vertical follows the head-frame gravity of a slalom, so the
/// rendered visual vertical matches the true gravity direction.
pub fn scene_following_head(slalom: &Slalom, spec: &SceneSpec) -> Result<SceneSequence> {
    let times = slalom.imu.times();
    let n_frames = match times.last() {
        Some(&end) => ((end - times[0]) * spec.fps).floor() as usize + 1,
        None => 0,
    };
    let mut roll = Vec::with_capacity(n_frames);
    let mut k = 0;
    for i in 0..n_frames {
        let t = times[0] + i as f64 / spec.fps;
        while k + 1 < times.len() && times[k + 1] <= t + 1e-9 {
            k += 1;
        }
        let theta = crate::eval::theta_g(slalom.gravity[k]).unwrap_or(90.0);
        roll.push(theta - 90.0);
    }
    let mut scene = gen_scene_sequence(&SceneSpec {
        n_frames,
        roll: RollProfile::Samples { deg: roll },
        ..spec.clone()
    })?;
    if let Some(&t0) = times.first() {
        scene.times.iter_mut().for_each(|t| *t += t0);
    }
    Ok(scene)
}

/// Sinusoidal stripes that are vertical at zero roll.
pub fn render_stripes(width: u32, height: u32, period: f64, roll_deg: f64) -> RgbImage {
    let (s, c) = roll_deg.to_radians().sin_cos();
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let k = 2.0 * PI / period;
    // phase advances by k·c per column; rotate (sin, cos) instead of calling sin
    let (ds, dc) = (k * c).sin_cos();
    let mut img = RgbImage::new(width, height);
    for (row, pixels) in img.rows_mut().enumerate() {
        let u0 = -cx * c - (row as f64 - cy) * s;
        let (mut sn, mut cs) = (k * u0).sin_cos();
        for px in pixels {
            let v = (127.5 + 110.0 * sn).round() as u8;
            *px = Rgb([v, v, v]);
            (sn, cs) = (sn * dc + cs * ds, cs * dc - sn * ds);
        }
    }
    img
}

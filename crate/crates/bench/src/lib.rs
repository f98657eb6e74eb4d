//! Shared fixtures for the benchmarks.

use svcvv_core::ingest::ImuSample;
use svcvv_core::synth::{gen_slalom, render_stripes};
use svcvv_core::TimeSeries;

/// Rendered stripe frame at the default crop size.
pub fn frame(roll_deg: f64) -> image::RgbImage {
    render_stripes(1000, 480, 40.0, roll_deg)
}

/// Noise-free slalom IMU stream of the given length.
pub fn slalom(seconds: f64) -> TimeSeries<ImuSample> {
    let spec = svcvv_core::SlalomSpec {
        duration: seconds,
        head_roll_gain: -0.5,
        ..Default::default()
    };
    gen_slalom(&spec).expect("default slalom is feasible").imu
}

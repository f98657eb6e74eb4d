//! Motion sickness prediction with a six-degree-of-freedom subjective
//! vertical conflict model extended by a visual vertical channel.
//!
//! The pipeline: [`vvp`] estimates the visual vertical from camera frames,
//! [`ingest`] loads and aligns recorded streams, [`model`] simulates the
//! vestibular and internal-model dynamics and produces the motion sickness
//! incidence (MSI), and [`eval`] scores predictions against ratings.
//! [`synth`] generates inputs with known ground truth.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod ingest;
pub mod internal;
pub mod math;
pub mod model;
pub mod msi;
pub mod synth;
pub mod vestibular;
pub mod vvp;

pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, Measure, MetricReport};
pub use ingest::{FrameRef, ImuSample};
pub use math::{Quaternion, TimeSeries, Vec3};
pub use model::{Model, ModelOptions, ModelState, ParameterSet, StepOutputs, TrialResult, Variant, GRAVITY};
pub use synth::{SceneSpec, SlalomSpec};
pub use vvp::{AngleHistogram, GradientField, GrayImage, VvEstimate};

//! Visual vertical estimation from camera frames.
//!
//! Each frame is converted to normalized gray, differentiated with 3×3 Sobel
//! kernels, and its edge orientations are accumulated into a 180-bin
//! histogram weighted by normalized gradient magnitude. The three strongest
//! orientations inside the `[30°, 150°]` window are fused into a raw angle,
//! which is then blended with the previous frame's estimate.

use std::io::Write;
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{TimeSeries, Vec3};
use crate::model::GRAVITY;

/// Initial visual vertical, degrees (upright).
pub const THETA_INIT: f64 = 90.0;
/// Inclusive search window over histogram bins, degrees.
pub const WINDOW: (usize, usize) = (30, 150);
pub const HISTOGRAM_BINS: usize = 180;

/// Blend weights for the new raw estimate: small changes are trusted more.
const SMALL_CHANGE_DEG: f64 = 4.0;
const SMALL_CHANGE_WEIGHT: f64 = 0.7;
const LARGE_CHANGE_WEIGHT: f64 = 0.2;

/// ITU-R BT.601 luma weights.
const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Single-channel image with values in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }
}

/// Unnormalized luma of each pixel, row-major.
pub fn luma(image: &RgbImage) -> Vec<f64> {
    image
        .pixels()
        .map(|p| LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64)
        .collect()
}

/// Gray conversion followed by global min-max normalization.
///
/// Returns `Ok(None)` for a frame without contrast (all pixels equal).
pub fn to_gray_normalized(image: &RgbImage) -> Result<Option<GrayImage>> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w < 3 || h < 3 {
        return Err(Error::Invalid(format!("image must be at least 3x3, got {w}x{h}")));
    }
    let mut data = luma(image);
    let Some(scale) = min_max_normalize(&mut data) else {
        return Ok(None);
    };
    debug_assert!(scale > 0.0);
    Ok(Some(GrayImage {
        width: w,
        height: h,
        data,
    }))
}

/// Rescales in place so the minimum maps to 0 and the maximum to 1.
/// Returns the original range, or `None` (leaving zeros) when it is empty.
fn min_max_normalize(values: &mut [f64]) -> Option<f64> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let range = hi - lo;
    if !(range > 0.0) {
        values.iter_mut().for_each(|v| *v = 0.0);
        return None;
    }
    values.iter_mut().for_each(|v| *v = (*v - lo) / range);
    Some(range)
}

/// Sobel responses with normalized magnitude and folded edge angle.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
    /// Gradient magnitude, min-max normalized to `[0, 1]`.
    pub magnitude: Vec<f64>,
    /// Degrees in `[0, 180)`.
    pub angle: Vec<f64>,
}

/// Folds a four-quadrant angle in degrees onto `[0, 180)`.
pub fn fold_angle(deg: f64) -> f64 {
    let mut a = if deg < 0.0 { deg + 360.0 } else { deg };
    if a >= 360.0 {
        a = 0.0;
    } else if a >= 180.0 {
        a -= 180.0;
    }
    // -tiny + 360 can round up to exactly 360, and 180-epsilon folds to ~0
    if a >= 180.0 {
        a = 0.0;
    }
    a
}

/// Edge angle of a gradient: `atan2(gx, gy)` in degrees, folded.
pub fn gradient_angle(gx: f64, gy: f64) -> f64 {
    if gx == 0.0 && gy == 0.0 {
        return 0.0;
    }
    fold_angle(gx.atan2(gy).to_degrees())
}

/// 3×3 Sobel gradients with replicate padding at the borders.
///
/// `gx` differentiates along columns (left to right) and `gy` along rows
/// (top to bottom).
pub fn sobel_gradients(img: &GrayImage) -> GradientField {
    let (w, h) = (img.width, img.height);
    let n = w * h;
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let px = |r: usize, c: usize| img.data[r * w + c];
    for r in 0..h {
        let (ru, rd) = (r.saturating_sub(1), (r + 1).min(h - 1));
        for c in 0..w {
            let (cl, cr) = (c.saturating_sub(1), (c + 1).min(w - 1));
            let (tl, t, tr) = (px(ru, cl), px(ru, c), px(ru, cr));
            let (l, rr) = (px(r, cl), px(r, cr));
            let (bl, b, br) = (px(rd, cl), px(rd, c), px(rd, cr));
            gx[r * w + c] = (tr + 2.0 * rr + br) - (tl + 2.0 * l + bl);
            gy[r * w + c] = (bl + 2.0 * b + br) - (tl + 2.0 * t + tr);
        }
    }
    let mut magnitude: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| (x * x + y * y).sqrt()).collect();
    let angle = gx.iter().zip(&gy).map(|(x, y)| gradient_angle(*x, *y)).collect();
    min_max_normalize(&mut magnitude);
    GradientField {
        width: w,
        height: h,
        gx,
        gy,
        magnitude,
        angle,
    }
}

/// Magnitude-weighted histogram of edge angles over integer-degree bins.
#[derive(Clone, Debug, PartialEq)]
pub struct AngleHistogram(pub [f64; HISTOGRAM_BINS]);

impl Default for AngleHistogram {
    fn default() -> Self {
        AngleHistogram([0.0; HISTOGRAM_BINS])
    }
}

impl AngleHistogram {
    pub fn add(&mut self, angle: f64, weight: f64) {
        if !(0.0..180.0).contains(&angle) {
            if angle == 180.0 {
                self.0[0] += weight;
            }
            return;
        }
        self.0[angle_bin(angle)] += weight;
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

pub fn weighted_angle_histogram(field: &GradientField) -> AngleHistogram {
    let mut hist = AngleHistogram::default();
    for (a, m) in field.angle.iter().zip(&field.magnitude) {
        if *m != 0.0 {
            hist.add(*a, *m);
        }
    }
    hist
}

/// Raw visual vertical of one histogram: count-weighted mean of the three
/// strongest bins in the search window. `None` if they are all empty.
pub fn raw_theta_vv(hist: &AngleHistogram) -> Option<f64> {
    let mut bins: Vec<(f64, usize)> = (WINDOW.0..=WINDOW.1).map(|d| (hist.0[d], d)).collect();
    // ascending by count, ties broken by bin index so larger bins win
    bins.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let best = &bins[bins.len() - 3..];
    let total: f64 = best.iter().map(|(c, _)| c).sum();
    if !(total > 0.0) {
        return None;
    }
    Some(best.iter().map(|(c, d)| *d as f64 * c / total).sum())
}

/// Blends a raw estimate with the previous frame's angle.
pub fn smooth_theta(raw: f64, prev: f64) -> f64 {
    let w = if (raw - prev).abs() <= SMALL_CHANGE_DEG {
        SMALL_CHANGE_WEIGHT
    } else {
        LARGE_CHANGE_WEIGHT
    };
    w * raw + (1.0 - w) * prev
}

/// Next visual vertical in degrees. Frames with no usable edges in the
/// window keep the previous angle.
pub fn compute_theta_vv(hist: &AngleHistogram, theta_prev: f64) -> f64 {
    match raw_theta_vv(hist) {
        Some(raw) => smooth_theta(raw, theta_prev),
        None => theta_prev,
    }
}

/// Visual vertical vector in the image plane with norm [`GRAVITY`].
pub fn theta_to_vv(theta_deg: f64) -> Vec3 {
    let (s, c) = theta_deg.to_radians().sin_cos();
    Vec3::new(GRAVITY * c, GRAVITY * s, 0.0)
}

/// Inverse of [`theta_to_vv`], degrees.
pub fn theta_from_vv(vv: Vec3) -> f64 {
    vv.y.atan2(vv.x).to_degrees()
}

/// Visual sensing transform. Identity, kept as its own stage.
pub fn sense_vv(vv: Vec3) -> Vec3 {
    vv
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameQuality {
    Ok,
    /// The frame had no contrast or no edges inside the search window; the
    /// previous angle was held.
    NoContrast,
}

impl FrameQuality {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameQuality::Ok => "ok",
            FrameQuality::NoContrast => "no_contrast",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VvEstimate {
    pub frame_time: f64,
    pub theta_vv: f64,
    pub vv: Vec3,
    pub quality: FrameQuality,
}

/// Per-frame stage: histogram of one color frame, `None` without contrast.
pub fn frame_histogram(image: &RgbImage) -> Result<Option<AngleHistogram>> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w < 3 || h < 3 {
        return Err(Error::Invalid(format!("image must be at least 3x3, got {w}x{h}")));
    }
    let pw = w + 2;
    let mut padded = vec![0.0; pw * (h + 2)];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (r, src) in image.as_raw().chunks_exact(3 * w).enumerate() {
        let dst = &mut padded[(r + 1) * pw + 1..(r + 1) * pw + 1 + w];
        for (d, p) in dst.iter_mut().zip(src.chunks_exact(3)) {
            let v = LUMA[0] * p[0] as f64 + LUMA[1] * p[1] as f64 + LUMA[2] * p[2] as f64;
            lo = lo.min(v);
            hi = hi.max(v);
            *d = v;
        }
    }
    let range = hi - lo;
    if !(range > 0.0) {
        return Ok(None);
    }
    for r in 1..=h {
        for v in &mut padded[r * pw + 1..r * pw + 1 + w] {
            *v = (*v - lo) / range;
        }
    }
    replicate_border(&mut padded, w, h);
    Ok(Some(padded_histogram(&padded, w, h)))
}

/// Equal to `weighted_angle_histogram(&sobel_gradients(img))` without
/// materializing the gradient field.
pub fn gray_histogram(img: &GrayImage) -> AngleHistogram {
    let (w, h) = (img.width, img.height);
    let pw = w + 2;
    let mut padded = vec![0.0; pw * (h + 2)];
    for (r, row) in img.data.chunks_exact(w).enumerate() {
        padded[(r + 1) * pw + 1..(r + 1) * pw + 1 + w].copy_from_slice(row);
    }
    replicate_border(&mut padded, w, h);
    padded_histogram(&padded, w, h)
}

/// Fills the one-pixel frame around a `w × h` interior by replication.
fn replicate_border(padded: &mut [f64], w: usize, h: usize) {
    let pw = w + 2;
    for r in 1..=h {
        padded[r * pw] = padded[r * pw + 1];
        padded[r * pw + w + 1] = padded[r * pw + w];
    }
    padded.copy_within(pw..2 * pw, 0);
    padded.copy_within(h * pw..(h + 1) * pw, (h + 1) * pw);
}

fn padded_histogram(padded: &[f64], w: usize, h: usize) -> AngleHistogram {
    let pw = w + 2;
    let mut mags = Vec::with_capacity(w * h);
    let mut bins = Vec::with_capacity(w * h);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in 0..h {
        let up = &padded[r * pw..(r + 1) * pw];
        let mid = &padded[(r + 1) * pw..(r + 2) * pw];
        let down = &padded[(r + 2) * pw..(r + 3) * pw];
        for ((u, md), d) in up.windows(3).zip(mid.windows(3)).zip(down.windows(3)) {
            let (tl, t, tr) = (u[0], u[1], u[2]);
            let (l, rr) = (md[0], md[2]);
            let (bl, b, br) = (d[0], d[1], d[2]);
            let gx = (tr + 2.0 * rr + br) - (tl + 2.0 * l + bl);
            let gy = (bl + 2.0 * b + br) - (tl + 2.0 * t + tr);
            let m = (gx * gx + gy * gy).sqrt();
            lo = lo.min(m);
            hi = hi.max(m);
            let bin = if m == 0.0 { 0 } else { fast_angle_bin(gx, gy) };
            mags.push(m);
            bins.push(bin as u8);
        }
    }

    let mut hist = AngleHistogram::default();
    let range = hi - lo;
    if !(range > 0.0) {
        return hist;
    }
    for (m, bin) in mags.iter().zip(&bins) {
        let weight = (m - lo) / range;
        if weight != 0.0 {
            hist.0[*bin as usize] += weight;
        }
    }
    hist
}

fn angle_bin(angle: f64) -> usize {
    (angle.floor() as usize).min(HISTOGRAM_BINS - 1)
}

/// Arctangent on `[0, 1]`, absolute error below 1e-5 rad.
fn atan_unit(t: f64) -> f64 {
    let t2 = t * t;
    t * (0.9998660 + t2 * (-0.3302995 + t2 * (0.1801410 + t2 * (-0.0851330 + t2 * 0.0208351))))
}

/// `angle_bin(gradient_angle(gx, gy))` using a polynomial arctangent, with
/// the exact path for angles within 0.01° of a bin edge.
fn fast_angle_bin(gx: f64, gy: f64) -> usize {
    const EDGE: f64 = 0.01;
    // fold onto the upper half plane of (gy, gx)
    let (x, y) = if gx < 0.0 || (gx == 0.0 && gy < 0.0) {
        (-gy, -gx)
    } else {
        (gy, gx)
    };
    let ax = x.abs();
    let mut a = if y <= ax {
        atan_unit(y / ax)
    } else {
        std::f64::consts::FRAC_PI_2 - atan_unit(ax / y)
    };
    if x < 0.0 {
        a = std::f64::consts::PI - a;
    }
    let deg = a.to_degrees();
    let frac = deg - deg.floor();
    if !(EDGE..=1.0 - EDGE).contains(&frac) {
        return angle_bin(gradient_angle(gx, gy));
    }
    angle_bin(deg)
}

/// Sequential smoothing state across frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VvTracker {
    theta: f64,
}

impl Default for VvTracker {
    fn default() -> Self {
        VvTracker { theta: THETA_INIT }
    }
}

impl VvTracker {
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn update(&mut self, frame_time: f64, hist: Option<&AngleHistogram>) -> VvEstimate {
        let raw = hist.and_then(raw_theta_vv);
        let quality = if raw.is_some() {
            FrameQuality::Ok
        } else {
            FrameQuality::NoContrast
        };
        if let Some(raw) = raw {
            self.theta = smooth_theta(raw, self.theta);
        }
        VvEstimate {
            frame_time,
            theta_vv: self.theta,
            vv: sense_vv(theta_to_vv(self.theta)),
            quality,
        }
    }
}

/// Estimates the visual vertical for a frame sequence.
///
/// `load(i)` produces frame `i`. Histograms are computed in parallel; the
/// smoothing recursion then runs in frame order.
pub fn estimate_sequence<F>(times: &[f64], load: F) -> Result<Vec<VvEstimate>>
where
    F: Fn(usize) -> Result<RgbImage> + Sync,
{
    let hists: Vec<Option<AngleHistogram>> = (0..times.len())
        .into_par_iter()
        .map(|i| frame_histogram(&load(i)?))
        .collect::<Result<_>>()?;
    let mut tracker = VvTracker::default();
    Ok(times
        .iter()
        .zip(&hists)
        .map(|(t, h)| tracker.update(*t, h.as_ref()))
        .collect())
}

/// Zero-order hold onto `targets`: each target takes the most recent sample
/// at or before it. Targets may run at most one nominal sample period past
/// the last sample.
pub fn zoh_resample<T: Clone>(series: &TimeSeries<T>, targets: &[f64]) -> Result<TimeSeries<T>> {
    const EPS: f64 = 1e-9;
    let times = series.times();
    let Some(&first) = times.first() else {
        return Err(Error::Invalid("cannot hold an empty series".into()));
    };
    let horizon = match series.len() {
        0 | 1 => f64::INFINITY,
        n => times[n - 1] + (times[n - 1] - first) / (n - 1) as f64,
    };
    let mut out = Vec::with_capacity(targets.len());
    let mut j = 0;
    for &t in targets {
        if t + EPS < first {
            return Err(Error::NoSampleToHold { t, first });
        }
        if t > horizon + EPS {
            return Err(Error::Invalid(format!(
                "target t={t} is beyond the hold horizon {horizon}"
            )));
        }
        // targets are usually increasing; restart the scan otherwise
        if j > 0 && times[j] > t + EPS {
            j = 0;
        }
        while j + 1 < times.len() && times[j + 1] <= t + EPS {
            j += 1;
        }
        out.push(series.values()[j].clone());
    }
    TimeSeries::new(targets.to_vec(), out)
}

pub const VV_HEADER: [&str; 6] = ["t", "theta_vv_deg", "vv_x", "vv_y", "vv_z", "quality_flag"];

pub fn write_vv_csv(estimates: &[VvEstimate], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{}", VV_HEADER.join(","))?;
    for e in estimates {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            e.frame_time,
            e.theta_vv,
            e.vv.x,
            e.vv.y,
            e.vv.z,
            e.quality.as_str()
        )?;
    }
    Ok(())
}

pub fn read_vv_csv(path: impl AsRef<Path>) -> Result<Vec<VvEstimate>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != VV_HEADER {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`", VV_HEADER.join(",")),
        ));
    }
    let mut out: Vec<VvEstimate> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|_| Error::parse(path, line, format!("column `{}` is not a number", VV_HEADER[i])))
        };
        let quality = match &record[5] {
            "ok" => FrameQuality::Ok,
            "no_contrast" => FrameQuality::NoContrast,
            other => return Err(Error::parse(path, line, format!("unknown quality flag `{other}`"))),
        };
        let e = VvEstimate {
            frame_time: num(0)?,
            theta_vv: num(1)?,
            vv: Vec3::new(num(2)?, num(3)?, num(4)?),
            quality,
        };
        if let Some(prev) = out.last() {
            if !(e.frame_time > prev.frame_time) {
                return Err(Error::parse(path, line, "frame times must be strictly increasing"));
            }
        }
        out.push(e);
    }
    Ok(out)
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

/// Visual vertical vectors of a frame sequence as a series.
pub fn vv_series(estimates: &[VvEstimate]) -> Result<TimeSeries<Vec3>> {
    TimeSeries::new(
        estimates.iter().map(|e| e.frame_time).collect(),
        estimates.iter().map(|e| e.vv).collect(),
    )
}

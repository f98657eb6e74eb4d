//! Loading and validation of recorded trial data.
//!
//! IMU streams are delimited text with the header `t,fx,fy,fz,wx,wy,wz` in
//! SI units. A frame directory holds `index.csv` (header `frame,t`) and one
//! PNG per frame named by its zero-padded ordinal, e.g. `000042.png`.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{TimeSeries, Vec3};
use crate::vvp::{csv_error, zoh_resample};

pub const IMU_HEADER: [&str; 7] = ["t", "fx", "fy", "fz", "wx", "wy", "wz"];
pub const FRAME_INDEX: &str = "index.csv";
pub const FRAME_INDEX_HEADER: [&str; 2] = ["frame", "t"];

/// Source and crop resolution of the reference camera.
pub const SOURCE_DIMS: (u32, u32) = (1280, 720);
pub const CROP_DIMS: (u32, u32) = (1000, 480);

/// One IMU reading in the head frame. The timestamp lives in the
/// enclosing [`TimeSeries`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Gravito-inertial acceleration, m/s².
    pub f: Vec3,
    /// Angular velocity, rad/s.
    pub omega: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuOptions {
    /// Nominal sample rate, Hz.
    pub rate: f64,
    /// Fill gaps longer than two periods by holding instead of failing.
    pub lenient: bool,
}

impl Default for ImuOptions {
    fn default() -> Self {
        ImuOptions {
            rate: 100.0,
            lenient: false,
        }
    }
}

/// Largest gap between consecutive samples, in nominal periods.
const MAX_GAP_PERIODS: f64 = 2.0;
/// Timestamp jitter absorbed when snapping samples onto the grid.
const JITTER: f64 = 0.1;

/// Reads an IMU file and returns it on the uniform grid `t0 + k/rate`.
pub fn load_imu(path: impl AsRef<Path>, opts: &ImuOptions) -> Result<TimeSeries<ImuSample>> {
    let path = path.as_ref();
    if !(opts.rate > 0.0 && opts.rate.is_finite()) {
        return Err(Error::Config(format!("IMU rate must be positive, got {}", opts.rate)));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let missing: Vec<&str> = IMU_HEADER
        .iter()
        .copied()
        .filter(|h| !headers.iter().any(|x| x == *h))
        .collect();
    if !missing.is_empty() {
        return Err(Error::parse(
            path,
            1,
            format!("missing columns: {}", missing.join(", ")),
        ));
    }
    let cols: Vec<usize> = IMU_HEADER
        .iter()
        .map(|h| headers.iter().position(|x| x == *h).unwrap())
        .collect();

    let dt = 1.0 / opts.rate;
    let mut times: Vec<f64> = Vec::new();
    let mut lines: Vec<u64> = Vec::new();
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let mut v = [0.0; 7];
        for (slot, (&c, name)) in v.iter_mut().zip(cols.iter().zip(IMU_HEADER)) {
            let field = record
                .get(c)
                .ok_or_else(|| Error::parse(path, line, format!("missing value for `{name}`")))?;
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(path, line, format!("`{name}` is not a finite number: `{field}`")))?;
        }
        if let (Some(&prev), Some(&prev_line)) = (times.last(), lines.last()) {
            if v[0] == prev {
                return Err(Error::parse(
                    path,
                    line,
                    format!("duplicated timestamp {} (also on line {prev_line})", v[0]),
                ));
            }
            if v[0] < prev {
                return Err(Error::parse(
                    path,
                    line,
                    format!("time goes backwards: {} after {prev}", v[0]),
                ));
            }
            if v[0] - prev > MAX_GAP_PERIODS * dt * (1.0 + 1e-9) && !opts.lenient {
                return Err(Error::parse(
                    path,
                    line,
                    format!(
                        "gap exceeds tolerance: {:.6} s between samples, limit {:.6} s",
                        v[0] - prev,
                        MAX_GAP_PERIODS * dt
                    ),
                ));
            }
        }
        times.push(v[0]);
        lines.push(line);
        samples.push(ImuSample {
            f: Vec3::new(v[1], v[2], v[3]),
            omega: Vec3::new(v[4], v[5], v[6]),
        });
    }
    let raw = TimeSeries::new(times, samples)?;
    Ok(snap_to_grid(&raw, dt))
}

/// Zero-order hold onto `t0 + k·dt`, where each grid point takes the latest
/// sample no later than a tenth of a period after it.
fn snap_to_grid<T: Clone>(raw: &TimeSeries<T>, dt: f64) -> TimeSeries<T> {
    let (Some(t0), Some(t_end)) = (raw.first_time(), raw.last_time()) else {
        return TimeSeries::default();
    };
    let n = ((t_end - t0) / dt + JITTER).floor() as usize + 1;
    let times = raw.times();
    let mut values = Vec::with_capacity(n);
    let mut j = 0;
    for k in 0..n {
        let g = t0 + k as f64 * dt;
        while j + 1 < times.len() && times[j + 1] <= g + JITTER * dt {
            j += 1;
        }
        values.push(raw.values()[j].clone());
    }
    TimeSeries::uniform(t0, dt, values)
}

/// Writes an IMU series in the format read by [`load_imu`]. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_imu(series: &TimeSeries<ImuSample>, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{}", IMU_HEADER.join(","))?;
    for (t, s) in series.iter() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            t, s.f.x, s.f.y, s.f.z, s.omega.x, s.omega.y, s.omega.z
        )?;
    }
    Ok(())
}

pub fn write_imu_file(series: &TimeSeries<ImuSample>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_imu(series, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// A frame on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub t: f64,
    pub path: PathBuf,
    /// Width and height in pixels.
    pub dims: (u32, u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameOptions {
    /// Centered crop applied on load, width × height.
    pub crop: Option<(u32, u32)>,
    /// Require every frame to share the first frame's dimensions.
    pub strict: bool,
}

impl Default for FrameOptions {
    fn default() -> Self {
        FrameOptions {
            crop: None,
            strict: true,
        }
    }
}

pub fn frame_file_name(frame: usize) -> String {
    format!("{frame:06}.png")
}

/// Reads the frame index of `dir` and checks it against the image files.
pub fn load_frames(dir: impl AsRef<Path>, opts: &FrameOptions) -> Result<Vec<FrameRef>> {
    let dir = dir.as_ref();
    let index = dir.join(FRAME_INDEX);
    if !index.is_file() {
        return Err(Error::FrameIndexNotFound(index));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&index)
        .map_err(|e| csv_error(&index, e))?;
    let headers = reader.headers().map_err(|e| csv_error(&index, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != FRAME_INDEX_HEADER {
        return Err(Error::parse(
            &index,
            1,
            format!("expected header `{}`", FRAME_INDEX_HEADER.join(",")),
        ));
    }

    let mut frames: Vec<FrameRef> = Vec::new();
    let mut listed = BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(&index, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let frame: usize = record[0]
            .parse()
            .map_err(|_| Error::parse(&index, line, format!("bad frame number `{}`", &record[0])))?;
        let t: f64 = record[1]
            .parse()
            .ok()
            .filter(|t: &f64| t.is_finite())
            .ok_or_else(|| Error::parse(&index, line, format!("bad timestamp `{}`", &record[1])))?;
        if let Some(prev) = frames.last() {
            if !(t > prev.t) {
                return Err(Error::parse(&index, line, "frame times must be strictly increasing"));
            }
        }
        let path = dir.join(frame_file_name(frame));
        if !path.is_file() {
            return Err(Error::Invalid(format!(
                "index line {line} lists frame {frame} but {} does not exist",
                path.display()
            )));
        }
        let dims = image::image_dimensions(&path).map_err(|e| Error::Image {
            path: path.clone(),
            source: e,
        })?;
        if let Some((cw, ch)) = opts.crop {
            if dims.0 < cw || dims.1 < ch {
                return Err(Error::Invalid(format!(
                    "{} is {}x{}, smaller than the {cw}x{ch} crop",
                    path.display(),
                    dims.0,
                    dims.1
                )));
            }
        }
        if opts.strict {
            if let Some(first) = frames.first() {
                if dims != first.dims {
                    return Err(Error::Invalid(format!(
                        "{} is {}x{} but earlier frames are {}x{}",
                        path.display(),
                        dims.0,
                        dims.1,
                        first.dims.0,
                        first.dims.1
                    )));
                }
            }
        }
        listed.insert(path.clone());
        frames.push(FrameRef { t, path, dims });
    }

    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && !listed.contains(&path) {
            return Err(Error::Invalid(format!(
                "{} is not listed in {}",
                path.display(),
                index.display()
            )));
        }
    }
    Ok(frames)
}

/// Decodes a frame as RGB and applies the optional centered crop.
pub fn read_frame(frame: &FrameRef, crop: Option<(u32, u32)>) -> Result<RgbImage> {
    let img = image::open(&frame.path)
        .map_err(|e| Error::Image {
            path: frame.path.clone(),
            source: e,
        })?
        .to_rgb8();
    match crop {
        Some((w, h)) => crop_center(&img, w, h),
        None => Ok(img),
    }
}

/// Centered crop to `width × height`.
pub fn crop_center(image: &RgbImage, width: u32, height: u32) -> Result<RgbImage> {
    let (w, h) = image.dimensions();
    if w < width || h < height {
        return Err(Error::Invalid(format!("cannot crop {w}x{h} to {width}x{height}")));
    }
    let (x, y) = ((w - width) / 2, (h - height) / 2);
    Ok(image::imageops::crop_imm(image, x, y, width, height).to_image())
}

/// Writes `index.csv` for frames numbered from zero.
pub fn write_frame_index(dir: impl AsRef<Path>, times: &[f64]) -> Result<()> {
    let path = dir.as_ref().join(FRAME_INDEX);
    let mut text = FRAME_INDEX_HEADER.join(",");
    text.push('\n');
    for (i, t) in times.iter().enumerate() {
        text.push_str(&format!("{i},{t}\n"));
    }
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// IMU and visual vertical on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedTrial {
    pub imu: TimeSeries<ImuSample>,
    pub vv: TimeSeries<Vec3>,
}

/// Clips the IMU stream to the span covered by the frames and holds the
/// per-frame visual vertical onto the IMU timestamps.
///
/// The last frame is taken to cover one frame period past its timestamp.
pub fn synchronize(imu: &TimeSeries<ImuSample>, vv: &TimeSeries<Vec3>) -> Result<AlignedTrial> {
    let (Some(a0), Some(a1), Some(b0), Some(b1)) = (imu.first_time(), imu.last_time(), vv.first_time(), vv.last_time())
    else {
        return Err(Error::NoOverlap {
            a_start: imu.first_time().unwrap_or(f64::NAN),
            a_end: imu.last_time().unwrap_or(f64::NAN),
            b_start: vv.first_time().unwrap_or(f64::NAN),
            b_end: vv.last_time().unwrap_or(f64::NAN),
        });
    };
    let period = if vv.len() > 1 {
        (b1 - b0) / (vv.len() - 1) as f64
    } else {
        0.0
    };
    let start = a0.max(b0);
    let end = a1.min(b1 + period);
    let clipped = imu.clip(start - 1e-9, end + 1e-9);
    if clipped.is_empty() {
        return Err(Error::NoOverlap {
            a_start: a0,
            a_end: a1,
            b_start: b0,
            b_end: b1,
        });
    }
    let held = zoh_resample(vv, clipped.times())?;
    Ok(AlignedTrial { imu: clipped, vv: held })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn sample(x: f64) -> ImuSample {
        ImuSample {
            f: Vec3::new(x, 9.81, 0.0),
            omega: Vec3::new(0.0, x, 0.0),
        }
    }

    #[test]
    fn loads_well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "imu.csv",
            "t,fx,fy,fz,wx,wy,wz\n0,0,9.81,0,0,0,0\n0.01,0.1,9.81,0,0,0.2,0\n0.02,0.2,9.81,0,0,0.4,0\n",
        );
        let s = load_imu(&p, &ImuOptions::default()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.values()[1].omega.y, 0.2);
    }

    #[test]
    fn duplicate_timestamp_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "imu.csv",
            "t,fx,fy,fz,wx,wy,wz\n0,0,9.81,0,0,0,0\n0.01,0,9.81,0,0,0,0\n0.01,0,9.81,0,0,0,0\n",
        );
        let err = load_imu(&p, &ImuOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        assert!(err.to_string().contains("duplicated"));
    }

    #[test]
    fn gap_is_rejected_unless_lenient() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "imu.csv",
            "t,fx,fy,fz,wx,wy,wz\n0,0,9.81,0,0,0,0\n0.01,1,9.81,0,0,0,0\n0.04,2,9.81,0,0,0,0\n0.05,3,9.81,0,0,0,0\n",
        );
        let err = load_imu(&p, &ImuOptions::default()).unwrap_err();
        assert!(err.to_string().contains("gap exceeds tolerance"), "{err}");
        assert!(matches!(err, Error::Parse { line: 4, .. }));

        let s = load_imu(
            &p,
            &ImuOptions {
                lenient: true,
                ..Default::default()
            },
        )
        .unwrap();
        let fx: Vec<f64> = s.values().iter().map(|v| v.f.x).collect();
        assert_eq!(fx, vec![0.0, 1.0, 1.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn missing_column_and_bad_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "t,fx,fy,fz,wx,wy\n0,0,0,0,0,0\n");
        assert!(load_imu(&p, &ImuOptions::default())
            .unwrap_err()
            .to_string()
            .contains("wz"));
        let p = write(dir.path(), "b.csv", "t,fx,fy,fz,wx,wy,wz\n0,0,x,0,0,0,0\n");
        assert!(matches!(
            load_imu(&p, &ImuOptions::default()),
            Err(Error::Parse { line: 2, .. })
        ));
        let p = write(
            dir.path(),
            "c.csv",
            "t,fx,fy,fz,wx,wy,wz\n0.01,0,0,0,0,0,0\n0,0,0,0,0,0,0\n",
        );
        assert!(matches!(
            load_imu(&p, &ImuOptions::default()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn jitter_snaps_to_grid() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "imu.csv",
            "t,fx,fy,fz,wx,wy,wz\n0,0,0,0,0,0,0\n0.0105,1,0,0,0,0,0\n0.0196,2,0,0,0,0,0\n0.0302,3,0,0,0,0,0\n",
        );
        let s = load_imu(&p, &ImuOptions::default()).unwrap();
        let fx: Vec<f64> = s.values().iter().map(|v| v.f.x).collect();
        assert_eq!(fx, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(s.times()[3], 3.0 * 0.01);
    }

    #[test]
    fn imu_round_trip_is_exact() {
        let series = TimeSeries::uniform(
            0.0,
            0.01,
            (0..500).map(|k| sample((k as f64 * 0.37).sin() * 1.234567)).collect(),
        );
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("imu.csv");
        write_imu_file(&series, &p).unwrap();
        let back = load_imu(&p, &ImuOptions::default()).unwrap();
        assert_eq!(back, series);
        write_imu_file(&back, &p).unwrap();
        assert_eq!(load_imu(&p, &ImuOptions::default()).unwrap(), series);
    }

    fn frame_dir(n: usize, listed: usize, dims: (u32, u32)) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..n {
            RgbImage::from_pixel(dims.0, dims.1, Rgb([i as u8, 0, 0]))
                .save(dir.path().join(frame_file_name(i)))
                .unwrap();
        }
        let times: Vec<f64> = (0..listed).map(|i| i as f64 / 30.0).collect();
        write_frame_index(dir.path(), &times).unwrap();
        dir
    }

    #[test]
    fn frame_index_consistency() {
        let dir = frame_dir(3, 3, (8, 6));
        let frames = load_frames(dir.path(), &FrameOptions::default()).unwrap();
        assert_eq!(frames.len(), 3);
        assert_eq!(frames[2].dims, (8, 6));
        assert_eq!(frames[1].t, 1.0 / 30.0);

        let dir = frame_dir(3, 4, (8, 6));
        assert!(load_frames(dir.path(), &FrameOptions::default()).is_err());

        let dir = frame_dir(3, 2, (8, 6));
        assert!(load_frames(dir.path(), &FrameOptions::default()).is_err());

        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_frames(empty.path(), &FrameOptions::default()),
            Err(Error::FrameIndexNotFound(_))
        ));
    }

    #[test]
    fn wrong_dims_fail_in_strict_mode() {
        let dir = frame_dir(2, 2, (8, 6));
        RgbImage::new(9, 6).save(dir.path().join(frame_file_name(1))).unwrap();
        assert!(load_frames(dir.path(), &FrameOptions::default()).is_err());
        let lenient = FrameOptions {
            strict: false,
            ..Default::default()
        };
        assert_eq!(load_frames(dir.path(), &lenient).unwrap().len(), 2);
        let too_big = FrameOptions {
            crop: Some((20, 20)),
            strict: false,
        };
        assert!(load_frames(dir.path(), &too_big).is_err());
    }

    #[test]
    fn crop_examples() {
        let mut img = RgbImage::new(SOURCE_DIMS.0, SOURCE_DIMS.1);
        img.put_pixel(140, 120, Rgb([1, 2, 3]));
        img.put_pixel(1139, 599, Rgb([4, 5, 6]));
        let c = crop_center(&img, CROP_DIMS.0, CROP_DIMS.1).unwrap();
        assert_eq!(c.dimensions(), CROP_DIMS);
        assert_eq!(*c.get_pixel(0, 0), Rgb([1, 2, 3]));
        assert_eq!(*c.get_pixel(999, 479), Rgb([4, 5, 6]));

        assert_eq!(crop_center(&c, 1000, 480).unwrap(), c);
        assert!(crop_center(&RgbImage::new(800, 400), 1000, 480).is_err());
    }

    #[test]
    fn synchronize_examples() {
        let imu = TimeSeries::uniform(0.0, 0.5, (0..201).map(|k| sample(k as f64)).collect());
        let vv = TimeSeries::uniform(0.0, 1.0, (0..101).map(|k| Vec3::new(k as f64, 0.0, 0.0)).collect());
        let a = synchronize(&imu, &vv).unwrap();
        assert_eq!(a.imu.len(), 201);
        assert_eq!(a.vv.values()[3].x, 1.0);

        let vv = TimeSeries::uniform(50.0, 1.0, (0..101).map(|k| Vec3::new(k as f64, 0.0, 0.0)).collect());
        let a = synchronize(&imu, &vv).unwrap();
        assert_eq!(a.imu.first_time(), Some(50.0));
        assert_eq!(a.imu.last_time(), Some(100.0));
        // every held value is one of the inputs
        assert!(a.vv.values().iter().all(|v| vv.values().contains(v)));

        let vv = TimeSeries::uniform(200.0, 1.0, vec![Vec3::ZERO; 10]);
        assert!(matches!(synchronize(&imu, &vv), Err(Error::NoOverlap { .. })));
    }
}

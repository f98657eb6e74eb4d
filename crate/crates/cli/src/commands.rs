//! Subcommand implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::{Deserialize, Serialize};
use svcvv_core::eval::{confusion, format_report, load_cohort, metrics, summarize, write_report, Measure};
use svcvv_core::ingest::{load_frames, load_imu, read_frame, synchronize, write_imu_file, FrameOptions, ImuOptions};
use svcvv_core::model::{read_msi_csv, GHatInit, ModelOptions, ParameterFile};
use svcvv_core::synth::{add_noise, gen_scene_sequence, gen_slalom, scene_following_head, NoiseSpec, Slalom};
use svcvv_core::vvp::{estimate_sequence, read_vv_csv, vv_series, write_vv_csv, FrameQuality, VvEstimate};
use svcvv_core::{Model, SceneSpec, SlalomSpec, TimeSeries, Variant};

use crate::config::{apply_config, create_dir, require, write_run_config, Crop};
use crate::{plots, user_error};

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn frame_estimates(dir: &Path, crop: Option<Crop>, lenient: bool) -> anyhow::Result<Vec<VvEstimate>> {
    let crop = crop.map(|c| (c.0, c.1));
    let frames = load_frames(dir, &FrameOptions { crop, strict: !lenient })?;
    if frames.is_empty() {
        return Err(user_error(format!("{} lists no frames", dir.display())));
    }
    let times: Vec<f64> = frames.iter().map(|f| f.t).collect();
    Ok(estimate_sequence(&times, |i| read_frame(&frames[i], crop))?)
}

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct VvArgs {
    /// Frame directory with index.csv.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Output series, one row per frame.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Centered crop applied to every frame, e.g. 1000x480.
    #[arg(long)]
    pub crop: Option<Crop>,
    /// Accept frames whose dimensions differ.
    #[arg(long)]
    pub lenient: bool,
    /// TOML file whose keys override the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn vv(args: VvArgs) -> anyhow::Result<()> {
    let config = args.config.clone();
    let args = apply_config(args, config.as_deref())?;
    let (frames, out) = (require(&args.frames, "frames")?, require(&args.out, "out")?);
    let est = frame_estimates(frames, args.crop, args.lenient)?;
    let mut w = create(out)?;
    write_vv_csv(&est, &mut w).and_then(|_| w.flush())?;
    write_run_config(&out.with_extension("run.toml"), "vv", &args)?;
    let held = est.iter().filter(|e| e.quality == FrameQuality::NoContrast).count();
    let mean = est.iter().map(|e| e.theta_vv).sum::<f64>() / est.len() as f64;
    println!(
        "{} frames, mean visual vertical {mean:.2} deg, {held} held without contrast -> {}",
        est.len(),
        out.display()
    );
    Ok(())
}

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PredictArgs {
    /// IMU file with header t,fx,fy,fz,wx,wy,wz.
    #[arg(long)]
    pub imu: Option<PathBuf>,
    /// Frame directory; the visual vertical is estimated from it.
    #[arg(long, conflicts_with = "vv")]
    pub frames: Option<PathBuf>,
    /// Precomputed visual vertical series.
    #[arg(long)]
    pub vv: Option<PathBuf>,
    /// TOML parameter file; defaults to the variant's preset.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Centered crop applied to every frame, e.g. 1000x480.
    #[arg(long)]
    pub crop: Option<Crop>,
    /// Hold across IMU gaps and accept frames of differing size.
    #[arg(long)]
    pub lenient: bool,
    /// Nominal IMU rate, Hz.
    #[arg(long)]
    pub imu_rate: Option<f64>,
    /// Initial internal gravity: measured or zero.
    #[arg(long, value_parser = parse_ghat_init)]
    pub ghat_init: Option<GHatInit>,
    /// TOML file whose keys override the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: svcvv_core::Error| e.to_string())
}

fn parse_ghat_init(s: &str) -> Result<GHatInit, String> {
    match s {
        "measured" => Ok(GHatInit::Measured),
        "zero" => Ok(GHatInit::Zero),
        other => Err(format!("expected measured or zero, got `{other}`")),
    }
}

pub fn predict(args: PredictArgs) -> anyhow::Result<()> {
    let config = args.config.clone();
    let args = apply_config(args, config.as_deref())?;
    let imu_path = require(&args.imu, "imu")?;
    let out = require(&args.out, "out")?;
    let variant = args
        .variant
        .ok_or_else(|| user_error("missing required --variant (svc or svc-vv)"))?;
    if args.frames.is_some() && args.vv.is_some() {
        return Err(user_error("--frames and --vv are mutually exclusive"));
    }
    if variant == Variant::SvcVv && args.frames.is_none() && args.vv.is_none() {
        return Err(user_error(
            "variant svc-vv needs visual input: pass --frames DIR or a precomputed --vv FILE",
        ));
    }

    let (params, mut options) = match &args.params {
        Some(p) => ParameterFile::load(p)?.resolve(variant)?,
        None => (variant.preset(), ModelOptions::default()),
    };
    if let Some(g) = args.ghat_init {
        options.ghat_init = g;
    }
    let model = Model::new(params, options)?;

    let imu_opts = ImuOptions {
        rate: args.imu_rate.unwrap_or(ImuOptions::default().rate),
        lenient: args.lenient,
    };
    let imu = load_imu(imu_path, &imu_opts)?;
    create_dir(out)?;

    let result = match variant {
        Variant::Svc => model.run_trial(&imu, None, variant)?,
        Variant::SvcVv => {
            let est = match (&args.frames, &args.vv) {
                (Some(dir), _) => {
                    let est = frame_estimates(dir, args.crop, args.lenient)?;
                    let mut w = create(&out.join("vv.csv"))?;
                    write_vv_csv(&est, &mut w).and_then(|_| w.flush())?;
                    est
                }
                (None, Some(file)) => read_vv_csv(file)?,
                (None, None) => unreachable!("checked above"),
            };
            let aligned = synchronize(&imu, &vv_series(&est)?)?;
            model.run_trial(&aligned.imu, Some(&aligned.vv), variant)?
        }
    };

    let mut w = create(&out.join("trial.csv"))?;
    result.write_csv(&mut w).and_then(|_| w.flush())?;
    let mut w = create(&out.join("summary.csv"))?;
    result.write_summary_csv(&mut w).and_then(|_| w.flush())?;
    let series = TimeSeries::new(result.t.clone(), result.msi.clone())?;
    plots::msi_series(&out.join("msi.svg"), &[(variant.as_str().to_string(), series)])?;
    write_run_config(&out.join("run_config.toml"), "predict", &args)?;
    println!(
        "{variant}: {} samples, mean MSI {:.4} %, max MSI {:.4} % -> {}",
        result.len(),
        result.mean_msi,
        result.max_msi,
        out.display()
    );
    Ok(())
}

/// Contents of a synth spec file.
#[derive(Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub slalom: SlalomSpec,
    pub noise: NoiseSpec,
    /// Render scene frames when present.
    pub scene: Option<SceneSpec>,
    /// Derive the scene roll from the head's gravity direction instead of
    /// the scene's own roll profile.
    pub scene_follows_head: bool,
}

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SynthArgs {
    /// TOML spec; omitted sections use the defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Noise seed, overriding the one in the spec file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML file whose keys override the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn write_truth(path: &Path, s: &Slalom) -> anyhow::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t,g_x,g_y,g_z,theta_g,speed,yaw_rate,roll_deg")?;
    for (k, t) in s.imu.times().iter().enumerate() {
        let g = s.gravity[k];
        let theta = svcvv_core::eval::theta_g(g).map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{t},{},{},{},{theta},{},{},{}",
            g.x,
            g.y,
            g.z,
            s.speed[k],
            s.yaw_rate[k],
            s.roll[k].to_degrees()
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let config = args.config.clone();
    let args = apply_config(args, config.as_deref())?;
    let out = require(&args.out, "out")?;
    let mut spec: SynthSpec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| user_error(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).with_context(|| format!("spec {}", p.display()))?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }

    let slalom = gen_slalom(&spec.slalom)?;
    let imu = if spec.noise.is_zero() {
        slalom.imu.clone()
    } else {
        add_noise(&slalom.imu, &spec.noise, spec.seed)?
    };
    create_dir(out)?;
    write_imu_file(&imu, out.join("imu.csv"))?;
    write_truth(&out.join("truth.csv"), &slalom)?;

    // visual vertical aligned with true gravity, at the IMU rate
    let aligned: Vec<VvEstimate> = slalom
        .imu
        .times()
        .iter()
        .zip(&slalom.gravity)
        .map(|(&t, &g)| VvEstimate {
            frame_time: t,
            theta_vv: svcvv_core::vvp::theta_from_vv(g),
            vv: g,
            quality: FrameQuality::Ok,
        })
        .collect();
    let mut w = create(&out.join("vv_truth.csv"))?;
    write_vv_csv(&aligned, &mut w).and_then(|_| w.flush())?;

    let mut frames = 0;
    if let Some(scene) = &spec.scene {
        let seq = if spec.scene_follows_head {
            scene_following_head(&slalom, scene)?
        } else {
            gen_scene_sequence(scene)?
        };
        seq.write(out.join("frames"))?;
        let mut w = create(&out.join("scene_truth.csv"))?;
        writeln!(w, "t,theta_vv_deg")?;
        for (t, th) in seq.times.iter().zip(&seq.theta_vv) {
            writeln!(w, "{t},{th}")?;
        }
        w.flush()?;
        frames = seq.times.len();
    }
    #[derive(Serialize)]
    struct SynthRun<'a> {
        spec_file: Option<&'a Path>,
        out: &'a Path,
        resolved: &'a SynthSpec,
    }
    let run = SynthRun {
        spec_file: args.spec.as_deref(),
        out,
        resolved: &spec,
    };
    write_run_config(&out.join("run_config.toml"), "synth", &run)?;
    let clamp = if slalom.clamped && slalom.arcs.0 + slalom.arcs.1 > 0 {
        format!(
            ", arc speed clamped to {:.3} m/s by the acceleration limit",
            slalom.arc_speed
        )
    } else {
        String::new()
    };
    println!(
        "{} IMU samples, {} left / {} right arcs, {frames} frames{clamp} -> {}",
        imu.len(),
        slalom.arcs.0,
        slalom.arcs.1,
        out.display()
    );
    Ok(())
}

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    /// Cohort summary file.
    #[arg(long)]
    pub summaries: Option<PathBuf>,
    /// Which per-condition summary to compare.
    #[arg(long, value_parser = parse_measure)]
    pub measure: Option<Measure>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file whose keys override the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn parse_measure(s: &str) -> Result<Measure, String> {
    s.parse().map_err(|e: svcvv_core::Error| e.to_string())
}

pub fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let config = args.config.clone();
    let args = apply_config(args, config.as_deref())?;
    let summaries = require(&args.summaries, "summaries")?;
    let out = require(&args.out, "out")?;
    let measure = args.measure.unwrap_or(Measure::Mean);
    let cohort = summarize(&load_cohort(summaries)?, measure)?;
    let cm = confusion(&cohort.participants);
    let report = metrics(&cm);

    create_dir(out)?;
    let mut w = create(&out.join("report.csv"))?;
    write_report(&cm, &report, measure, &mut w).and_then(|_| w.flush())?;
    let mut text = format_report(&cm, &report, measure);
    if !cohort.excluded.is_empty() {
        text.push_str(&format!(
            "\nexcluded (no misery reported): {}\n",
            cohort.excluded.join(", ")
        ));
    }
    std::fs::write(out.join("report.txt"), &text)?;
    plots::confusion_matrix(&out.join("confusion.svg"), &cm, measure)?;
    plots::metric_bars(&out.join("metrics.svg"), &report, measure)?;
    write_run_config(&out.join("run_config.toml"), "eval", &args)?;
    print!("{text}");
    Ok(())
}

#[derive(Args, Serialize, Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PlotArgs {
    /// Trial file written by predict; repeat to overlay several.
    #[arg(long, required = true)]
    pub trial: Vec<PathBuf>,
    /// Legend label per trial, in the same order.
    #[arg(long)]
    pub label: Vec<String>,
    /// Output SVG.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML file whose keys override the flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn plot(args: PlotArgs) -> anyhow::Result<()> {
    let config = args.config.clone();
    let args = apply_config(args, config.as_deref())?;
    let out = require(&args.out, "out")?;
    if !args.label.is_empty() && args.label.len() != args.trial.len() {
        return Err(user_error("give one --label per --trial"));
    }
    let mut series = Vec::new();
    for (i, path) in args.trial.iter().enumerate() {
        let label = args.label.get(i).cloned().unwrap_or_else(|| path.display().to_string());
        series.push((label, read_msi_csv(path)?));
    }
    plots::msi_series(out, &series)?;
    println!("{} series -> {}", series.len(), out.display());
    Ok(())
}

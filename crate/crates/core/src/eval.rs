//! Evaluation: gravity direction, correlation and confusion-matrix metrics.
//!
//! A participant is a true positive case when their misery rating under the
//! looking-ahead condition (LAD) is lower than under the tablet condition
//! (WAD); the model predicts positive when its MSI follows the same order.
//! Ties count as negative on both sides.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::vvp::fold_angle;

/// Direction of gravity in the head's image plane, degrees in `[0, 180)`.
/// `None` when gravity has no in-plane component.
pub fn theta_g(g: Vec3) -> Option<f64> {
    if g.x == 0.0 && g.y == 0.0 {
        return None;
    }
    Some(fold_angle(g.y.atan2(g.x).to_degrees()))
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::Invalid(format!(
            "correlation needs at least 2 samples, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, actual: bool, predicted: bool) {
        match (actual, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }
}

/// Per-participant summaries under both conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub participant_id: String,
    pub misc_lad: f64,
    pub misc_wad: f64,
    pub msi_lad: f64,
    pub msi_wad: f64,
}

impl ParticipantSummary {
    pub fn actual_positive(&self) -> bool {
        self.misc_lad < self.misc_wad
    }

    pub fn predicted_positive(&self) -> bool {
        self.msi_lad < self.msi_wad
    }
}

pub fn confusion(participants: &[ParticipantSummary]) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::default();
    for p in participants {
        cm.add(p.actual_positive(), p.predicted_positive());
    }
    cm
}

/// Classification metrics; `None` where the denominator is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(cm: &ConfusionMatrix) -> MetricReport {
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    MetricReport {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        precision,
        recall,
        f1,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Mean,
    Max,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Mean => "mean",
            Measure::Max => "max",
        }
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Measure::Mean),
            "max" => Ok(Measure::Max),
            other => Err(Error::Config(format!(
                "unknown measure `{other}`, expected mean or max"
            ))),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Lad,
    Wad,
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lad" => Ok(Condition::Lad),
            "wad" => Ok(Condition::Wad),
            other => Err(Error::Config(format!(
                "unknown condition `{other}`, expected LAD or WAD"
            ))),
        }
    }
}

/// One row of a cohort summary file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub participant_id: String,
    pub condition: Condition,
    pub mean_misc: f64,
    pub max_misc: f64,
    pub mean_msi: f64,
    pub max_msi: f64,
}

pub const COHORT_HEADER: [&str; 6] = [
    "participant_id",
    "condition",
    "mean_misc",
    "max_misc",
    "mean_msi",
    "max_msi",
];

pub fn load_cohort(path: impl AsRef<Path>) -> Result<Vec<CohortRow>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| crate::vvp::csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| crate::vvp::csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != COHORT_HEADER {
        return Err(Error::parse(
            path,
            1,
            format!("expected header `{}`", COHORT_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| crate::vvp::csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, line, format!("`{}` is not a finite number", COHORT_HEADER[i])))
        };
        let condition = record[1]
            .parse()
            .map_err(|e: Error| Error::parse(path, line, e.to_string()))?;
        rows.push(CohortRow {
            participant_id: record[0].to_string(),
            condition,
            mean_misc: num(2)?,
            max_misc: num(3)?,
            mean_msi: num(4)?,
            max_msi: num(5)?,
        });
    }
    Ok(rows)
}

pub fn write_cohort(rows: &[CohortRow], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "{}", COHORT_HEADER.join(","))?;
    for r in rows {
        let cond = match r.condition {
            Condition::Lad => "LAD",
            Condition::Wad => "WAD",
        };
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.participant_id, cond, r.mean_misc, r.max_misc, r.mean_msi, r.max_msi
        )?;
    }
    Ok(())
}

/// Participant summaries for one measure, plus the ids excluded because
/// they never reported any misery.
#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub participants: Vec<ParticipantSummary>,
    pub excluded: Vec<String>,
}

/// Pairs each participant's LAD and WAD rows. Every participant needs
/// exactly one row per condition.
pub fn summarize(rows: &[CohortRow], measure: Measure) -> Result<Cohort> {
    let mut by_id: BTreeMap<&str, [Option<&CohortRow>; 2]> = BTreeMap::new();
    for r in rows {
        let slot = &mut by_id.entry(&r.participant_id).or_default()[r.condition as usize];
        if slot.is_some() {
            return Err(Error::Invalid(format!(
                "participant `{}` has more than one {:?} row",
                r.participant_id, r.condition
            )));
        }
        *slot = Some(r);
    }
    let mut participants = Vec::new();
    let mut excluded = Vec::new();
    for (id, pair) in by_id {
        let [Some(lad), Some(wad)] = pair else {
            return Err(Error::Invalid(format!(
                "participant `{id}` needs both LAD and WAD rows"
            )));
        };
        if [lad, wad].iter().all(|r| r.mean_misc == 0.0 && r.max_misc == 0.0) {
            excluded.push(id.to_string());
            continue;
        }
        let pick = |r: &CohortRow| match measure {
            Measure::Mean => (r.mean_misc, r.mean_msi),
            Measure::Max => (r.max_misc, r.max_msi),
        };
        let ((misc_lad, msi_lad), (misc_wad, msi_wad)) = (pick(lad), pick(wad));
        participants.push(ParticipantSummary {
            participant_id: id.to_string(),
            misc_lad,
            misc_wad,
            msi_lad,
            msi_wad,
        });
    }
    Ok(Cohort { participants, excluded })
}

fn fmt_metric(m: Option<f64>) -> String {
    m.map_or_else(|| "undefined".to_string(), |v| format!("{v:.6}"))
}

/// Writes the matrix and metrics as `key,value` lines.
pub fn write_report(
    cm: &ConfusionMatrix,
    report: &MetricReport,
    measure: Measure,
    mut w: impl Write,
) -> std::io::Result<()> {
    writeln!(w, "key,value")?;
    writeln!(w, "measure,{measure}")?;
    for (k, v) in [
        ("tp", cm.tp),
        ("fp", cm.fp),
        ("fn", cm.fn_),
        ("tn", cm.tn),
        ("total", cm.total()),
    ] {
        writeln!(w, "{k},{v}")?;
    }
    for (k, v) in [
        ("accuracy", report.accuracy),
        ("precision", report.precision),
        ("recall", report.recall),
        ("f1", report.f1),
    ] {
        writeln!(w, "{k},{}", fmt_metric(v))?;
    }
    Ok(())
}

/// Plain-text table for terminals.
pub fn format_report(cm: &ConfusionMatrix, report: &MetricReport, measure: Measure) -> String {
    format!(
        "measure: {measure}\n\
         \n\
         {:<22}{:>14}{:>14}\n\
         {:<22}{:>14}{:>14}\n\
         {:<22}{:>14}{:>14}\n\
         \n\
         accuracy   {}\n\
         precision  {}\n\
         recall     {}\n\
         f1         {}\n",
        "",
        "pred positive",
        "pred negative",
        "actual positive",
        cm.tp,
        cm.fn_,
        "actual negative",
        cm.fp,
        cm.tn,
        fmt_metric(report.accuracy),
        fmt_metric(report.precision),
        fmt_metric(report.recall),
        fmt_metric(report.f1),
    )
}

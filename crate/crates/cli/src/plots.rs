//! Static SVG figures.

use std::path::Path;

use plotters::prelude::*;
use svcvv_core::eval::{ConfusionMatrix, Measure, MetricReport};
use svcvv_core::TimeSeries;

/// Points drawn per series; longer series are decimated.
const MAX_POINTS: usize = 4000;

pub fn msi_series(path: &Path, series: &[(String, TimeSeries<f64>)]) -> anyhow::Result<()> {
    let t_max = series.iter().filter_map(|(_, s)| s.last_time()).fold(1.0f64, f64::max);
    let t_min = series.iter().filter_map(|(_, s)| s.first_time()).fold(t_max, f64::min);
    let y_max = series
        .iter()
        .flat_map(|(_, s)| s.values().iter().copied())
        .fold(1.0f64, f64::max)
        * 1.1;

    let root = SVGBackend::new(path, (900, 450)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Motion sickness incidence", ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(55)
        .build_cartesian_2d(t_min..t_max, 0.0..y_max)?;
    chart.configure_mesh().x_desc("time [s]").y_desc("MSI [%]").draw()?;
    for (i, (label, s)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let stride = s.len().div_ceil(MAX_POINTS).max(1);
        let points = s.iter().step_by(stride).map(|(t, v)| (t, *v));
        chart
            .draw_series(LineSeries::new(points, color.stroke_width(2)))?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperLeft)
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()?;
    root.present()?;
    Ok(())
}

pub fn metric_bars(path: &Path, report: &MetricReport, measure: Measure) -> anyhow::Result<()> {
    let bars = [
        ("accuracy", report.accuracy),
        ("precision", report.precision),
        ("recall", report.recall),
        ("F1", report.f1),
    ];
    let root = SVGBackend::new(path, (600, 400)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(
            format!("Prediction metrics ({measure} MISC vs {measure} MSI)"),
            ("sans-serif", 18),
        )
        .margin(15)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(0.0..bars.len() as f64, 0.0..1.05)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(bars.len() * 2 + 1)
        .x_label_formatter(&|x| {
            let i = x.floor() as usize;
            if (x - x.floor() - 0.5).abs() < 1e-6 && i < bars.len() {
                bars[i].0.to_string()
            } else {
                String::new()
            }
        })
        .y_desc("rate")
        .draw()?;
    for (i, (_, value)) in bars.iter().enumerate() {
        let x = i as f64;
        match value {
            Some(v) => {
                chart.draw_series(std::iter::once(Rectangle::new(
                    [(x + 0.2, 0.0), (x + 0.8, *v)],
                    BLUE.mix(0.6).filled(),
                )))?;
                chart.draw_series(std::iter::once(Text::new(
                    format!("{v:.3}"),
                    (x + 0.35, v + 0.04),
                    ("sans-serif", 14),
                )))?;
            }
            None => {
                chart.draw_series(std::iter::once(Text::new(
                    "undefined",
                    (x + 0.25, 0.05),
                    ("sans-serif", 14),
                )))?;
            }
        }
    }
    root.present()?;
    Ok(())
}

pub fn confusion_matrix(path: &Path, cm: &ConfusionMatrix, measure: Measure) -> anyhow::Result<()> {
    let root = SVGBackend::new(path, (480, 440)).into_drawing_area();
    root.fill(&WHITE)?;
    let root = root.titled(&format!("Confusion matrix ({measure})"), ("sans-serif", 20))?;
    let cells = [
        ("TP", cm.tp, 0, 0),
        ("FN", cm.fn_, 1, 0),
        ("FP", cm.fp, 0, 1),
        ("TN", cm.tn, 1, 1),
    ];
    let peak = cells.iter().map(|c| c.1).max().unwrap_or(0).max(1) as f64;
    let (x0, y0, size) = (120i32, 60i32, 150i32);
    for (name, count, col, row) in cells {
        let (x, y) = (x0 + col * size, y0 + row * size);
        let shade = BLUE.mix(0.15 + 0.7 * count as f64 / peak);
        root.draw(&Rectangle::new([(x, y), (x + size, y + size)], shade.filled()))?;
        root.draw(&Rectangle::new([(x, y), (x + size, y + size)], BLACK))?;
        root.draw(&Text::new(
            format!("{name} = {count}"),
            (x + 40, y + size / 2 - 8),
            ("sans-serif", 20),
        ))?;
    }
    let label = ("sans-serif", 15);
    root.draw(&Text::new("predicted +", (x0 + 35, y0 - 22), label))?;
    root.draw(&Text::new("predicted -", (x0 + size + 35, y0 - 22), label))?;
    root.draw(&Text::new("actual +", (15, y0 + size / 2 - 8), label))?;
    root.draw(&Text::new("actual -", (15, y0 + size + size / 2 - 8), label))?;
    root.present()?;
    Ok(())
}

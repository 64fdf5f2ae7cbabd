//! CSV-to-SVG line plots for training histories and interference sweeps.

use std::path::Path;

use anyhow::{bail, Context, Result};
use plotters::prelude::*;

pub enum PlotKind {
    Loss,
    Accuracy,
}

struct Columns {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_csv(path: &Path) -> Result<Columns> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read csv {}", path.display()))?;
    let header: Vec<String> = reader
        .headers()
        .context("csv has no header row")?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.context("bad csv record")?;
        rows.push(record.iter().map(str::to_string).collect());
    }
    Ok(Columns { header, rows })
}

impl Columns {
    fn column(&self, name: &str) -> Result<Vec<f64>> {
        let idx = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow::anyhow!("missing column {name:?}"))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.get(idx)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| anyhow::anyhow!("bad value in column {name:?}, row {}", i + 1))
            })
            .collect()
    }

    fn has(&self, name: &str) -> bool {
        self.header.iter().any(|h| h == name)
    }
}

/// Plots a training history (two series: train, validation) or a sweep
/// (p versus interferer count), detected from the CSV header.
pub fn plot_csv(input: &Path, output: &Path, kind: PlotKind) -> Result<()> {
    let columns = read_csv(input)?;
    if columns.has("epoch") {
        let (a, b, label) = match kind {
            PlotKind::Loss => ("train_loss", "val_loss", "loss"),
            PlotKind::Accuracy => ("train_acc", "val_acc", "accuracy"),
        };
        let epochs = columns.column("epoch")?;
        let train = columns.column(a)?;
        let val = columns.column(b)?;
        line_plot(
            output,
            &format!("{label} per epoch"),
            "epoch",
            label,
            &[("train", &zip(&epochs, &train)), ("validation", &zip(&epochs, &val))],
            None,
        )
    } else if columns.has("U") {
        let u = columns.column("U")?;
        let p = columns.column("p")?;
        line_plot(
            output,
            "probability of semantic similarity versus interferer count",
            "interferers",
            "p",
            &[("p", &zip(&u, &p))],
            Some((0.0, 1.05)),
        )
    } else {
        bail!(
            "unrecognized csv schema (expected a history with column \"epoch\" \
             or a sweep with column \"U\"): {}",
            input.display()
        );
    }
}

fn zip(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    x.iter().copied().zip(y.iter().copied()).collect()
}

fn line_plot(
    output: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, &Vec<(f64, f64)>)],
    y_range: Option<(f64, f64)>,
) -> Result<()> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, pts)| pts.iter().copied()).collect();
    if all.is_empty() {
        bail!("nothing to plot: csv has no data rows");
    }
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &all {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if let Some((lo, hi)) = y_range {
        y_min = lo;
        y_max = hi;
    }
    if (x_max - x_min).abs() < f64::EPSILON {
        x_max = x_min + 1.0;
    }
    if (y_max - y_min).abs() < f64::EPSILON {
        y_max = y_min + 1.0;
    }

    let root = SVGBackend::new(output, (800, 600)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d(x_min..x_max, y_min..y_max)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()?;
    let palette = [&BLUE, &RED, &GREEN];
    for (i, (name, points)) in series.iter().enumerate() {
        let color = palette[i % palette.len()];
        chart
            .draw_series(LineSeries::new(points.iter().copied(), color))?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
        chart.draw_series(
            points
                .iter()
                .map(|&(x, y)| Circle::new((x, y), 3, color.filled())),
        )?;
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()?;
    root.present()?;
    Ok(())
}

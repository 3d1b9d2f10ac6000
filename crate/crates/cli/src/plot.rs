//! SVG line charts of the per-round curves CSV.

use std::path::Path;

use anyhow::{bail, Context, Result};
use plotters::prelude::*;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct CurvePoint {
    pub round: usize,
    pub hits_at_k: f64,
    pub avg_target_rank: f64,
}

pub fn read_curves(path: &Path) -> Result<Vec<CurvePoint>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let points = r
        .deserialize()
        .collect::<Result<Vec<CurvePoint>, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    if points.is_empty() {
        bail!("{}: no curve rows", path.display());
    }
    Ok(points)
}

fn panel(
    area: &DrawingArea<SVGBackend<'_>, plotters::coord::Shift>,
    caption: &str,
    points: &[(f64, f64)],
    y_max: f64,
    color: RGBColor,
) -> Result<()> {
    let x_max = points.last().map_or(1.0, |p| p.0).max(1.0);
    let mut chart = ChartBuilder::on(area)
        .caption(caption, ("sans-serif", 18))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..x_max, 0.0..y_max)
        .map_err(|e| anyhow::anyhow!("chart: {e}"))?;
    chart
        .configure_mesh()
        .x_desc("round")
        .x_labels(points.len().min(11))
        .draw()
        .map_err(|e| anyhow::anyhow!("chart: {e}"))?;
    chart
        .draw_series(LineSeries::new(points.iter().copied(), color.stroke_width(2)))
        .map_err(|e| anyhow::anyhow!("chart: {e}"))?;
    chart
        .draw_series(points.iter().map(|&p| Circle::new(p, 3, color.filled())))
        .map_err(|e| anyhow::anyhow!("chart: {e}"))?;
    Ok(())
}

/// Two panels side by side: Hits@K and average target rank against round.
pub fn render_svg(points: &[CurvePoint], k: Option<usize>) -> Result<String> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (960, 400)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| anyhow::anyhow!("chart: {e}"))?;
        let (left, right) = root.split_horizontally(480);
        let hits: Vec<(f64, f64)> = points.iter().map(|p| (p.round as f64, p.hits_at_k)).collect();
        let atr: Vec<(f64, f64)> = points.iter().map(|p| (p.round as f64, p.avg_target_rank)).collect();
        let hits_title = k.map_or_else(|| "Hits@K".to_owned(), |k| format!("Hits@{k}"));
        panel(&left, &hits_title, &hits, 1.0, BLUE)?;
        let atr_max = atr.iter().map(|p| p.1).fold(1.0, f64::max) * 1.05;
        panel(&right, "Average target rank", &atr, atr_max, RED)?;
        root.present().map_err(|e| anyhow::anyhow!("chart: {e}"))?;
    }
    Ok(svg)
}

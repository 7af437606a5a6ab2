//! PNG field images and SVG line charts.

use std::f64::consts::PI;
use std::path::Path;

use image::{Rgb, RgbImage};
use plotters::prelude::*;
use rtf_core::field::FieldGrid;

use crate::error::{CliError, Result};

/// Pixels per grid cell in field images.
const CELL: u32 = 10;
/// Dynamic range of magnitude images.
const RANGE_DB: f64 = 40.0;

const VIRIDIS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

fn lerp_table(table: &[[u8; 3]], t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0) * (table.len() - 1) as f64;
    let i = (t.floor() as usize).min(table.len() - 2);
    let f = t - i as f64;
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * f).round() as u8;
    let (a, b) = (table[i], table[i + 1]);
    Rgb([mix(a[0], b[0]), mix(a[1], b[1]), mix(a[2], b[2])])
}

/// Cyclic map for phase: a hue wheel at fixed lightness.
fn phase_color(phi: f64) -> Rgb<u8> {
    let t = (phi + PI) / (2.0 * PI);
    let c = |offset: f64| (127.5 + 127.5 * (2.0 * PI * (t + offset)).cos()).round() as u8;
    Rgb([c(0.0), c(-1.0 / 3.0), c(1.0 / 3.0)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldView {
    MagnitudeDb,
    Phase,
}

/// Renders frequency bin `k` of `field`, x along the width axis and y up.
pub fn field_png(field: &FieldGrid, k: usize, view: FieldView, path: &Path) -> Result<()> {
    let (w, h) = (field.width(), field.height());
    let slice = field.slice_at(k);
    let level = |z: num_complex::Complex64| 20.0 * z.norm().max(1e-300).log10();
    let top = slice.iter().map(|&z| level(z)).fold(f64::NEG_INFINITY, f64::max);
    let mut img = RgbImage::new(w as u32 * CELL, h as u32 * CELL);
    for (x, y, px) in img.enumerate_pixels_mut() {
        let gw = (x / CELL) as usize;
        let gh = h - 1 - (y / CELL) as usize;
        let z = slice[gw * h + gh];
        *px = match view {
            FieldView::MagnitudeDb => lerp_table(&VIRIDIS, 1.0 - (top - level(z)) / RANGE_DB),
            FieldView::Phase => phase_color(z.arg()),
        };
    }
    img.save(path).map_err(|e| CliError::Render {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn bounds(values: impl Iterator<Item = f64>, min_pad: f64) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(min_pad);
    let pad = if pad > 0.0 { pad } else { 0.5 };
    (lo - pad, hi + pad)
}

/// Panels side by side with a shared colour per series label.
pub fn line_chart_svg(path: &Path, panels: &[Panel], labels: &[String]) -> Result<()> {
    let render_err = |e: String| CliError::Render {
        path: path.to_path_buf(),
        message: e,
    };
    let width = 480 * panels.len().max(1) as u32;
    let root = SVGBackend::new(path, (width, 400)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| render_err(e.to_string()))?;
    let areas = root.split_evenly((1, panels.len().max(1)));
    for (panel, area) in panels.iter().zip(areas.iter()) {
        let xs = bounds(panel.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)), 0.0);
        let ys = bounds(panel.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)), 0.5);
        let mut chart = ChartBuilder::on(area)
            .caption(&panel.title, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(55)
            .build_cartesian_2d(xs.0..xs.1, ys.0..ys.1)
            .map_err(|e| render_err(e.to_string()))?;
        chart
            .configure_mesh()
            .x_desc(panel.x_label.as_str())
            .y_desc(panel.y_label.as_str())
            .draw()
            .map_err(|e| render_err(e.to_string()))?;
        for s in &panel.series {
            let idx = labels.iter().position(|l| l == &s.label).unwrap_or(0);
            let color = Palette99::pick(idx).to_rgba();
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
                .map_err(|e| render_err(e.to_string()))?
                .label(s.label.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.85))
            .border_style(BLACK)
            .position(SeriesLabelPosition::UpperRight)
            .draw()
            .map_err(|e| render_err(e.to_string()))?;
    }
    root.present().map_err(|e| render_err(e.to_string()))
}

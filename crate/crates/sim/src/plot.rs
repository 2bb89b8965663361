//! Static SVG line and step plots.

use std::path::Path;

use plotters::prelude::*;

use crate::results::{Aggregate, Cdf, ResultsError};
use crate::config::{Model, Scheme};

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error(transparent)]
    Results(#[from] ResultsError),
    #[error("drawing failed: {0}")]
    Draw(String),
}

fn draw_err<E: std::fmt::Display>(e: E) -> PlotError {
    PlotError::Draw(e.to_string())
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

/// A labelled polyline.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series]) -> Option<((f64, f64), (f64, f64))> {
    let pts = series.iter().flat_map(|s| &s.points).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for &(x, y) in pts {
        any = true;
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !any {
        return None;
    }
    let pad = |a: f64, b: f64| {
        let w = if b > a { (b - a) * 0.05 } else { a.abs().max(1e-12) * 0.05 };
        (a - w, b + w)
    };
    Some((pad(x0, x1), pad(y0, y1)))
}

/// Write `series` as a line chart. Errors when there is nothing finite to draw.
pub fn line_plot(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<(), PlotError> {
    let ((x0, x1), (y0, y1)) = bounds(series).ok_or(ResultsError::Empty)?;
    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(16)
        .x_label_area_size(44)
        .y_label_area_size(72)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .draw()
        .map_err(draw_err)?;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(draw_err)?
            .label(s.label.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart
            .draw_series(pts.into_iter().map(|p| Circle::new(p, 3, color.filled())))
            .map_err(draw_err)?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}

/// Expand a CDF into the corners of its step function.
pub fn step_points(cdf: &Cdf) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(2 * cdf.points.len());
    let mut prev = 0.0;
    for &(x, p) in &cdf.points {
        out.push((x, prev));
        out.push((x, p));
        prev = p;
    }
    out
}

pub fn cdf_plot(path: &Path, column: &str, cdfs: &[((Model, Scheme), Cdf)]) -> Result<(), PlotError> {
    let series: Vec<Series> = cdfs
        .iter()
        .map(|((m, s), c)| Series {
            label: format!("{} {}", s.name().to_uppercase(), m.name()),
            points: step_points(c),
        })
        .collect();
    line_plot(path, &format!("Empirical CDF of {column}"), column, "fraction", &series)
}

/// Mean objective against the sweep value, one line per (model, scheme).
pub fn sweep_plot(path: &Path, parameter: &str, rows: &[Aggregate]) -> Result<(), PlotError> {
    let mut series: Vec<((Model, Scheme), Series)> = Vec::new();
    for a in rows {
        let key = (a.model, a.scheme);
        let idx = match series.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                series.push((
                    key,
                    Series {
                        label: format!("{} {}", a.scheme.name().to_uppercase(), a.model.name()),
                        points: Vec::new(),
                    },
                ));
                series.len() - 1
            }
        };
        series[idx].1.points.push((a.value, a.mean));
    }
    let series: Vec<Series> = series.into_iter().map(|s| s.1).collect();
    line_plot(path, &format!("Mean objective vs {parameter}"), parameter, "objective (W)", &series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::results::empirical_cdf;

    #[test]
    fn empty_input_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let r = line_plot(&dir.path().join("x.svg"), "t", "x", "y", &[]);
        assert!(matches!(r, Err(PlotError::Results(ResultsError::Empty))));
        let nan = [Series {
            label: "a".into(),
            points: vec![(f64::NAN, 1.0)],
        }];
        assert!(line_plot(&dir.path().join("y.svg"), "t", "x", "y", &nan).is_err());
    }

    #[test]
    fn one_series_one_file_and_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let cdf = empirical_cdf(&[Some(0.1), Some(0.4), None, Some(0.2)]);
        let input = [((Model::Bounded, Scheme::Noma), cdf)];
        let a = dir.path().join("a.svg");
        let b = dir.path().join("b.svg");
        cdf_plot(&a, "objective_w", &input).unwrap();
        cdf_plot(&b, "objective_w", &input).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
        let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert!(ba.starts_with(b"<svg"));
        assert_eq!(ba, bb);
    }

    #[test]
    fn steps_start_at_zero() {
        let cdf = empirical_cdf(&[Some(1.0), Some(2.0)]);
        assert_eq!(step_points(&cdf), vec![(1.0, 0.0), (1.0, 0.5), (2.0, 0.5), (2.0, 1.0)]);
    }
}

//! SVG plots of a sweep directory.

use std::path::Path;

use crosskit_core::config::RunConfig;
use crosskit_core::io::{
    read_rows, JeffRow, MuRowCsv, SaturationRowCsv, JEFF_COLUMNS, MU_COLUMNS, SATURATION_COLUMNS,
};
use crosskit_core::{Error, Result};
use plotters::prelude::*;

const SIZE: (u32, u32) = (900, 600);
pub const PLOTS: [&str; 3] = ["jeff_vs_amplitude.svg", "mu_vs_detuning.svg", "saturation_vs_detuning.svg"];

fn plot_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Lower and upper bounds with a 5% margin; a degenerate range is widened.
fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1e-3) };
    (lo - pad, hi + pad)
}

/// Splits a curve into runs that stay inside `[lo, hi]`.
fn clipped(points: &[(f64, f64)], lo: f64, hi: f64) -> Vec<Vec<(f64, f64)>> {
    let mut runs: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
    for &(x, y) in points {
        if y.is_finite() && (lo..=hi).contains(&y) {
            runs.last_mut().unwrap().push((x, y));
        } else if !runs.last().unwrap().is_empty() {
            runs.push(Vec::new());
        }
    }
    runs.retain(|r| !r.is_empty());
    runs
}

pub fn render(dir: &Path, out: &Path) -> Result<()> {
    let jeff: Vec<JeffRow> = read_rows(&dir.join("jeff.csv"), &JEFF_COLUMNS)?;
    let mu: Vec<MuRowCsv> = read_rows(&dir.join("mu.csv"), &MU_COLUMNS)?;
    let saturation: Vec<SaturationRowCsv> = read_rows(&dir.join("saturation.csv"), &SATURATION_COLUMNS)?;
    // the echoed config supplies the second pole; without it only delta = 0 is marked
    let pole = RunConfig::from_file(&dir.join("config.cfg")).ok().map(|c| -c.anh2_mhz);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    jeff_plot(&out.join(PLOTS[0]), &jeff)?;
    mu_plot(&out.join(PLOTS[1]), &mu)?;
    saturation_plot(&out.join(PLOTS[2]), &saturation, pole)?;
    println!("wrote {} plots to {}", PLOTS.len(), out.display());
    Ok(())
}

fn jeff_plot(path: &Path, rows: &[JeffRow]) -> Result<()> {
    let mut deltas: Vec<f64> = rows.iter().map(|r| r.delta_mhz).collect();
    deltas.dedup();
    let points = |d: f64| -> Vec<(f64, f64)> {
        rows.iter()
            .filter(|r| r.kind == "point" && r.delta_mhz == d)
            .filter_map(|r| Some((r.amplitude?, r.jeff_mhz?)))
            .filter(|(a, j)| a.is_finite() && j.is_finite())
            .collect()
    };
    let all: Vec<(f64, f64)> = deltas.iter().flat_map(|&d| points(d)).collect();
    let (x0, x1) = bounds(all.iter().map(|p| p.0));
    let (y0, y1) = bounds(all.iter().map(|p| p.1));

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("J_eff vs drive amplitude", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("amplitude (MHz)")
        .y_desc("J_eff (MHz)")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for (i, &d) in deltas.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let pts = points(d);
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(1)))
            .map_err(|e| plot_err(path, e))?
            .label(format!("{d} MHz"))
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 16, y)], color));
        chart
            .draw_series(pts.into_iter().map(|p| Circle::new(p, 2, color.filled())))
            .map_err(|e| plot_err(path, e))?;
    }
    if deltas.len() <= 12 {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(|e| plot_err(path, e))?;
    }
    root.present().map_err(|e| plot_err(path, e))
}

fn mu_plot(path: &Path, rows: &[MuRowCsv]) -> Result<()> {
    let measured: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r.delta_mhz, r.slope?, r.slope_ci95.unwrap_or(0.0))))
        .filter(|p| p.1.is_finite())
        .collect();
    let theory: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.delta_mhz, r.mu_theory?))).collect();
    let numeric: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.delta_mhz, r.mu_numeric?))).collect();
    let (x0, x1) = bounds(rows.iter().map(|r| r.delta_mhz));
    // the theory diverges at its poles; scale the axis to the finite data
    let scale = measured.iter().map(|p| p.1.abs()).chain(numeric.iter().map(|p| p.1.abs())).fold(0.0, f64::max);
    let (y0, y1) = if scale > 0.0 { (-1.5 * scale, 1.5 * scale) } else { bounds(theory.iter().map(|p| p.1)) };

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("CR slope vs detuning", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("detuning (MHz)")
        .y_desc("mu = dJ_eff / d amplitude")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for (i, run) in clipped(&theory, y0, y1).into_iter().enumerate() {
        let s = chart.draw_series(LineSeries::new(run, BLUE.stroke_width(1))).map_err(|e| plot_err(path, e))?;
        if i == 0 {
            s.label("closed form").legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], BLUE));
        }
    }
    for (i, run) in clipped(&numeric, y0, y1).into_iter().enumerate() {
        let s = chart.draw_series(LineSeries::new(run, GREEN.stroke_width(1))).map_err(|e| plot_err(path, e))?;
        if i == 0 {
            s.label("exact dressing").legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], GREEN));
        }
    }
    chart
        .draw_series(measured.iter().map(|&(d, m, ci)| {
            ErrorBar::new_vertical(d, (m - ci).max(y0), m, (m + ci).min(y1), RED.filled(), 6)
        }))
        .map_err(|e| plot_err(path, e))?
        .label("simulated slope")
        .legend(|(x, y)| Circle::new((x + 8, y), 3, RED.filled()));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

fn saturation_plot(path: &Path, rows: &[SaturationRowCsv], pole: Option<f64>) -> Result<()> {
    let j = rows.first().map(|r| r.j_mhz);
    let mut xs: Vec<f64> = rows.iter().map(|r| r.delta_mhz).collect();
    xs.push(0.0);
    xs.extend(pole);
    let (x0, x1) = bounds(xs.into_iter());
    let (_, y1) = bounds(rows.iter().map(|r| r.saturation + r.saturation_ci95).chain(j));
    let (y0, y1) = (0.0, y1);

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Saturation rate vs detuning", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("detuning (MHz)")
        .y_desc("|J_eff| plateau (MHz)")
        .draw()
        .map_err(|e| plot_err(path, e))?;
    let grey = BLACK.mix(0.5);
    for x in std::iter::once(0.0).chain(pole) {
        chart
            .draw_series(DashedLineSeries::new([(x, y0), (x, y1)], 6, 4, grey.stroke_width(1)))
            .map_err(|e| plot_err(path, e))?;
    }
    if let Some(j) = j {
        chart
            .draw_series(DashedLineSeries::new([(x0, j), (x1, j)], 6, 4, RED.stroke_width(1)))
            .map_err(|e| plot_err(path, e))?
            .label(format!("J = {j} MHz"))
            .legend(|(x, y)| PathElement::new([(x, y), (x + 16, y)], RED));
    }
    chart
        .draw_series(rows.iter().map(|r| {
            let (lo, hi) = ((r.saturation - r.saturation_ci95).max(y0), (r.saturation + r.saturation_ci95).min(y1));
            ErrorBar::new_vertical(r.delta_mhz, lo, r.saturation, hi, BLUE.filled(), 6)
        }))
        .map_err(|e| plot_err(path, e))?
        .label("plateau")
        .legend(|(x, y)| Circle::new((x + 8, y), 3, BLUE.filled()));
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))
}

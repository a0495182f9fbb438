use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use plotters::prelude::*;

use crate::error::{Error, Result};
use crate::sim::Trace;

/// One plotted quantity: trace column, file stem and axis label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlotQuantity {
    pub column: &'static str,
    pub stem: &'static str,
    pub label: &'static str,
}

pub const QUANTITIES: [PlotQuantity; 7] = [
    PlotQuantity { column: "f_coi_pu", stem: "frequency", label: "frequency [pu]" },
    PlotQuantity { column: "conv_p_pu", stem: "converter_p", label: "active power [pu]" },
    PlotQuantity { column: "conv_q_pu", stem: "converter_q", label: "reactive power [pu]" },
    PlotQuantity { column: "pcc_v_pu", stem: "pcc_voltage", label: "PCC voltage [pu]" },
    PlotQuantity { column: "dc_voltage_v", stem: "dc_voltage", label: "DC voltage [V]" },
    PlotQuantity { column: "dc_current_a", stem: "dc_current", label: "DC current [A]" },
    PlotQuantity { column: "soc", stem: "soc", label: "SOC" },
];

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(23, 190, 207),
];

/// Font lookup: `GRIDSIM_FONT`, then common system locations. Without a
/// font the plots are drawn without text.
const FONT_CANDIDATES: [&str; 4] = [
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/TTF/DejaVuSans.ttf",
    "/usr/share/fonts/dejavu/DejaVuSans.ttf",
    "/Library/Fonts/Arial.ttf",
];

/// Registers a sans-serif font once; reports whether text will render.
pub fn text_available() -> bool {
    static REGISTERED: OnceLock<bool> = OnceLock::new();
    *REGISTERED.get_or_init(|| {
        let env = std::env::var("GRIDSIM_FONT").ok();
        let paths = env.iter().map(String::as_str).chain(FONT_CANDIDATES);
        for p in paths {
            if let Ok(bytes) = std::fs::read(p) {
                let bytes: &'static [u8] = Box::leak(bytes.into_boxed_slice());
                if plotters::style::register_font("sans-serif", FontStyle::Normal, bytes).is_ok() {
                    return true;
                }
            }
        }
        false
    })
}

fn plot_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))
}

fn series<'a>(trace: &'a Trace, column: &str) -> Option<(&'a [f64], &'a [f64])> {
    let y = trace.column(column)?;
    if y.iter().all(|v| v.is_nan()) {
        return None;
    }
    Some((trace.time().ok()?, y))
}

/// Writes one SVG per quantity present in at least one trace, overlaying
/// all traces. Returns the written paths.
pub fn plot_traces(traces: &[(String, Trace)], out_dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for q in QUANTITIES {
        let present: Vec<(&str, &[f64], &[f64])> = traces
            .iter()
            .filter_map(|(label, tr)| series(tr, q.column).map(|(t, y)| (label.as_str(), t, y)))
            .collect();
        if present.is_empty() {
            continue;
        }
        let path = match prefix {
            "" => out_dir.join(format!("{}.svg", q.stem)),
            _ => out_dir.join(format!("{prefix}_{}.svg", q.stem)),
        };
        draw(&path, &q, &present)?;
        written.push(path);
    }
    Ok(written)
}

fn draw(path: &Path, q: &PlotQuantity, data: &[(&str, &[f64], &[f64])]) -> Result<()> {
    let finite = |v: &&f64| v.is_finite();
    let t_max = data
        .iter()
        .flat_map(|d| d.1.iter().filter(finite))
        .fold(0.0f64, |a, b| a.max(*b));
    let (mut lo, mut hi) = data
        .iter()
        .flat_map(|d| d.2.iter().filter(finite))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
    let pad = ((hi - lo) * 0.05).max(1e-6 * hi.abs().max(1.0));
    lo -= pad;
    hi += pad;

    text_available();
    let root = SVGBackend::new(path, (960, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(path, e))?;
    let mut chart = ChartBuilder::on(&root)
        .margin(16)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..t_max.max(1e-9), lo..hi)
        .map_err(|e| plot_err(path, e))?;
    chart
        .configure_mesh()
        .x_desc("time [s]")
        .y_desc(q.label)
        .label_style(("sans-serif", 15))
        .draw()
        .map_err(|e| plot_err(path, e))?;
    for (k, (label, t, y)) in data.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(
                t.iter()
                    .zip(y.iter())
                    .filter(|(a, b)| a.is_finite() && b.is_finite())
                    .map(|(a, b)| (*a, *b)),
                color.stroke_width(2),
            ))
            .map_err(|e| plot_err(path, e))?
            .label(label.to_string())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::LowerRight)
        .label_font(("sans-serif", 15))
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(path, e))?;
    root.present().map_err(|e| plot_err(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlays_and_skips_absent_columns() {
        let dir = tempfile::tempdir().unwrap();
        let mk = |a: f64| {
            let mut tr = Trace::new(vec!["t_s".into(), "f_coi_pu".into(), "conv_q_pu".into()]);
            for k in 0..100 {
                let t = k as f64 * 0.1;
                tr.push_row(&[t, 1.0 - a * t / 100.0, f64::NAN]);
            }
            tr
        };
        let out = plot_traces(&[("a".into(), mk(0.01)), ("b".into(), mk(0.02))], dir.path(), "x").unwrap();
        assert_eq!(out.len(), 1);
        let svg = std::fs::read_to_string(&out[0]).unwrap();
        assert!(svg.starts_with("<svg"));
        if text_available() {
            assert!(svg.contains("\na\n</text>") && svg.contains("\nb\n</text>"), "legend names both runs");
            assert!(svg.contains("frequency [pu]"));
        }
    }
}

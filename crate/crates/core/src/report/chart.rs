//! Static SVG trajectory charts, hand-rolled so the output is a single
//! self-contained file with no external assets.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::records::{group_by_run, RecordRow};

pub const VALID_QUANTITIES: [&str; 9] = [
    "H",
    "S",
    "ppl",
    "tau",
    "alpha_planned",
    "alpha_eff",
    "rare_token_mass",
    "tail_coverage",
    "ece",
];

fn extract(row: &RecordRow, quantity: &str) -> Option<f64> {
    match quantity {
        "H" => Some(row.entropy),
        "S" => row.drift,
        "ppl" => Some(row.ppl),
        "tau" => Some(row.tau),
        "alpha_planned" => Some(row.alpha_planned),
        "alpha_eff" => Some(row.alpha_eff),
        "rare_token_mass" => Some(row.rare_token_mass),
        "tail_coverage" => Some(row.tail_coverage),
        "ece" => Some(row.ece),
        _ => None,
    }
}

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 50.0;
const MARGIN_RIGHT: f64 = 230.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 45.0;

const SERIES_COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

fn f(x: f64) -> String {
    format!("{x:.2}")
}

/// Render trajectories of the requested quantities, one series per
/// (run, quantity), each normalized to its own [min, max] so unrelated
/// scales share one canvas. Detected onsets appear as vertical markers.
pub fn render_chart(rows: &[RecordRow], quantities: &[String]) -> Result<String> {
    if quantities.is_empty() {
        return Err(Error::EmptyData("no quantities requested for chart".into()));
    }
    for q in quantities {
        if !VALID_QUANTITIES.contains(&q.as_str()) {
            return Err(Error::UnknownQuantity {
                got: q.clone(),
                valid: VALID_QUANTITIES.join(", "),
            });
        }
    }
    let runs = group_by_run(rows);
    let max_gen = rows.iter().map(|r| r.gen).max().unwrap_or(0);
    if runs.is_empty() || max_gen < 1 {
        return Err(Error::EmptyData("chart needs at least 2 generations of data".into()));
    }

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x_of = |gen: usize| MARGIN_LEFT + gen as f64 / max_gen as f64 * plot_w;
    let y_of = |t: f64| MARGIN_TOP + (1.0 - t) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        f(MARGIN_LEFT),
        f(MARGIN_TOP + plot_h),
        f(MARGIN_LEFT + plot_w),
        f(MARGIN_TOP + plot_h)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        f(MARGIN_LEFT),
        f(MARGIN_TOP),
        f(MARGIN_LEFT),
        f(MARGIN_TOP + plot_h)
    ));
    for gen in 0..=max_gen {
        let x = x_of(gen);
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{gen}</text>\n",
            f(x),
            f(MARGIN_TOP + plot_h + 16.0)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">generation</text>\n",
        f(MARGIN_LEFT + plot_w / 2.0),
        f(HEIGHT - 10.0)
    ));

    let mut legend_y = MARGIN_TOP + 10.0;
    let mut color_idx = 0usize;
    for (run_id, group) in &runs {
        for quantity in quantities {
            let points: Vec<(usize, f64)> = group
                .iter()
                .filter_map(|r| extract(r, quantity).map(|v| (r.gen, v)))
                .filter(|(_, v)| v.is_finite())
                .collect();
            if points.len() < 2 {
                continue;
            }
            let lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            let color = SERIES_COLORS[color_idx % SERIES_COLORS.len()];
            color_idx += 1;
            let path: Vec<String> = points
                .iter()
                .map(|&(g, v)| format!("{},{}", f(x_of(g)), f(y_of((v - lo) / span))))
                .collect();
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                path.join(" ")
            ));
            svg.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\n",
                f(MARGIN_LEFT + plot_w + 14.0),
                f(legend_y - 9.0)
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"11\">{run_id} {quantity} [{:.3}, {:.3}]</text>\n",
                f(MARGIN_LEFT + plot_w + 28.0),
                f(legend_y),
                lo,
                hi
            ));
            legend_y += 16.0;
        }
        // Onset markers from the stored flags.
        let hidden = group.iter().find(|r| r.hidden_flag).map(|r| r.gen);
        let visible = group.iter().find(|r| r.visible_flag).map(|r| r.gen);
        for (onset, color, label) in [(hidden, "#e69f00", "hidden"), (visible, "#cc0000", "visible")] {
            if let Some(g) = onset {
                let x = x_of(g);
                svg.push_str(&format!(
                    "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"{color}\" stroke-width=\"1.2\" stroke-dasharray=\"5,4\"/>\n",
                    f(x),
                    f(MARGIN_TOP),
                    f(MARGIN_TOP + plot_h)
                ));
                svg.push_str(&format!(
                    "<text x=\"{}\" y=\"{}\" font-size=\"10\" fill=\"{color}\" text-anchor=\"middle\">{label} g{g}</text>\n",
                    f(x),
                    f(MARGIN_TOP - 6.0)
                ));
            }
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_chart(rows: &[RecordRow], quantities: &[String], path: &Path) -> Result<()> {
    let svg = render_chart(rows, quantities)?;
    fs::write(path, svg).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regulator::ScheduleMode;

    fn rows() -> Vec<RecordRow> {
        (0..=6)
            .map(|g| RecordRow {
                run_id: "open_loop_s0".into(),
                seed: 0,
                mode: ScheduleMode::OpenLoop,
                gen: g,
                entropy: 4.0 - 0.5 * g as f64,
                drift: (g > 0).then_some(1.0 / (g as f64)),
                ppl: 10.0 * (1.0 + g as f64),
                tau: 1.0,
                alpha_planned: 1.0,
                alpha_eff: 1.0,
                realized_synth_frac: 1.0,
                rare_token_mass: 0.1,
                tail_coverage: 0.5,
                ece: 0.05,
                hidden_flag: g >= 3,
                visible_flag: g >= 5,
            })
            .collect()
    }

    #[test]
    fn entropy_marker_precedes_ppl_marker() {
        let svg = render_chart(&rows(), &["H".into(), "ppl".into()]).unwrap();
        let hidden_pos = svg.find("hidden g3").unwrap();
        let visible_pos = svg.find("visible g5").unwrap();
        assert!(hidden_pos < visible_pos);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn empty_quantities_rejected() {
        assert!(matches!(render_chart(&rows(), &[]), Err(Error::EmptyData(_))));
    }

    #[test]
    fn unknown_quantity_lists_valid_names() {
        let err = render_chart(&rows(), &["bogus".into()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("ppl"));
    }

    #[test]
    fn identical_input_identical_bytes() {
        let a = render_chart(&rows(), &["H".into()]).unwrap();
        let b = render_chart(&rows(), &["H".into()]).unwrap();
        assert_eq!(a, b);
    }
}

//! Minimal SVG log-log plots for convergence curves, written directly so
//! artifacts carry no plotting-library or timestamp noise and re-renders
//! are byte-identical.

use std::fmt::Write as _;
use std::io::Write;

use crate::Result;
use crate::experiments::CurveSummary;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 200.0;
const MARGIN_T: f64 = 24.0;
const MARGIN_B: f64 = 48.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

fn px(v: f64) -> String {
    format!("{v:.2}")
}

/// Renders one polyline per curve in log2-log2 coordinates with the fitted
/// line dashed on top and a legend naming each curve and its slope.
/// `pooled` selects the pooled-output means instead of the node-level ones.
pub fn plot_convergence_svg<W: Write>(curves: &[CurveSummary], pooled: bool, mut w: W) -> Result<()> {
    struct Series {
        label: String,
        color: &'static str,
        points: Vec<(f64, f64)>,
        fit: Option<(f64, f64)>,
        slope_text: String,
    }

    let mut series = Vec::new();
    for (i, c) in curves.iter().enumerate() {
        let means = if pooled { &c.mean_pooled } else { &c.mean_node };
        let points: Vec<(f64, f64)> = c
            .sizes
            .iter()
            .zip(means)
            .filter(|&(_, &e)| e > 0.0)
            .map(|(&n, &e)| ((n as f64).log2(), e.log2()))
            .collect();
        let fit = if pooled { &c.pooled_fit } else { &c.node_fit };
        series.push(Series {
            label: format!("r={} {}", c.r, c.signal),
            color: PALETTE[i % PALETTE.len()],
            points,
            fit: fit.as_ref().map(|f| (f.slope, f.intercept)),
            slope_text: fit
                .as_ref()
                .map(|f| format!(" (slope {:.2})", f.slope))
                .unwrap_or_default(),
        });
    }

    let mut body = String::new();
    let axis_label = if pooled { "log2 pooled error" } else { "log2 node error" };

    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        writeln!(
            body,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">no positive data points</text>",
            px(WIDTH / 2.0),
            px(HEIGHT / 2.0)
        )
        .ok();
    } else {
        let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x1 - x0 < 1e-9 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-9 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad_y = 0.05 * (y1 - y0);
        y0 -= pad_y;
        y1 += pad_y;

        let sx = (WIDTH - MARGIN_L - MARGIN_R) / (x1 - x0);
        let sy = (HEIGHT - MARGIN_T - MARGIN_B) / (y1 - y0);
        let fx = |x: f64| MARGIN_L + (x - x0) * sx;
        let fy = |y: f64| HEIGHT - MARGIN_B - (y - y0) * sy;

        // Axes with integer log2 ticks.
        writeln!(
            body,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            px(MARGIN_L),
            px(HEIGHT - MARGIN_B),
            px(WIDTH - MARGIN_R),
            px(HEIGHT - MARGIN_B)
        )
        .ok();
        writeln!(
            body,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            px(MARGIN_L),
            px(MARGIN_T),
            px(MARGIN_L),
            px(HEIGHT - MARGIN_B)
        )
        .ok();
        let x_step = (((x1 - x0) / 12.0).ceil() as i64).max(1);
        let mut t = x0.ceil() as i64;
        while (t as f64) <= x1 {
            let xpx = fx(t as f64);
            writeln!(
                body,
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>",
                px(xpx),
                px(HEIGHT - MARGIN_B),
                px(HEIGHT - MARGIN_B + 5.0)
            )
            .ok();
            writeln!(
                body,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
                px(xpx),
                px(HEIGHT - MARGIN_B + 20.0),
                t
            )
            .ok();
            t += x_step;
        }
        let y_step = (((y1 - y0) / 10.0).ceil() as i64).max(1);
        let mut t = y0.ceil() as i64;
        while (t as f64) <= y1 {
            let ypx = fy(t as f64);
            writeln!(
                body,
                "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"black\"/>",
                px(ypx),
                px(MARGIN_L - 5.0),
                px(MARGIN_L)
            )
            .ok();
            writeln!(
                body,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"12\">{}</text>",
                px(MARGIN_L - 9.0),
                px(ypx + 4.0),
                t
            )
            .ok();
            t += y_step;
        }
        writeln!(
            body,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">log2 N</text>",
            px((MARGIN_L + WIDTH - MARGIN_R) / 2.0),
            px(HEIGHT - 8.0)
        )
        .ok();
        writeln!(
            body,
            "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
             transform=\"rotate(-90 16 {})\">{}</text>",
            px((MARGIN_T + HEIGHT - MARGIN_B) / 2.0),
            px((MARGIN_T + HEIGHT - MARGIN_B) / 2.0),
            axis_label
        )
        .ok();

        for s in &series {
            if s.points.is_empty() {
                continue;
            }
            let pts: Vec<String> =
                s.points.iter().map(|&(x, y)| format!("{},{}", px(fx(x)), px(fy(y)))).collect();
            writeln!(
                body,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
                pts.join(" "),
                s.color
            )
            .ok();
            for &(x, y) in &s.points {
                writeln!(
                    body,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{}\"/>",
                    px(fx(x)),
                    px(fy(y)),
                    s.color
                )
                .ok();
            }
            if let Some((slope, intercept)) = s.fit {
                let xa = s.points.first().unwrap().0;
                let xb = s.points.last().unwrap().0;
                writeln!(
                    body,
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" \
                     stroke-dasharray=\"6 4\" stroke-width=\"1\"/>",
                    px(fx(xa)),
                    px(fy(slope * xa + intercept)),
                    px(fx(xb)),
                    px(fy(slope * xb + intercept)),
                    s.color
                )
                .ok();
            }
        }
    }

    // Legend in the right margin.
    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_T + 16.0 + 18.0 * i as f64;
        writeln!(
            body,
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>",
            px(WIDTH - MARGIN_R + 12.0),
            px(y - 10.0),
            s.color
        )
        .ok();
        writeln!(
            body,
            "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}{}</text>",
            px(WIDTH - MARGIN_R + 30.0),
            px(y),
            s.label,
            s.slope_text
        )
        .ok();
    }

    write!(
        w,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         width=\"{WIDTH}\" height=\"{HEIGHT}\" font-family=\"sans-serif\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n{body}</svg>\n"
    )?;
    Ok(())
}

//! Self-contained static SVG line charts for sweep results.
//!
//! Deliberately small: linear or log10 y-axes, nice tick placement,
//! polylines with point markers, a legend, and an optional footnote for
//! clamped values. No scripting, no external assets.

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

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
    pub log_y: bool,
    pub series: Vec<Series>,
    pub footnote: Option<String>,
}

struct Rect {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
}

/// Renders stacked panels into one SVG document.
pub fn render(panels: &[Panel], width: u32, panel_height: u32) -> String {
    let height = panel_height * panels.len() as u32;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    for (idx, panel) in panels.iter().enumerate() {
        render_panel(&mut out, panel, idx as f64 * panel_height as f64, width, panel_height);
    }
    out.push_str("</svg>\n");
    out
}

fn render_panel(out: &mut String, panel: &Panel, y_offset: f64, width: u32, height: u32) {
    let plot = Rect {
        x0: 62.0,
        y0: y_offset + 34.0,
        w: width as f64 - 62.0 - 120.0,
        h: height as f64 - 34.0 - 48.0,
    };

    let xs: Vec<f64> = panel
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .collect();
    let ys: Vec<f64> = panel
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| map_y(p.1, panel.log_y)))
        .collect();
    let (x_min, x_max) = padded_range(&xs, false);
    let (y_min, y_max) = padded_range(&ys, true);

    let to_px = |x: f64, y: f64| {
        let px = plot.x0 + (x - x_min) / (x_max - x_min) * plot.w;
        let py = plot.y0 + plot.h - (y - y_min) / (y_max - y_min) * plot.h;
        (px, py)
    };

    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" font-weight=\"bold\">{}</text>\n",
        plot.x0,
        y_offset + 20.0,
        escape(&panel.title)
    ));

    // gridlines and ticks
    for (value, label) in y_ticks(y_min, y_max, panel.log_y) {
        let (_, py) = to_px(x_min, value);
        out.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{py:.1}\" stroke=\"#dddddd\"/>\n",
            plot.x0,
            plot.x0 + plot.w
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
            plot.x0 - 5.0,
            py + 3.5,
            escape(&label)
        ));
    }
    for value in linear_ticks(x_min, x_max) {
        let (px, _) = to_px(value, y_min);
        out.push_str(&format!(
            "<line x1=\"{px:.1}\" y1=\"{:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"#dddddd\"/>\n",
            plot.y0,
            plot.y0 + plot.h
        ));
        out.push_str(&format!(
            "<text x=\"{px:.1}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            plot.y0 + plot.h + 14.0,
            format_tick(value)
        ));
    }

    // axes
    out.push_str(&format!(
        "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n",
        plot.x0, plot.y0, plot.w, plot.h
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
        plot.x0 + plot.w / 2.0,
        plot.y0 + plot.h + 30.0,
        escape(&panel.x_label)
    ));
    out.push_str(&format!(
        "<text x=\"14\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\" \
         transform=\"rotate(-90 14 {:.1})\">{}</text>\n",
        plot.y0 + plot.h / 2.0,
        plot.y0 + plot.h / 2.0,
        escape(&panel.y_label)
    ));

    for (s_idx, series) in panel.series.iter().enumerate() {
        let color = PALETTE[s_idx % PALETTE.len()];
        let pixels: Vec<(f64, f64)> = series
            .points
            .iter()
            .map(|&(x, y)| to_px(x, map_y(y, panel.log_y)))
            .collect();
        if pixels.len() > 1 {
            let path: Vec<String> = pixels
                .iter()
                .map(|(px, py)| format!("{px:.1},{py:.1}"))
                .collect();
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                path.join(" ")
            ));
        }
        for (px, py) in &pixels {
            out.push_str(&format!(
                "<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"2.2\" fill=\"{color}\"/>\n"
            ));
        }
        // legend entry
        let lx = plot.x0 + plot.w + 8.0;
        let ly = plot.y0 + 12.0 + 16.0 * s_idx as f64;
        out.push_str(&format!(
            "<line x1=\"{lx:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            lx + 16.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"10\">{}</text>\n",
            lx + 20.0,
            ly + 3.5,
            escape(&series.label)
        ));
    }

    if let Some(note) = &panel.footnote {
        out.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"9\" fill=\"#555555\">{}</text>\n",
            plot.x0,
            plot.y0 + plot.h + 42.0,
            escape(note)
        ));
    }
}

fn map_y(y: f64, log: bool) -> f64 {
    if log {
        y.log10()
    } else {
        y
    }
}

fn padded_range(values: &[f64], pad_flat: bool) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if !min.is_finite() || !max.is_finite() {
        return (0.0, 1.0);
    }
    if min == max {
        let pad = if pad_flat { min.abs().max(1.0) * 0.5 } else { 0.5 };
        return (min - pad, max + pad);
    }
    let pad = (max - min) * 0.05;
    (min - pad, max + pad)
}

fn linear_ticks(min: f64, max: f64) -> Vec<f64> {
    let raw_step = (max - min) / 5.0;
    let magnitude = 10f64.powf(raw_step.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|s| s * magnitude)
        .find(|s| *s >= raw_step)
        .unwrap_or(magnitude * 10.0);
    let mut ticks = Vec::new();
    let mut tick = (min / step).ceil() * step;
    while tick <= max + step * 1e-9 {
        ticks.push(tick);
        tick += step;
    }
    ticks
}

fn y_ticks(min: f64, max: f64, log: bool) -> Vec<(f64, String)> {
    if log {
        let lo = min.floor() as i32;
        let hi = max.ceil() as i32;
        let mut ticks = Vec::new();
        for exp in lo..=hi {
            let value = exp as f64;
            if value >= min && value <= max {
                ticks.push((value, format!("1e{exp}")));
            }
        }
        if ticks.is_empty() {
            ticks.push((min, format!("1e{min:.1}")));
            ticks.push((max, format!("1e{max:.1}")));
        }
        ticks
    } else {
        linear_ticks(min, max)
            .into_iter()
            .map(|t| (t, format_tick(t)))
            .collect()
    }
}

fn format_tick(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    let abs = value.abs();
    if abs >= 1000.0 || abs < 0.01 {
        format!("{value:.1e}")
    } else if abs >= 10.0 {
        format!("{value:.0}")
    } else {
        let s = format!("{value:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

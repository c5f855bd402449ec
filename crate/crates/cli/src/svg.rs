//! Minimal static SVG charts: stacked panels sharing a log-scaled x axis.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 280.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    /// `(x, y, half-width of the error bar)`
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// Horizontal reference lines `(label, y)`.
    pub lines: Vec<(String, f64)>,
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            (lo, hi) = (lo - pad, hi + pad);
        }
        let pad = 0.06 * (hi - lo);
        Self { lo: lo - pad, hi: hi + pad, log }
    }

    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.max(1e-300).log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).map(|t| if self.log { 10f64.powf(t) } else { t }).collect()
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders the panels top to bottom; x values are the union of all series.
pub fn render(title: &str, x_label: &str, panels: &[Panel]) -> String {
    let height = TOP + PANEL_HEIGHT * panels.len() as f64 + BOTTOM;
    let xs: Vec<f64> = panels.iter().flat_map(|p| p.series.iter().flat_map(|s| s.points.iter().map(|q| q.0))).collect();
    let xa = Axis::fit(xs.iter().copied(), true);
    let plot_w = WIDTH - LEFT - RIGHT;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, esc(title));
    for (pi, panel) in panels.iter().enumerate() {
        let top = TOP + PANEL_HEIGHT * pi as f64 + 10.0;
        let plot_h = PANEL_HEIGHT - 50.0;
        let ys = panel
            .series
            .iter()
            .flat_map(|s| s.points.iter().flat_map(|&(_, y, e)| [y - e, y + e]))
            .chain(panel.lines.iter().map(|l| l.1))
            .filter(|v| !panel.log_y || *v > 0.0);
        let ya = Axis::fit(ys, panel.log_y);
        let px = |x: f64| LEFT + plot_w * xa.unit(x);
        let py = |y: f64| top + plot_h * (1.0 - ya.unit(y));
        let _ = writeln!(out, r#"<g class="panel" data-index="{pi}">"#);
        let _ = writeln!(out, r##"<rect x="{LEFT}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##);
        for t in ya.ticks() {
            let y = py(t);
            let _ = writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + plot_w,
                LEFT - 6.0,
                y + 4.0,
                tick_label(t)
            );
        }
        let mut x_ticks: Vec<f64> = xs.clone();
        x_ticks.sort_by(f64::total_cmp);
        x_ticks.dedup();
        for &t in &x_ticks {
            let x = px(t);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{:.2}" stroke="#eee"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"##,
                top + plot_h,
                top + plot_h + 16.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            top + plot_h / 2.0,
            esc(&panel.y_label)
        );
        let mut legend_y = top + 14.0;
        for (si, s) in panel.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let pts: Vec<String> = s.points.iter().map(|&(x, y, _)| format!("{:.2},{:.2}", px(x), py(y))).collect();
            let _ = writeln!(out, r#"<g class="series" data-label="{}">"#, esc(&s.label));
            let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
            for &(x, y, e) in &s.points {
                let (cx, cy) = (px(x), py(y));
                if e > 0.0 {
                    let _ = writeln!(
                        out,
                        r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{color}"/>"#,
                        py(y - e),
                        py(y + e)
                    );
                }
                let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{color}"/>"#);
            }
            let _ = writeln!(out, "</g>");
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="12" height="3" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                LEFT + plot_w + 12.0,
                legend_y - 4.0,
                LEFT + plot_w + 30.0,
                legend_y,
                esc(&s.label)
            );
            legend_y += 18.0;
        }
        for (label, y) in &panel.lines {
            let yy = py(*y);
            let _ = writeln!(
                out,
                r##"<line class="reference" data-label="{}" x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#000" stroke-dasharray="6 4"/>"##,
                esc(label),
                LEFT + plot_w
            );
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#000" stroke-dasharray="4 3"/><text x="{:.2}" y="{:.2}">{}</text>"##,
                LEFT + plot_w + 12.0,
                legend_y - 4.0,
                LEFT + plot_w + 24.0,
                legend_y - 4.0,
                LEFT + plot_w + 30.0,
                legend_y,
                esc(label)
            );
            legend_y += 18.0;
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        height - 12.0,
        esc(x_label)
    );
    out.push_str("</svg>\n");
    out
}

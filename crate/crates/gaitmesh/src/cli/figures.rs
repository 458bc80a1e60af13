//! Dependency-free static SVG emission for the analysis figures: log-scale
//! per-disturbance MFPT charts, state-space scatter plots with
//! frequency-scaled markers and dangerous-state highlighting, and log-log
//! mesh-growth fits.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Canvas {
    body: String,
}

impl Canvas {
    fn new() -> Self {
        Self {
            body: String::new(),
        }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, dash: bool) {
        let dash_attr = if dash {
            " stroke-dasharray=\"4 3\""
        } else {
            ""
        };
        let _ = writeln!(
            self.body,
            "  <line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"1\"{dash_attr}/>"
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, fill: &str, stroke: Option<&str>) {
        let stroke_attr = match stroke {
            Some(s) => format!(" stroke=\"{s}\" stroke-width=\"1.5\""),
            None => String::new(),
        };
        let _ = writeln!(
            self.body,
            "  <circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{r:.2}\" fill=\"{fill}\"{stroke_attr}/>"
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            "  <rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>"
        );
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let _ = writeln!(
            self.body,
            "  <text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size:.1}\" font-family=\"sans-serif\" text-anchor=\"{anchor}\">{}</text>",
            esc(content)
        );
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n{}</svg>\n",
            self.body
        )
    }
}

/// Per-disturbance MFPT on a log₁₀ scale. Infinite entries render as capped
/// markers above the finite range, flagged in the legend; error slots render
/// as hollow markers at the axis.
pub fn sweep_figure(entries: &[(usize, Option<f64>)], title: &str) -> String {
    let finite: Vec<f64> = entries
        .iter()
        .filter_map(|(_, m)| *m)
        .filter(|m| m.is_finite() && *m > 0.0)
        .collect();
    let lo = finite
        .iter()
        .map(|m| m.log10())
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    let hi = finite
        .iter()
        .map(|m| m.log10())
        .fold(f64::NEG_INFINITY, f64::max)
        .max(lo + 1.0);
    let cap = hi + 0.8;
    let lo = lo - 0.2;

    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x_of = |i: usize| MARGIN + plot_w * (i as f64 + 0.5) / entries.len().max(1) as f64;
    let y_of = |logm: f64| MARGIN + plot_h * (1.0 - (logm - lo) / (cap - lo));

    let mut c = Canvas::new();
    c.rect(0.0, 0.0, WIDTH, HEIGHT, "white");
    c.text(WIDTH / 2.0, MARGIN / 2.0, 14.0, "middle", title);
    // axes
    c.line(MARGIN, MARGIN, MARGIN, HEIGHT - MARGIN, "black", false);
    c.line(
        MARGIN,
        HEIGHT - MARGIN,
        WIDTH - MARGIN,
        HEIGHT - MARGIN,
        "black",
        false,
    );
    c.text(
        MARGIN / 3.0,
        HEIGHT / 2.0,
        12.0,
        "middle",
        "log10(MFPT)",
    );
    c.text(
        WIDTH / 2.0,
        HEIGHT - MARGIN / 3.0,
        12.0,
        "middle",
        "disturbance index",
    );
    // y ticks at integer decades
    let mut dec = lo.ceil() as i64;
    while (dec as f64) <= cap {
        let y = y_of(dec as f64);
        c.line(MARGIN - 4.0, y, MARGIN, y, "black", false);
        c.text(MARGIN - 8.0, y + 4.0, 10.0, "end", &format!("{dec}"));
        dec += 1;
    }
    // cap line for infinite entries
    let has_inf = entries.iter().any(|(_, m)| m.map_or(false, |v| v.is_infinite()));
    if has_inf {
        c.line(MARGIN, y_of(cap), WIDTH - MARGIN, y_of(cap), "gray", true);
        c.text(
            WIDTH - MARGIN,
            y_of(cap) - 6.0,
            10.0,
            "end",
            "infinite MFPT (capped marker)",
        );
    }
    for (i, (idx, m)) in entries.iter().enumerate() {
        let x = x_of(i);
        match m {
            Some(v) if v.is_infinite() => {
                c.line(x, HEIGHT - MARGIN, x, y_of(cap), "steelblue", true);
                c.circle(x, y_of(cap), 5.0, "white", Some("steelblue"));
            }
            Some(v) if *v > 0.0 && v.is_finite() => {
                let y = y_of(v.log10());
                c.line(x, HEIGHT - MARGIN, x, y, "steelblue", false);
                c.circle(x, y, 4.0, "steelblue", None);
            }
            _ => {
                // failed slot: hollow marker at the axis
                c.circle(x, HEIGHT - MARGIN, 4.0, "white", Some("crimson"));
            }
        }
        c.text(
            x,
            HEIGHT - MARGIN + 14.0,
            10.0,
            "middle",
            &format!("{idx}"),
        );
    }
    c.finish()
}

/// A 2-d scatter point: position, marker weight (relative size), and
/// whether it is highlighted as dangerous.
#[derive(Debug, Clone, Copy)]
pub struct ScatterPoint {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
    pub dangerous: bool,
}

/// State-space scatter: marker area scales with weight, dangerous states are
/// circled in red.
pub fn scatter_figure(points: &[ScatterPoint], x_label: &str, y_label: &str, title: &str) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    if !x0.is_finite() || x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if !y0.is_finite() || y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let pad_x = 0.05 * (x1 - x0);
    let pad_y = 0.05 * (y1 - y0);
    let (x0, x1, y0, y1) = (x0 - pad_x, x1 + pad_x, y0 - pad_y, y1 + pad_y);

    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + plot_w * (x - x0) / (x1 - x0);
    let py = |y: f64| MARGIN + plot_h * (1.0 - (y - y0) / (y1 - y0));

    let w_max = points.iter().map(|p| p.weight).fold(0.0f64, f64::max).max(1e-12);

    let mut c = Canvas::new();
    c.rect(0.0, 0.0, WIDTH, HEIGHT, "white");
    c.text(WIDTH / 2.0, MARGIN / 2.0, 14.0, "middle", title);
    c.line(MARGIN, MARGIN, MARGIN, HEIGHT - MARGIN, "black", false);
    c.line(
        MARGIN,
        HEIGHT - MARGIN,
        WIDTH - MARGIN,
        HEIGHT - MARGIN,
        "black",
        false,
    );
    c.text(WIDTH / 2.0, HEIGHT - MARGIN / 3.0, 12.0, "middle", x_label);
    c.text(MARGIN / 3.0, HEIGHT / 2.0, 12.0, "middle", y_label);
    c.text(
        MARGIN,
        HEIGHT - MARGIN + 14.0,
        10.0,
        "middle",
        &format!("{x0:.3}"),
    );
    c.text(
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 14.0,
        10.0,
        "middle",
        &format!("{x1:.3}"),
    );
    c.text(MARGIN - 8.0, HEIGHT - MARGIN + 4.0, 10.0, "end", &format!("{y0:.3}"));
    c.text(MARGIN - 8.0, MARGIN + 4.0, 10.0, "end", &format!("{y1:.3}"));

    for p in points {
        let r = 2.0 + 6.0 * (p.weight / w_max).sqrt();
        c.circle(px(p.x), py(p.y), r, "rgba(70,130,180,0.6)", None);
        if p.dangerous {
            c.circle(px(p.x), py(p.y), r + 2.5, "none", Some("red"));
        }
    }
    if points.iter().any(|p| p.dangerous) {
        c.circle(WIDTH - MARGIN - 120.0, MARGIN + 10.0, 5.0, "none", Some("red"));
        c.text(
            WIDTH - MARGIN - 110.0,
            MARGIN + 14.0,
            10.0,
            "start",
            "dangerous state",
        );
    }
    c.finish()
}

/// Log-log mesh-growth plot with the fitted line and its slope.
pub fn loglog_figure(samples: &[(f64, usize)], slope: f64, intercept: f64, n_hat: f64) -> String {
    let xs: Vec<f64> = samples.iter().map(|(d, _)| d.log10()).collect();
    let ys: Vec<f64> = samples.iter().map(|(_, n)| (*n as f64).log10()).collect();
    let x0 = xs.iter().copied().fold(f64::INFINITY, f64::min) - 0.05;
    let x1 = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 0.05;
    let y0 = ys.iter().copied().fold(f64::INFINITY, f64::min) - 0.1;
    let y1 = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 0.1;

    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + plot_w * (x - x0) / (x1 - x0);
    let py = |y: f64| MARGIN + plot_h * (1.0 - (y - y0) / (y1 - y0));

    let mut c = Canvas::new();
    c.rect(0.0, 0.0, WIDTH, HEIGHT, "white");
    c.text(
        WIDTH / 2.0,
        MARGIN / 2.0,
        14.0,
        "middle",
        &format!("mesh growth: N ~ d_tr^-{n_hat:.2}"),
    );
    c.line(MARGIN, MARGIN, MARGIN, HEIGHT - MARGIN, "black", false);
    c.line(
        MARGIN,
        HEIGHT - MARGIN,
        WIDTH - MARGIN,
        HEIGHT - MARGIN,
        "black",
        false,
    );
    c.text(WIDTH / 2.0, HEIGHT - MARGIN / 3.0, 12.0, "middle", "log10 d_tr");
    c.text(MARGIN / 3.0, HEIGHT / 2.0, 12.0, "middle", "log10 N");

    // fitted line in natural log converts to the same slope in log10
    let ln10 = std::f64::consts::LN_10;
    let y_at = |x10: f64| (intercept + slope * (x10 * ln10)) / ln10;
    c.line(px(x0), py(y_at(x0)), px(x1), py(y_at(x1)), "gray", true);
    for (x, y) in xs.iter().zip(&ys) {
        c.circle(px(*x), py(*y), 4.0, "steelblue", None);
    }
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn well_formed(svg: &str) {
        roxmltree::Document::parse(svg).expect("SVG parses as XML");
    }

    #[test]
    fn sweep_figure_is_well_formed_with_inf_and_errors() {
        let entries = vec![
            (1, Some(12.5)),
            (2, Some(f64::INFINITY)),
            (3, None),
            (4, Some(1e6)),
        ];
        let svg = sweep_figure(&entries, "per-disturbance MFPT");
        well_formed(&svg);
        assert!(svg.contains("infinite MFPT"));
    }

    #[test]
    fn sweep_figure_handles_all_infinite() {
        let entries = vec![(1, Some(f64::INFINITY)), (2, Some(f64::INFINITY))];
        let svg = sweep_figure(&entries, "all infinite");
        well_formed(&svg);
    }

    #[test]
    fn scatter_figure_is_well_formed() {
        let pts = vec![
            ScatterPoint {
                x: 0.0,
                y: 1.0,
                weight: 3.0,
                dangerous: false,
            },
            ScatterPoint {
                x: 1.0,
                y: -1.0,
                weight: 1.0,
                dangerous: true,
            },
        ];
        let svg = scatter_figure(&pts, "pc1", "pc2", "states <&> markers");
        well_formed(&svg);
        assert!(svg.contains("dangerous state"));
    }

    #[test]
    fn loglog_figure_is_well_formed() {
        let samples = vec![(0.6, 28757), (0.7, 14891), (0.8, 8517)];
        let svg = loglog_figure(&samples, -4.23, 8.0, 4.23);
        well_formed(&svg);
    }

    #[test]
    fn degenerate_single_point_scatter() {
        let pts = vec![ScatterPoint {
            x: 2.0,
            y: 2.0,
            weight: 1.0,
            dangerous: false,
        }];
        well_formed(&scatter_figure(&pts, "x", "y", "one point"));
    }
}

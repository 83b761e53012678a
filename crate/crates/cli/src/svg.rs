//! Hand-rolled SVG emission for the result figures: grids of accuracy
//! scatter panels with a reference diagonal and confidence ellipses, and
//! grouped boxplots for coefficient, p-value, and neighbor-count tables.
//!
//! Data coordinates are mapped per panel; panels are square, so the
//! uniform scale keeps rotated ellipses true. SVG's y axis grows downward,
//! which flips rotation sign: a counter-clockwise data-space angle θ is
//! drawn with `rotate(−θ)`.

use std::fmt::Write as _;

use fairsim_core::analysis::EllipseSpec;
use fairsim_core::models::FeatureView;

/// Point color for complete files.
pub const COLOR_FULL: &str = "#20b2aa";
/// Point color for anonymized files.
pub const COLOR_ANON: &str = "#fa8072";
const COLOR_FULL_DARK: &str = "#0d6e68";
const COLOR_ANON_DARK: &str = "#c9503e";
const FONT: &str = "font-family=\"sans-serif\"";

fn view_color(view: FeatureView) -> &'static str {
    match view {
        FeatureView::Full => COLOR_FULL,
        FeatureView::Anonymous => COLOR_ANON,
    }
}

fn view_color_dark(view: FeatureView) -> &'static str {
    match view {
        FeatureView::Full => COLOR_FULL_DARK,
        FeatureView::Anonymous => COLOR_ANON_DARK,
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Compact numeric formatting for labels and coordinates.
fn fmt(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.into()
    }
}

/// An SVG document under construction.
struct Doc {
    body: String,
    width: f64,
    height: f64,
}

impl Doc {
    fn new(width: f64, height: f64) -> Doc {
        let mut doc = Doc { body: String::new(), width, height };
        let _ = writeln!(
            doc.body,
            "<rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>"
        );
        doc
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        let _ = writeln!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" {style}/>"
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, style: &str) {
        let _ = writeln!(
            self.body,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" {style}/>"
        );
    }

    fn circle(&mut self, cx: f64, cy: f64, r: f64, style: &str) {
        let _ = writeln!(self.body, "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" {style}/>");
    }

    fn ellipse(&mut self, cx: f64, cy: f64, rx: f64, ry: f64, angle_deg: f64, style: &str) {
        let _ = writeln!(
            self.body,
            "<ellipse cx=\"0\" cy=\"0\" rx=\"{rx:.2}\" ry=\"{ry:.2}\" \
             transform=\"translate({cx:.2} {cy:.2}) rotate({angle_deg:.2})\" {style}/>"
        );
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, extra: &str, s: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size}\" text-anchor=\"{anchor}\" {FONT} {extra}>{}</text>",
            escape(s)
        );
    }

    fn raw(&mut self, s: &str) {
        self.body.push_str(s);
        self.body.push('\n');
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
             viewBox=\"0 0 {w} {h}\">\n{body}</svg>\n",
            w = self.width,
            h = self.height,
            body = self.body
        )
    }
}

// ---------------------------------------------------------------------------
// Scatter-panel grids
// ---------------------------------------------------------------------------

/// One panel's drawable content, all in accuracy space [0, 1] × [0, 1].
#[derive(Debug, Default, Clone)]
pub struct Panel {
    /// (perfect-trained, biased-trained, file type) per replicate.
    pub points: Vec<(f64, f64, FeatureView)>,
    /// Cell mean per file type.
    pub means: Vec<(f64, f64, FeatureView)>,
    /// 95% concentration ellipse per file type.
    pub ellipses: Vec<(EllipseSpec, FeatureView)>,
}

const PANEL: f64 = 150.0;
const GAP: f64 = 14.0;
const LEFT: f64 = 64.0;
const TOP: f64 = 56.0;
const RIGHT: f64 = 96.0;
const BOTTOM: f64 = 52.0;

/// Renders a row-major grid of scatter panels: rows labeled on the right,
/// columns labeled on top, a y=x diagonal in every panel, points and
/// ellipses colored by file type.
pub fn scatter_grid(
    title: &str,
    row_labels: &[String],
    col_labels: &[String],
    panels: &[Panel],
) -> String {
    let (n_rows, n_cols) = (row_labels.len(), col_labels.len());
    assert_eq!(panels.len(), n_rows * n_cols, "panel grid shape");
    let width = LEFT + n_cols as f64 * PANEL + (n_cols - 1) as f64 * GAP + RIGHT;
    let height = TOP + n_rows as f64 * PANEL + (n_rows - 1) as f64 * GAP + BOTTOM;
    let mut doc = Doc::new(width, height);

    doc.text(width / 2.0, 20.0, 13.0, "middle", "font-weight=\"bold\"", title);
    // Legend, top right.
    let lx = width - RIGHT + 6.0;
    doc.circle(lx, 34.0, 3.0, &format!("fill=\"{COLOR_FULL}\""));
    doc.text(lx + 7.0, 37.5, 9.0, "start", "", "complete");
    doc.circle(lx, 46.0, 3.0, &format!("fill=\"{COLOR_ANON}\""));
    doc.text(lx + 7.0, 49.5, 9.0, "start", "", "anonymized");

    for (r, row_label) in row_labels.iter().enumerate() {
        for (c, col_label) in col_labels.iter().enumerate() {
            let px = LEFT + c as f64 * (PANEL + GAP);
            let py = TOP + r as f64 * (PANEL + GAP);
            let sx = |v: f64| px + v * PANEL;
            let sy = |v: f64| py + (1.0 - v) * PANEL;
            doc.raw("<g class=\"panel\">");
            doc.rect(px, py, PANEL, PANEL, "fill=\"none\" stroke=\"#555\" stroke-width=\"0.8\"");
            // Reference diagonal y = x.
            doc.line(
                sx(0.0),
                sy(0.0),
                sx(1.0),
                sy(1.0),
                "class=\"diag\" stroke=\"black\" stroke-width=\"0.8\"",
            );
            let panel = &panels[r * n_cols + c];
            for &(e, view) in panel.ellipses.iter() {
                let style = format!(
                    "fill=\"none\" stroke=\"{}\" stroke-width=\"1.1\" opacity=\"0.85\"",
                    view_color_dark(view)
                );
                doc.ellipse(
                    sx(e.center.0),
                    sy(e.center.1),
                    e.semi_axes.0 * PANEL,
                    e.semi_axes.1 * PANEL,
                    -e.rotation.to_degrees(),
                    &style,
                );
            }
            for &(x, y, view) in panel.points.iter() {
                let style = format!("fill=\"{}\" fill-opacity=\"0.55\"", view_color(view));
                doc.circle(sx(x), sy(y), 2.1, &style);
            }
            for &(x, y, view) in panel.means.iter() {
                let style = format!(
                    "class=\"mean\" stroke=\"{}\" stroke-width=\"1.6\"",
                    view_color_dark(view)
                );
                doc.line(sx(x) - 3.5, sy(y), sx(x) + 3.5, sy(y), &style);
                doc.line(sx(x), sy(y) - 3.5, sx(x), sy(y) + 3.5, &style);
            }
            doc.raw("</g>");
            if r == 0 {
                doc.text(px + PANEL / 2.0, TOP - 8.0, 10.0, "middle", "", col_label);
            }
            if c == n_cols - 1 {
                doc.text(px + PANEL + 8.0, py + PANEL / 2.0 + 3.0, 10.0, "start", "", row_label);
            }
            if r == n_rows - 1 {
                for t in [0.0, 0.5, 1.0] {
                    doc.text(sx(t), py + PANEL + 12.0, 8.0, "middle", "", &fmt(t));
                }
            }
            if c == 0 {
                for t in [0.0, 0.5, 1.0] {
                    doc.text(px - 4.0, sy(t) + 2.5, 8.0, "end", "", &fmt(t));
                }
            }
        }
    }
    let grid_h = n_rows as f64 * PANEL + (n_rows - 1) as f64 * GAP;
    doc.text(
        LEFT + (n_cols as f64 * PANEL + (n_cols - 1) as f64 * GAP) / 2.0,
        height - 14.0,
        11.0,
        "middle",
        "",
        "accuracy, trained on perfect ranking",
    );
    let y_mid = TOP + grid_h / 2.0;
    doc.text(
        16.0,
        y_mid,
        11.0,
        "middle",
        &format!("transform=\"rotate(-90 16 {y_mid:.2})\""),
        "accuracy, trained on biased ranking",
    );
    doc.finish()
}

// ---------------------------------------------------------------------------
// Grouped boxplots
// ---------------------------------------------------------------------------

/// One x-axis group of a boxplot: a label and one value series per file
/// type present.
#[derive(Debug, Clone)]
pub struct BoxGroup {
    pub label: String,
    pub series: Vec<(FeatureView, Vec<f64>)>,
}

/// Linear-interpolation quantile on a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - h.floor()) * (sorted[hi] - sorted[lo])
}

struct BoxStats {
    q1: f64,
    median: f64,
    q3: f64,
    whisker_lo: f64,
    whisker_hi: f64,
    outliers: Vec<f64>,
}

fn box_stats(values: &[f64]) -> BoxStats {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let whisker_lo = sorted.iter().copied().find(|v| *v >= lo_fence).unwrap_or(q1);
    let whisker_hi = sorted.iter().rev().copied().find(|v| *v <= hi_fence).unwrap_or(q3);
    let outliers = sorted.iter().copied().filter(|v| *v < lo_fence || *v > hi_fence).collect();
    BoxStats { q1, median, q3, whisker_lo, whisker_hi, outliers }
}

const BOX_W: f64 = 18.0;
const BOX_GAP: f64 = 6.0;
const GROUP_PAD: f64 = 14.0;
const PLOT_H: f64 = 300.0;
const B_LEFT: f64 = 56.0;
const B_TOP: f64 = 46.0;
const B_BOTTOM: f64 = 56.0;

/// Renders grouped boxplots with whiskers at 1.5 IQR, outlier dots, an
/// optional dashed reference line, and a per-file-type legend.
pub fn grouped_boxplot(
    title: &str,
    y_label: &str,
    groups: &[BoxGroup],
    y_domain: Option<(f64, f64)>,
    reference: Option<f64>,
) -> String {
    let group_w = |g: &BoxGroup| g.series.len() as f64 * (BOX_W + BOX_GAP) + GROUP_PAD;
    let plot_w: f64 = groups.iter().map(group_w).sum::<f64>().max(120.0);
    let width = B_LEFT + plot_w + 120.0;
    let height = B_TOP + PLOT_H + B_BOTTOM;

    let (mut lo, mut hi) = y_domain.unwrap_or_else(|| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for g in groups {
            for (_, vs) in &g.series {
                for &v in vs {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        if let Some(r) = reference {
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if !lo.is_finite() || !hi.is_finite() {
            (0.0, 1.0)
        } else if lo == hi {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = (hi - lo) * 0.06;
            (lo - pad, hi + pad)
        }
    });
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let sy = |v: f64| B_TOP + (hi - v) / (hi - lo) * PLOT_H;

    let mut doc = Doc::new(width, height);
    doc.text(width / 2.0, 20.0, 13.0, "middle", "font-weight=\"bold\"", title);
    doc.rect(B_LEFT, B_TOP, plot_w, PLOT_H, "fill=\"none\" stroke=\"#555\" stroke-width=\"0.8\"");

    // y ticks: 5 evenly spaced.
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        doc.line(B_LEFT - 3.0, sy(v), B_LEFT, sy(v), "stroke=\"#555\" stroke-width=\"0.8\"");
        doc.text(B_LEFT - 6.0, sy(v) + 2.5, 8.0, "end", "", &fmt(v));
    }
    let y_mid = B_TOP + PLOT_H / 2.0;
    doc.text(
        14.0,
        y_mid,
        10.0,
        "middle",
        &format!("transform=\"rotate(-90 14 {y_mid:.2})\""),
        y_label,
    );
    if let Some(r) = reference {
        doc.line(
            B_LEFT,
            sy(r),
            B_LEFT + plot_w,
            sy(r),
            "stroke=\"purple\" stroke-width=\"0.9\" stroke-dasharray=\"4 3\"",
        );
    }

    // Legend.
    let lx = B_LEFT + plot_w + 10.0;
    doc.rect(lx, 40.0, 10.0, 10.0, &format!("fill=\"{COLOR_FULL}\" fill-opacity=\"0.6\""));
    doc.text(lx + 14.0, 48.5, 9.0, "start", "", "complete");
    doc.rect(lx, 56.0, 10.0, 10.0, &format!("fill=\"{COLOR_ANON}\" fill-opacity=\"0.6\""));
    doc.text(lx + 14.0, 64.5, 9.0, "start", "", "anonymized");

    let mut x = B_LEFT + GROUP_PAD / 2.0;
    for group in groups {
        let gw = group.series.len() as f64 * (BOX_W + BOX_GAP);
        for (view, values) in &group.series {
            if values.is_empty() {
                x += BOX_W + BOX_GAP;
                continue;
            }
            let s = box_stats(values);
            let cx = x + BOX_W / 2.0;
            let color = view_color(*view);
            let dark = view_color_dark(*view);
            let whisker_style = format!("stroke=\"{dark}\" stroke-width=\"1\"");
            doc.line(cx, sy(s.whisker_lo), cx, sy(s.q1), &whisker_style);
            doc.line(cx, sy(s.q3), cx, sy(s.whisker_hi), &whisker_style);
            doc.line(cx - 5.0, sy(s.whisker_lo), cx + 5.0, sy(s.whisker_lo), &whisker_style);
            doc.line(cx - 5.0, sy(s.whisker_hi), cx + 5.0, sy(s.whisker_hi), &whisker_style);
            doc.rect(
                x,
                sy(s.q3),
                BOX_W,
                (sy(s.q1) - sy(s.q3)).max(0.5),
                &format!("class=\"box\" fill=\"{color}\" fill-opacity=\"0.6\" stroke=\"{dark}\" stroke-width=\"1\""),
            );
            doc.line(
                x,
                sy(s.median),
                x + BOX_W,
                sy(s.median),
                &format!("stroke=\"{dark}\" stroke-width=\"1.6\""),
            );
            for &o in &s.outliers {
                doc.circle(cx, sy(o), 1.6, &format!("fill=\"{dark}\" fill-opacity=\"0.55\""));
            }
            x += BOX_W + BOX_GAP;
        }
        let center = x - gw / 2.0 - BOX_GAP / 2.0;
        doc.text(
            center,
            B_TOP + PLOT_H + 14.0,
            8.5,
            "middle",
            &format!("transform=\"rotate(-30 {center:.2} {:.2})\"", B_TOP + PLOT_H + 14.0),
            &group.label,
        );
        x += GROUP_PAD;
    }
    doc.finish()
}

//! Plot-ready output for downsampled series: CSV rows and a static SVG line chart.
//!
//! Both renderers are pure functions of their input, so identical buckets
//! always give byte-identical files.

use std::fmt::Write as _;

use crate::metrics::Bucket;

pub const CSV_HEADER: &str = "bucket_start,mean,count";

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// `bucket_start,mean,count` rows with a header line.
pub fn buckets_csv(buckets: &[Bucket]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(','))
        .expect("writing to a Vec");
    for b in buckets {
        w.write_record([
            b.bucket_start.to_string(),
            b.mean.to_string(),
            b.count.to_string(),
        ])
        .expect("writing to a Vec");
    }
    String::from_utf8(w.into_inner().expect("flushing a Vec")).expect("csv output is utf-8")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum YScale {
    #[default]
    Linear,
    /// Non-positive means are left out.
    Log10,
}

#[derive(Debug, Clone, Default)]
pub struct ChartOptions {
    pub title: String,
    pub y_label: String,
    pub y_scale: YScale,
}

pub struct SeriesRef<'a> {
    pub label: &'a str,
    pub buckets: &'a [Bucket],
}

/// Line chart of one or more bucket series on a shared time axis.
pub fn render_svg(series: &[SeriesRef<'_>], options: &ChartOptions) -> String {
    let project = |v: f64| match options.y_scale {
        YScale::Linear => Some(v),
        YScale::Log10 if v > 0.0 => Some(v.log10()),
        YScale::Log10 => None,
    };
    let points: Vec<Vec<(u64, f64)>> = series
        .iter()
        .map(|s| {
            s.buckets
                .iter()
                .filter_map(|b| project(b.mean).map(|y| (b.bucket_start, y)))
                .collect()
        })
        .collect();
    let all = points.iter().flatten();
    let t0 = all.clone().map(|p| p.0).min().unwrap_or(0);
    let t1 = all.clone().map(|p| p.0).max().unwrap_or(0);
    let mut y0 = all.clone().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let mut y1 = all.map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if !y0.is_finite() {
        (y0, y1) = (0.0, 1.0);
    }
    if y1 - y0 <= f64::EPSILON * y0.abs().max(1.0) {
        let pad = if y0 == 0.0 { 1.0 } else { y0.abs() * 0.1 };
        (y0, y1) = (y0 - pad, y1 + pad);
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let span_t = (t1 - t0).max(1) as f64;
    let x = |t: u64| LEFT + (t - t0) as f64 / span_t * plot_w;
    let y = |v: f64| TOP + (1.0 - (v - y0) / (y1 - y0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(&options.title)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );

    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let v = y0 + frac * (y1 - y0);
        let py = y(v);
        let label = match options.y_scale {
            YScale::Linear => fmt_value(v),
            YScale::Log10 => fmt_value(10f64.powf(v)),
        };
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"#,
            LEFT - 6.0,
            py + 4.0
        );

        let t = t0 + ((t1 - t0) as f64 * frac).round() as u64;
        let px = x(t);
        let hours = (t - t0) as f64 / 3600.0;
        let _ = writeln!(
            svg,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">+{hours:.1}h</text>"#,
            TOP + plot_h + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time since {t0} (unix s)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let y_label = match options.y_scale {
        YScale::Linear => options.y_label.clone(),
        YScale::Log10 => format!("{} (log scale)", options.y_label),
    };
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + plot_h / 2.0,
        escape(&y_label)
    );

    for (i, (s, pts)) in series.iter().zip(&points).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if pts.len() == 1 {
            let (t, v) = pts[0];
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                x(t),
                y(v)
            );
        } else if !pts.is_empty() {
            let coords: Vec<String> = pts
                .iter()
                .map(|&(t, v)| format!("{:.2},{:.2}", x(t), y(v)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                coords.join(" ")
            );
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + plot_w + 12.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{lx:.2}" y="{:.2}" width="12" height="3" fill="{color}"/>"#,
            ly - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#,
            lx + 18.0,
            escape(s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn fmt_value(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        return format!("{v:.2e}");
    }
    let s = format!("{v:.4}");
    s.trim_end_matches('0').trim_end_matches('.').to_owned()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

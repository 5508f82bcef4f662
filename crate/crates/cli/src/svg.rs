//! Minimal SVG line charts for `--plots`.

use std::fmt::Write as _;

use remest::solver::{ThresholdPolicy, ValueTable};

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let finite = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in finite() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#, W / 2.0).unwrap();
    writeln!(
        s,
        r#"<path d="M{PAD} {PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 10.0).unwrap();
    writeln!(s, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">{y_label}</text>"#, H / 2.0, H / 2.0).unwrap();
    for (v, x, y, anchor) in [(x0, sx(x0), H - PAD + 16.0, "middle"), (x1, sx(x1), H - PAD + 16.0, "middle")] {
        writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.3}</text>"#).unwrap();
    }
    for v in [y0, y1] {
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.3}</text>"#, PAD - 4.0, sy(v) + 4.0).unwrap();
    }
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        let mut pen_up = true;
        for &(x, y) in &ser.points {
            if !(x.is_finite() && y.is_finite()) {
                pen_up = true;
                continue;
            }
            write!(d, "{}{:.2} {:.2} ", if pen_up { 'M' } else { 'L' }, sx(x), sy(y)).unwrap();
            pen_up = false;
        }
        writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.trim_end()).unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - PAD + 4.0 - 40.0,
            PAD + 14.0 * i as f64,
            ser.label
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

/// Threshold against time, one line per energy level. Infinite thresholds
/// leave gaps.
pub fn thresholds(policy: &ThresholdPolicy) -> String {
    let series: Vec<Series> = (1..=policy.battery_cap())
        .map(|e| Series {
            label: format!("e={e}"),
            points: (1..=policy.horizon()).map(|t| (t as f64, policy.threshold(t, e))).collect(),
        })
        .collect();
    chart("thresholds", "t", "threshold", &series)
}

/// Value at stage `t` against distance, one line per energy level.
pub fn values(table: &ValueTable, t: usize) -> String {
    let n = table.grid.len();
    let series: Vec<Series> = (0..=table.battery_cap)
        .map(|e| {
            let mut points: Vec<(f64, f64)> = (0..n).map(|i| (table.distance(t, i), table.value(t, e, i))).collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            points.dedup_by(|a, b| a.0 == b.0);
            Series { label: format!("e={e}"), points }
        })
        .collect();
    chart(&format!("value at t={t}"), "distance", "J", &series)
}

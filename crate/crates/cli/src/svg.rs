//! Hand-written SVG bar charts. Output depends only on the input values, so
//! identical inputs give identical bytes.

use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub label: String,
    pub mean: f64,
    pub std: f64,
    /// Bars sharing a group sit together; groups are separated by a gap.
    pub group: String,
    /// Colour key, e.g. the angle schedule.
    pub series: String,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 90.0;
const PALETTE: [&str; 5] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Round `x` up to 1, 2 or 5 times a power of ten.
fn nice_ceiling(x: f64) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    let p = 10f64.powf(x.log10().floor());
    let m = x / p;
    let step = if m <= 1.0 {
        1.0
    } else if m <= 2.0 {
        2.0
    } else if m <= 5.0 {
        5.0
    } else {
        10.0
    };
    step * p
}

/// Grouped bar chart with mean ± std error bars. Negative means are clipped
/// at the axis.
pub fn bar_chart(title: &str, y_label: &str, bars: &[Bar]) -> String {
    let mut series: Vec<&str> = Vec::new();
    for b in bars {
        if !series.contains(&b.series.as_str()) {
            series.push(&b.series);
        }
    }
    let top_value = bars.iter().map(|b| b.mean + b.std).fold(0.0, f64::max);
    let y_max = nice_ceiling(top_value);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let y = |v: f64| TOP + plot_h * (1.0 - (v / y_max).clamp(0.0, 1.0));

    // Horizontal slots: one per bar plus one gap between groups.
    let mut slots = Vec::with_capacity(bars.len());
    let mut pos: f64 = 0.0;
    for (i, b) in bars.iter().enumerate() {
        if i > 0 && bars[i - 1].group != b.group {
            pos += 0.6;
        }
        slots.push(pos);
        pos += 1.0;
    }
    let slot_w = plot_w / pos.max(1.0);
    let bar_w = slot_w * 0.7;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for k in 0..=5 {
        let v = y_max * k as f64 / 5.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#dddddd"/>"##,
            WIDTH - RIGHT
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            yy + 4.0,
            format_tick(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text transform="translate(18,{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    for (b, &slot) in bars.iter().zip(&slots) {
        let color =
            PALETTE[series.iter().position(|x| *x == b.series).unwrap_or(0) % PALETTE.len()];
        let x0 = LEFT + slot * slot_w + (slot_w - bar_w) / 2.0;
        let cx = x0 + bar_w / 2.0;
        let (yt, yb) = (y(b.mean), y(0.0));
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.2}" y="{yt:.2}" width="{bar_w:.2}" height="{:.2}" fill="{color}"><title>{}: {:.4} ± {:.4}</title></rect>"#,
            yb - yt,
            escape(&b.label),
            b.mean,
            b.std
        );
        let (lo, hi) = (y(b.mean - b.std), y(b.mean + b.std));
        let cap = bar_w * 0.2;
        let _ = writeln!(
            s,
            r#"<g class="error-bar" stroke="black"><line x1="{cx:.2}" y1="{lo:.2}" x2="{cx:.2}" y2="{hi:.2}"/><line x1="{:.2}" y1="{lo:.2}" x2="{:.2}" y2="{lo:.2}"/><line x1="{:.2}" y1="{hi:.2}" x2="{:.2}" y2="{hi:.2}"/></g>"#,
            cx - cap,
            cx + cap,
            cx - cap,
            cx + cap
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate({cx:.2},{:.2}) rotate(35)" text-anchor="start">{}</text>"#,
            yb + 14.0,
            escape(&b.label)
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        y(0.0),
        WIDTH - RIGHT,
        y(0.0)
    );
    for (i, name) in series.iter().enumerate() {
        let x = WIDTH - RIGHT - 110.0;
        let yy = TOP + 4.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.1}" y="{yy:.1}" width="10" height="10" fill="{}"/>"#,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            x + 14.0,
            yy + 9.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bars(std: f64) -> Vec<Bar> {
        ["fbp_full", "fbp_uniform", "pvae_uniform"]
            .iter()
            .enumerate()
            .map(|(i, l)| Bar {
                label: l.to_string(),
                mean: 0.5 + 0.1 * i as f64,
                std,
                group: l.split('_').next().unwrap().into(),
                series: l.split('_').nth(1).unwrap().into(),
            })
            .collect()
    }

    #[test]
    fn one_error_bar_per_bar() {
        let svg = bar_chart("SSIM", "mean", &bars(0.05));
        assert_eq!(svg.matches(r#"class="error-bar""#).count(), 3);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn zero_std_gives_zero_height_error_bars() {
        let svg = bar_chart("SSIM", "mean", &bars(0.0));
        for g in svg.lines().filter(|l| l.contains("error-bar")) {
            let attr = |name: &str| -> String {
                let i = g.find(&format!("{name}=\"")).unwrap() + name.len() + 2;
                g[i..].split('"').next().unwrap().to_string()
            };
            assert_eq!(attr("y1"), attr("y2"));
        }
    }

    #[test]
    fn deterministic_and_escaped() {
        let mut b = bars(0.01);
        b[0].label = "a<b".into();
        assert_eq!(bar_chart("t", "y", &b), bar_chart("t", "y", &b));
        assert!(bar_chart("t", "y", &b).contains("a&lt;b"));
    }

    #[test]
    fn nice_ceilings() {
        assert_eq!(nice_ceiling(0.87), 1.0);
        assert_eq!(nice_ceiling(17.0), 20.0);
        assert_eq!(nice_ceiling(0.0031), 0.005);
        assert_eq!(nice_ceiling(0.0), 1.0);
    }
}

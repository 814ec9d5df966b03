use std::fmt::Write;

use super::stats::Bin;

const WIDTH: f64 = 520.0;
const HEIGHT: f64 = 380.0;
const MARGIN: f64 = 50.0;

/// One scatter series plus its binned means, drawn in `color`.
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
    pub bins: &'a [Bin],
}

fn px(x: f64) -> f64 {
    MARGIN + x * (WIDTH - 2.0 * MARGIN)
}

fn py(y: f64) -> f64 {
    HEIGHT - MARGIN - y * (HEIGHT - 2.0 * MARGIN)
}

/// Scatter of complexity (x) against normalized entropy (y) on the unit
/// square, with binned means joined by a polyline.
pub fn render_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut s = String::new();
    // writing into a String cannot fail
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for k in 0..=10 {
        let v = k as f64 / 10.0;
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"##,
            py(0.0),
            py(1.0),
            py(0.0) + 14.0,
            x = px(v),
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"##,
            px(0.0),
            px(1.0),
            px(0.0) - 4.0,
            py(v) + 4.0,
            y = py(v),
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        for &(x, y) in &ser.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.5"/>"#,
                px(x),
                py(y.clamp(0.0, 1.0)),
                ser.color
            );
        }
        let line: Vec<String> = ser
            .bins
            .iter()
            .filter_map(|b| {
                b.mean
                    .map(|m| format!("{:.2},{:.2}", px(b.center), py(m.clamp(0.0, 1.0))))
            })
            .collect();
        if line.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
                line.join(" "),
                ser.color
            );
        }
        let ly = MARGIN + 14.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            px(1.0) - 90.0,
            ly - 9.0,
            ser.color,
            px(1.0) - 75.0,
            ly,
            escape(ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_one_circle_per_point() {
        let bins = [
            Bin {
                center: 0.05,
                mean: Some(0.2),
                count: 1,
            },
            Bin {
                center: 0.15,
                mean: Some(0.4),
                count: 1,
            },
        ];
        let svg = render_svg(
            "a < b",
            "x",
            "y",
            &[Series {
                label: "t",
                color: "#1f77b4",
                points: vec![(0.0, 0.2), (0.1, 0.4)],
                bins: &bins,
            }],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("a &lt; b"));
    }
}

//! Horizontal bar chart of per-class recall.

use std::fmt::Write as _;

const ROW: usize = 22;
const LABEL_W: usize = 180;
const BAR_W: usize = 400;
const PAD: usize = 10;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Rows are drawn in the given order; `None` recalls get an empty bar.
pub fn recall_chart(title: &str, rows: &[(String, Option<f64>)]) -> String {
    let width = LABEL_W + BAR_W + 80 + 2 * PAD;
    let height = 40 + rows.len() * ROW + PAD;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{PAD}" y="22" font-size="14" font-weight="bold">{}</text>"#, escape(title)).unwrap();
    for (i, (class, recall)) in rows.iter().enumerate() {
        let y = 40 + i * ROW;
        let x0 = PAD + LABEL_W;
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 6, y + 14, escape(class)).unwrap();
        writeln!(s, r##"<rect x="{x0}" y="{y}" width="{BAR_W}" height="{}" fill="#eeeeee"/>"##, ROW - 4).unwrap();
        let label = match recall {
            Some(r) => {
                let w = (r.clamp(0.0, 1.0) * BAR_W as f64).round() as usize;
                writeln!(s, r##"<rect x="{x0}" y="{y}" width="{w}" height="{}" fill="#3b6ea8"/>"##, ROW - 4).unwrap();
                format!("{r:.3}")
            }
            None => "n/a".to_string(),
        };
        writeln!(s, r#"<text x="{}" y="{}">{label}</text>"#, x0 + BAR_W + 6, y + 14).unwrap();
    }
    s.push_str("</svg>\n");
    s
}

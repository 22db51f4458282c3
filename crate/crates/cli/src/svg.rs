//! Static SVG scatter of ellipse centers with their confidence ellipses.

use std::fmt::Write;

use featboot_core::ellipse::ConfidenceEllipseSet;

const SIZE: f64 = 640.0;
const MARGIN: f64 = 40.0;

/// Maps `t` in `[0, 1]` onto a blue-to-yellow ramp.
fn ramp(t: f64) -> String {
    let stops = [(68.0, 1.0, 84.0), (59.0, 82.0, 139.0), (33.0, 145.0, 140.0), (94.0, 201.0, 98.0), (253.0, 231.0, 37.0)];
    let x = t.clamp(0.0, 1.0) * (stops.len() - 1) as f64;
    let i = (x.floor() as usize).min(stops.len() - 2);
    let f = x - i as f64;
    let lerp = |a: f64, b: f64| (a + f * (b - a)).round() as u8;
    let (a, b) = (stops[i], stops[i + 1]);
    format!("#{:02x}{:02x}{:02x}", lerp(a.0, b.0), lerp(a.1, b.1), lerp(a.2, b.2))
}

/// Draws the first two coordinates of every ellipse. `shade`, when given,
/// colors samples by value.
pub fn render(set: &ConfidenceEllipseSet, shade: Option<&[f64]>) -> String {
    let q = set.quantile;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut shapes = Vec::with_capacity(set.len());
    for e in &set.ellipses {
        let (lengths, dirs) = e.axes(q);
        let angle = dirs[(1, 0)].atan2(dirs[(0, 0)]).to_degrees();
        let (rx, ry) = (lengths[0], lengths.get(1).copied().unwrap_or(lengths[0]));
        for d in 0..2 {
            let reach = rx.max(ry);
            lo[d] = lo[d].min(e.mean[d] - reach);
            hi[d] = hi[d].max(e.mean[d] + reach);
        }
        shapes.push((e.mean[0], e.mean[1], rx, ry, angle));
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let px = |x: f64| MARGIN + (x - lo[0]) * scale;
    let py = |y: f64| SIZE - MARGIN - (y - lo[1]) * scale;

    let (smin, smax) = shade
        .map(|s| s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v))))
        .unwrap_or((0.0, 1.0));
    let color = |i: usize| match shade {
        Some(s) if smax > smin => ramp((s[i] - smin) / (smax - smin)),
        Some(_) => ramp(0.5),
        None => "#3b528b".to_string(),
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(out, r#"<g fill-opacity="0.15" stroke-opacity="0.6" stroke-width="0.8">"#);
    for (i, (cx, cy, rx, ry, angle)) in shapes.iter().enumerate() {
        let c = color(i);
        let _ = writeln!(
            out,
            r#"<ellipse cx="{:.3}" cy="{:.3}" rx="{:.3}" ry="{:.3}" transform="rotate({:.3} {:.3} {:.3})" fill="{c}" stroke="{c}"/>"#,
            px(*cx),
            py(*cy),
            rx * scale,
            ry * scale,
            -angle,
            px(*cx),
            py(*cy),
        );
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, "<g>");
    for (i, (cx, cy, ..)) in shapes.iter().enumerate() {
        let _ = writeln!(out, r#"<circle cx="{:.3}" cy="{:.3}" r="1.5" fill="{}"/>"#, px(*cx), py(*cy), color(i));
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="{:.0}" font-family="sans-serif" font-size="12">{:.0}% confidence ellipses, n = {}</text>"#,
        MARGIN / 2.0,
        set.level * 100.0,
        set.len()
    );
    out.push_str("</svg>\n");
    out
}

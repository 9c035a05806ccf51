//! Standalone SVG figures: mean-Pd curves per detector and per-bin Pd
//! heat maps.

use std::fmt::Write as _;

use svdd_cfar::cfar::{DetectionReport, DetectorKind};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

const PALETTE: [&str; 5] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn snr_range(snrs: &[f64]) -> (f64, f64) {
    let lo = snrs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = snrs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

fn snr_grid(report: &DetectionReport) -> Vec<f64> {
    let mut snrs: Vec<f64> = Vec::new();
    for r in &report.rows {
        if !snrs.contains(&r.snr_db) {
            snrs.push(r.snr_db);
        }
    }
    snrs.sort_by(f64::total_cmp);
    snrs
}

/// Mean Pd over Doppler bins against SNR, one series per detector.
pub fn pd_curves_svg(report: &DetectionReport) -> String {
    let snrs = snr_grid(report);
    let (x0, x1) = snr_range(&snrs);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |snr: f64| LEFT + (snr - x0) / (x1 - x0) * pw;
    let py = |pd: f64| TOP + (1.0 - pd) * ph;

    let mut s = header(&format!("Mean Pd over Doppler bins ({})", report.clutter_family));
    // axes and grid
    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{x2:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{tx}" y="{ty:.2}" text-anchor="end">{v:.1}</text>"##,
            y = py(v),
            x2 = LEFT + pw,
            tx = LEFT - 6.0,
            ty = py(v) + 4.0
        );
    }
    for &snr in &snrs {
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="middle">{snr}</text>"#,
            x = px(snr),
            y = TOP + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{x:.2}" y="{y:.2}" text-anchor="middle">SNR (dB)</text>"#,
        x = LEFT + pw / 2.0,
        y = HEIGHT - 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{y:.2}" text-anchor="middle" transform="rotate(-90 16 {y:.2})">Pd</text>"#,
        y = TOP + ph / 2.0
    );

    for (i, detector) in report.detectors().into_iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = snrs
            .iter()
            .filter_map(|&snr| report.mean_pd(detector, snr).filter(|p| p.is_finite()).map(|p| (snr, p)))
            .map(|(snr, p)| format!("{:.2},{:.2}", px(snr), py(p)))
            .collect();
        let _ = writeln!(
            s,
            r#"<g class="series" data-detector="{detector}"><polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/></g>"#,
            points.join(" ")
        );
        let ly = TOP + 16.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{x2}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{tx}" y="{ty}">{detector}</text>"#,
            x2 = lx + 24.0,
            tx = lx + 30.0,
            ty = ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Piecewise-linear ramp from dark blue (0) through teal to yellow (1).
fn color(pd: f64) -> String {
    if !pd.is_finite() {
        return "#999999".into();
    }
    let stops = [(0.0, [68.0, 1.0, 84.0]), (0.5, [33.0, 145.0, 140.0]), (1.0, [253.0, 231.0, 37.0])];
    let p = pd.clamp(0.0, 1.0);
    let (a, b) = if p <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let t = (p - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3).map(|k| (a.1[k] + t * (b.1[k] - a.1[k])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Pd of one detector for every (Doppler bin, SNR) grid point.
pub fn pd_map_svg(report: &DetectionReport, detector: DetectorKind) -> String {
    let snrs = snr_grid(report);
    let mut bins: Vec<usize> = report.rows.iter().map(|r| r.doppler_bin).collect();
    bins.sort_unstable();
    bins.dedup();
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let cw = pw / snrs.len().max(1) as f64;
    let ch = ph / bins.len().max(1) as f64;

    let mut s = header(&format!("Pd map of {detector} ({})", report.clutter_family));
    for (bi, &bin) in bins.iter().enumerate() {
        // bin 0 at the bottom
        let y = TOP + ph - (bi + 1) as f64 * ch;
        for (si, &snr) in snrs.iter().enumerate() {
            let pd = report.pd_at(detector, bin, snr).unwrap_or(f64::NAN);
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"><title>bin {bin}, {snr} dB: {pd}</title></rect>"#,
                x = LEFT + si as f64 * cw,
                w = cw + 0.2,
                h = ch + 0.2,
                fill = color(pd)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{ty:.2}" text-anchor="end">{bin}</text>"#,
            x = LEFT - 6.0,
            ty = y + ch / 2.0 + 4.0
        );
    }
    for (si, &snr) in snrs.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="middle">{snr}</text>"#,
            x = LEFT + (si as f64 + 0.5) * cw,
            y = TOP + ph + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{x:.2}" y="{y:.2}" text-anchor="middle">SNR (dB)</text>"#,
        x = LEFT + pw / 2.0,
        y = HEIGHT - 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{y:.2}" text-anchor="middle" transform="rotate(-90 16 {y:.2})">Doppler bin</text>"#,
        y = TOP + ph / 2.0
    );
    // color bar
    let bx = LEFT + pw + 24.0;
    for k in 0..20 {
        let v = k as f64 / 19.0;
        let _ = writeln!(
            s,
            r#"<rect x="{bx}" y="{y:.2}" width="16" height="{h:.2}" fill="{fill}"/>"#,
            y = TOP + (1.0 - v) * (ph - ph / 20.0),
            h = ph / 20.0 + 0.2,
            fill = color(v)
        );
    }
    let _ = writeln!(s, r#"<text x="{x}" y="{y}">1.0</text>"#, x = bx + 22.0, y = TOP + 10.0);
    let _ = writeln!(s, r#"<text x="{x}" y="{y}">0.0</text>"#, x = bx + 22.0, y = TOP + ph);
    s.push_str("</svg>\n");
    s
}

//! SVG rendering of sweep curves. The picture depends only on the CSV text.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 450.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

struct Point {
    d: f64,
    p: f64,
    lo: f64,
    hi: f64,
}

struct Series {
    label: &'static str,
    color: &'static str,
    points: Vec<Point>,
}

fn field(rec: &csv::StringRecord, idx: usize) -> Option<f64> {
    rec.get(idx).filter(|s| !s.is_empty()).and_then(|s| s.parse().ok())
}

fn read_series(csv_text: &str) -> Result<Vec<Series>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(csv_text.as_bytes());
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format!("CSV has no `{name}` column"))
    };
    let d = col("d")?;
    let arms = [
        ("without opponents", "#1f77b4", "p_without"),
        ("with opponents", "#d62728", "p_with"),
    ];
    let mut series = Vec::new();
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    for (label, color, prefix) in arms {
        let (p, lo, hi) = (col(prefix)?, col(&format!("{prefix}_lo"))?, col(&format!("{prefix}_hi"))?);
        let points = rows
            .iter()
            .filter_map(|r| {
                Some(Point {
                    d: field(r, d)?,
                    p: field(r, p)?,
                    lo: field(r, lo)?,
                    hi: field(r, hi)?,
                })
            })
            .collect();
        series.push(Series { label, color, points });
    }
    Ok(series)
}

/// Tick spacing from {1, 2, 5} × 10^k giving at most `max_ticks` intervals.
fn tick_step(span: f64, max_ticks: f64) -> f64 {
    if span <= 0.0 {
        return 1.0;
    }
    let raw = span / max_ticks;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| s >= raw)
        .unwrap_or(10.0 * mag)
}

pub fn render(csv_text: &str) -> Result<String, String> {
    let series = read_series(csv_text)?;
    let ds: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.d)).collect();
    let (mut dmin, mut dmax) = ds
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)));
    if ds.is_empty() {
        (dmin, dmax) = (0.0, 1.0);
    } else if dmin == dmax {
        (dmin, dmax) = (dmin - 1.0, dmax + 1.0);
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |d: f64| LEFT + (d - dmin) / (dmax - dmin) * plot_w;
    let sy = |p: f64| TOP + (1.0 - p) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">Success frequency</text>"#,
        LEFT + plot_w / 2.0
    );

    // Grid and ticks.
    for i in 0..=5 {
        let p = i as f64 / 5.0;
        let y = sy(p);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{p:.1}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let step = tick_step(dmax - dmin, 10.0);
    let mut t = (dmin / step).ceil() * step;
    while t <= dmax + step * 1e-9 {
        let x = sx(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h + 18.0,
            t
        );
        t += step;
    }
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#333"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">x(0) − y(0)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">success frequency</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    for (k, ser) in series.iter().enumerate() {
        for p in &ser.points {
            let x = sx(p.d);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{}" stroke-opacity="0.5"/>"#,
                sy(p.lo),
                sy(p.hi),
                ser.color
            );
        }
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.d), sy(p.p)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            pts.join(" "),
            ser.color
        );
        for p in &ser.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#,
                sx(p.d),
                sy(p.p),
                ser.color
            );
        }
        let ly = TOP + plot_h - 40.0 + 18.0 * k as f64;
        let lx = LEFT + plot_w - 170.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{}" stroke-width="2"/>"#,
            lx + 24.0,
            ser.color
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 30.0,
            ly + 4.0,
            ser.label
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

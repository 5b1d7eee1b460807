use std::fmt::Write as _;
use std::str::FromStr;

use super::scenario::Scenario;
use super::trace::TraceRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// position over time with the red/green phases of every light
    Distance,
    Velocity,
    Soc,
    /// demand, engine and battery power of the front vehicle
    Power,
    /// engine operating points over the efficiency map
    Engine,
}

impl PlotKind {
    pub const ALL: [PlotKind; 5] = [
        PlotKind::Distance,
        PlotKind::Velocity,
        PlotKind::Soc,
        PlotKind::Power,
        PlotKind::Engine,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::Distance => "distance",
            PlotKind::Velocity => "velocity",
            PlotKind::Soc => "soc",
            PlotKind::Power => "power",
            PlotKind::Engine => "engine",
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown plot kind '{s}'")))
    }
}

const W: f64 = 900.0;
const H: f64 = 540.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(a, b): (f64, f64)| {
            if !(a.is_finite() && b.is_finite()) {
                (0.0, 1.0)
            } else if b - a < 1e-9 {
                (a - 0.5, b + 0.5)
            } else {
                (a, b)
            }
        };
        let (x0, x1) = widen(x);
        let (y0, y1) = widen(y);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)))
}

fn nice_ticks(a: f64, b: f64) -> Vec<f64> {
    let raw = (b - a) / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut out = Vec::new();
    let mut x = (a / step).ceil() * step;
    while x <= b + 1e-9 * step {
        out.push(x);
        x += step;
    }
    out
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        out,
        r#"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for x in nice_ticks(f.x0, f.x1) {
        let px = f.px(x);
        let _ = writeln!(out, r#"<line x1="{px:.2}" y1="{b}" x2="{px:.2}" y2="{}" stroke="black"/>"#, b + 5.0);
        let _ = writeln!(out, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{x}</text>"#, b + 18.0);
    }
    for y in nice_ticks(f.y0, f.y1) {
        let py = f.py(y);
        let _ = writeln!(out, r#"<line x1="{}" y1="{py:.2}" x2="{l}" y2="{py:.2}" stroke="black"/>"#, l - 5.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{y}</text>"#, l - 8.0, py + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, (l + r) / 2.0, H - 10.0);
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{ylabel}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0
    );
}

fn polyline(out: &mut String, f: &Frame, pts: &[(f64, f64)], color: &str, label: &str) {
    if pts.is_empty() {
        return;
    }
    let mut d = String::new();
    for (x, y) in pts {
        let _ = write!(d, "{:.2},{:.2} ", f.px(*x), f.py(*y));
    }
    let _ = writeln!(
        out,
        r#"<polyline class="series" data-label="{label}" points="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#,
        d.trim_end()
    );
}

fn legend(out: &mut String, labels: &[(String, &str)]) {
    for (k, (label, color)) in labels.iter().enumerate() {
        let y = TOP + 14.0 + 14.0 * k as f64;
        let x = W - RIGHT - 110.0;
        let _ = writeln!(out, r#"<line x1="{x}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/>"#, y - 4.0, x + 18.0, y - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{label}</text>"#, x + 24.0);
    }
}

fn per_vehicle(trace: &[TraceRow], value: impl Fn(&TraceRow) -> f64) -> Vec<Vec<(f64, f64)>> {
    let n = trace.iter().map(|r| r.id + 1).max().unwrap_or(0);
    let mut series = vec![Vec::new(); n];
    for r in trace {
        series[r.id].push((r.t, value(r)));
    }
    series
}

fn time_series(
    trace: &[TraceRow],
    title: &str,
    ylabel: &str,
    value: impl Fn(&TraceRow) -> f64 + Copy,
) -> String {
    let series = per_vehicle(trace, value);
    let f = Frame::new(
        range(trace.iter().map(|r| r.t)),
        range(trace.iter().map(value)),
    );
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out, &f, "time (s)", ylabel);
    let mut labels = Vec::new();
    for (id, pts) in series.iter().enumerate() {
        let color = PALETTE[id % PALETTE.len()];
        polyline(&mut out, &f, pts, color, &format!("vehicle {}", id + 1));
        if !pts.is_empty() {
            labels.push((format!("vehicle {}", id + 1), color));
        }
    }
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

fn distance_plot(trace: &[TraceRow], scn: &Scenario) -> String {
    let c = &scn.corridor;
    let t_end = trace.iter().map(|r| r.t).fold(0.0, f64::max).max(c.timing.cycle());
    let s_max = trace
        .iter()
        .map(|r| r.s)
        .fold(c.total_length, f64::max);
    let f = Frame::new((0.0, t_end), (0.0, s_max));
    let mut out = String::new();
    open(&mut out, "Distance");
    axes(&mut out, &f, "time (s)", "distance (m)");
    let cycle = c.timing.cycle();
    let cycles = (t_end / cycle).ceil() as usize;
    for &x in &c.light_positions {
        let y = f.py(x) - 2.0;
        for k in 0..cycles {
            let start = k as f64 * cycle;
            for (class, a, b, color) in [
                ("red-phase", start, start + c.timing.red, "#d62728"),
                ("green-phase", start + c.timing.red, start + cycle, "#2ca02c"),
            ] {
                let b = b.min(t_end);
                if b <= a {
                    continue;
                }
                let _ = writeln!(
                    out,
                    r#"<rect class="{class}" data-light="{x}" data-start="{a}" data-end="{b}" x="{:.2}" y="{y:.2}" width="{:.2}" height="4" fill="{color}" opacity="0.7"/>"#,
                    f.px(a),
                    f.px(b) - f.px(a)
                );
            }
        }
    }
    let mut labels = Vec::new();
    for (id, pts) in per_vehicle(trace, |r| r.s).iter().enumerate() {
        let color = PALETTE[id % PALETTE.len()];
        polyline(&mut out, &f, pts, color, &format!("vehicle {}", id + 1));
        if !pts.is_empty() {
            labels.push((format!("vehicle {}", id + 1), color));
        }
    }
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

fn power_plot(trace: &[TraceRow]) -> String {
    let id = trace.iter().map(|r| r.id).min().unwrap_or(0);
    let rows: Vec<&TraceRow> = trace.iter().filter(|r| r.id == id).collect();
    let kw = 1e-3;
    let f = Frame::new(
        range(rows.iter().map(|r| r.t)),
        range(rows.iter().flat_map(|r| [r.p_dem * kw, r.p_en * kw, r.p_b * kw])),
    );
    let mut out = String::new();
    open(&mut out, &format!("Power split, vehicle {}", id + 1));
    axes(&mut out, &f, "time (s)", "power (kW)");
    type Series<'a> = (&'a str, &'a str, fn(&TraceRow) -> f64);
    let series: [Series; 3] = [
        ("demand", "#000000", |r| r.p_dem),
        ("engine", "#d62728", |r| r.p_en),
        ("battery", "#1f77b4", |r| r.p_b),
    ];
    let mut labels = Vec::new();
    for (name, color, get) in series {
        let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.t, get(r) * kw)).collect();
        polyline(&mut out, &f, &pts, color, name);
        labels.push((name.to_string(), color));
    }
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

fn engine_plot(trace: &[TraceRow], scn: &Scenario) -> String {
    let map = scn.powertrain.engine_model().map();
    let speeds = map.speeds();
    let torques = map.torques();
    let f = Frame::new(
        (speeds[0], speeds[speeds.len() - 1]),
        (torques[0], torques[torques.len() - 1]),
    );
    let mut out = String::new();
    open(&mut out, "Engine operating points");
    let mut peak: f64 = 1e-9;
    for i in 0..speeds.len() {
        for j in 0..torques.len() {
            peak = peak.max(map.at_node(i, j));
        }
    }
    for i in 0..speeds.len() - 1 {
        for j in 0..torques.len() - 1 {
            let eta = map.at_node(i, j);
            let shade = (255.0 * (1.0 - eta / peak)).round() as u8;
            let (x0, x1) = (f.px(speeds[i]), f.px(speeds[i + 1]));
            let (y0, y1) = (f.py(torques[j + 1]), f.py(torques[j]));
            let _ = writeln!(
                out,
                r#"<rect class="map-cell" x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="rgb(255,{shade},{shade})"><title>{eta:.3}</title></rect>"#,
                x1 - x0,
                y1 - y0
            );
        }
    }
    axes(&mut out, &f, "engine speed (rad/s)", "torque (Nm)");
    for r in trace.iter().filter(|r| r.throttle > 0.0) {
        let _ = writeln!(
            out,
            r##"<circle class="operating-point" cx="{:.2}" cy="{:.2}" r="2" fill="#1f77b4" opacity="0.5"/>"##,
            f.px(r.engine_speed),
            f.py(r.engine_torque)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Render one plot of a trace as a standalone SVG document.
pub fn plot_svg(trace: &[TraceRow], kind: PlotKind, scn: &Scenario) -> Result<String> {
    Ok(match kind {
        PlotKind::Distance => distance_plot(trace, scn),
        PlotKind::Velocity => time_series(trace, "Velocity", "velocity (m/s)", |r| r.v),
        PlotKind::Soc => time_series(trace, "State of charge", "SOC", |r| r.soc),
        PlotKind::Power => power_plot(trace),
        PlotKind::Engine => engine_plot(trace, scn),
    })
}

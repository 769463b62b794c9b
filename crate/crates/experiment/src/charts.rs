//! Velocity–power scatter and per-joint power bars, as CSV plus a hand-built
//! SVG on a fixed 800×600 canvas. Element order depends only on the input.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{RunError, RunResult};
use crate::table;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
/// Plot area inside the canvas.
pub const PLOT_LEFT: f64 = 80.0;
pub const PLOT_RIGHT: f64 = 780.0;
pub const PLOT_TOP: f64 = 30.0;
pub const PLOT_BOTTOM: f64 = 540.0;
/// Fraction of the data span added on each side of an axis.
pub const AXIS_MARGIN: f64 = 0.05;
/// Joints in every power profile.
pub const PROFILE_JOINTS: usize = 8;

/// Controller families, declared in legend order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Controller {
    Grid,
    Bayes,
    Ppo,
}

impl Controller {
    pub const ALL: [Controller; 3] = [Controller::Grid, Controller::Bayes, Controller::Ppo];

    pub fn name(self) -> &'static str {
        match self {
            Controller::Grid => "grid",
            Controller::Bayes => "bayes",
            Controller::Ppo => "ppo",
        }
    }

    fn colour(self) -> &'static str {
        match self {
            Controller::Grid => "#1f77b4",
            Controller::Bayes => "#ff7f0e",
            Controller::Ppo => "#2ca02c",
        }
    }
}

impl FromStr for Controller {
    type Err = RunError;

    fn from_str(s: &str) -> RunResult<Self> {
        Controller::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| RunError::runtime(format!("unknown controller `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterPoint {
    pub velocity: f64,
    pub power: f64,
    pub appv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterSeries {
    pub controller: Controller,
    pub points: Vec<ScatterPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub csv: Vec<u8>,
    pub svg: String,
}

/// Data range widened by [`AXIS_MARGIN`] of the span on both sides. A single
/// value gets a window of ±5% of its magnitude.
pub fn axis_range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.into_iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let pad = if span > 0.0 {
        AXIS_MARGIN * span
    } else if hi != 0.0 {
        AXIS_MARGIN * hi.abs()
    } else {
        AXIS_MARGIN
    };
    (lo - pad, hi + pad)
}

pub fn map_x(v: f64, (lo, hi): (f64, f64)) -> f64 {
    PLOT_LEFT + (v - lo) / (hi - lo) * (PLOT_RIGHT - PLOT_LEFT)
}

pub fn map_y(v: f64, (lo, hi): (f64, f64)) -> f64 {
    PLOT_BOTTOM - (v - lo) / (hi - lo) * (PLOT_BOTTOM - PLOT_TOP)
}

fn svg_open(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">"#
    );
    out.push_str("<style>text{font-family:sans-serif;font-size:12px}");
    for c in Controller::ALL {
        let _ = write!(out, ".{}{{fill:{}}}", c.name(), c.colour());
    }
    out.push_str("</style>\n");
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect class="frame" x="{PLOT_LEFT}" y="{PLOT_TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        PLOT_RIGHT - PLOT_LEFT,
        PLOT_BOTTOM - PLOT_TOP
    );
}

fn y_ticks(out: &mut String, range: (f64, f64)) {
    for i in 0..=4 {
        let v = range.0 + (range.1 - range.0) * i as f64 / 4.0;
        let y = map_y(v, range);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{PLOT_LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            PLOT_LEFT - 5.0,
            PLOT_LEFT - 8.0,
            y + 4.0,
            tick_label(v)
        );
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" { "0.000".into() } else { s }
}

fn legend(out: &mut String, controllers: &[Controller]) {
    out.push_str("<g class=\"legend\">\n");
    for (i, c) in controllers.iter().enumerate() {
        let y = PLOT_TOP + 20.0 + 18.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect class="key {n}" x="{:.2}" y="{:.2}" width="10" height="10"/><text x="{:.2}" y="{:.2}">{n}</text>"#,
            PLOT_LEFT + 15.0,
            y - 9.0,
            PLOT_LEFT + 30.0,
            y,
            n = c.name()
        );
    }
    out.push_str("</g>\n");
}

/// Velocity–power scatter, one marker class per controller.
pub fn emit_scatter(series: &[ScatterSeries]) -> RunResult<Chart> {
    let mut ordered: Vec<&ScatterSeries> = series.iter().filter(|s| !s.points.is_empty()).collect();
    if ordered.is_empty() {
        return Err(RunError::runtime("scatter needs at least one point"));
    }
    ordered.sort_by_key(|s| s.controller);
    let all = || ordered.iter().flat_map(|s| s.points.iter());
    if let Some(p) = all().find(|p| !(p.velocity.is_finite() && p.power.is_finite())) {
        return Err(RunError::runtime(format!("non-finite scatter point {p:?}")));
    }

    let header: Vec<String> = ["controller", "velocity", "power", "appv"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = ordered
        .iter()
        .flat_map(|s| {
            s.points.iter().map(|p| {
                vec![s.controller.name().to_string(), p.velocity.to_string(), p.power.to_string(), table::fmt_opt(p.appv)]
            })
        })
        .collect();
    let csv = table::to_bytes(table::SCATTER, &header, &rows)?;

    let xr = axis_range(all().map(|p| p.velocity));
    let yr = axis_range(all().map(|p| p.power));
    let mut svg = String::new();
    svg_open(&mut svg);
    for i in 0..=4 {
        let v = xr.0 + (xr.1 - xr.0) * i as f64 / 4.0;
        let x = map_x(v, xr);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{PLOT_BOTTOM}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            PLOT_BOTTOM + 5.0,
            PLOT_BOTTOM + 20.0,
            tick_label(v)
        );
    }
    y_ticks(&mut svg, yr);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">velocity (m/s)</text>"#,
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">power (W)</text>"#,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0
    );
    for s in &ordered {
        let _ = writeln!(svg, r#"<g class="series {}">"#, s.controller.name());
        for p in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle class="marker {}" cx="{:.2}" cy="{:.2}" r="3"/>"#,
                s.controller.name(),
                map_x(p.velocity, xr),
                map_y(p.power, yr)
            );
        }
        svg.push_str("</g>\n");
    }
    let mut present: Vec<Controller> = ordered.iter().map(|s| s.controller).collect();
    present.dedup();
    legend(&mut svg, &present);
    svg.push_str("</svg>\n");
    Ok(Chart { csv, svg })
}

/// Grouped bars of per-joint power, joints numbered from 1.
pub fn emit_power_profile(per_joint: &[(Controller, Vec<f64>)], velocity_label: &str) -> RunResult<Chart> {
    if per_joint.is_empty() {
        return Err(RunError::runtime("power profile needs at least one controller"));
    }
    for (c, watts) in per_joint {
        if watts.len() != PROFILE_JOINTS {
            return Err(RunError::runtime(format!(
                "invalid value for `per_joint`: {} has {} values, expected {PROFILE_JOINTS}",
                c.name(),
                watts.len()
            )));
        }
        if watts.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(RunError::runtime(format!(
                "invalid value for `per_joint`: {} has a negative or non-finite value",
                c.name()
            )));
        }
    }
    let mut ordered: Vec<&(Controller, Vec<f64>)> = per_joint.iter().collect();
    ordered.sort_by_key(|(c, _)| *c);

    let header: Vec<String> = ["joint", "controller", "watts"].map(String::from).to_vec();
    let mut rows = Vec::with_capacity(PROFILE_JOINTS * ordered.len());
    for j in 0..PROFILE_JOINTS {
        for (c, watts) in &ordered {
            rows.push(vec![(j + 1).to_string(), c.name().to_string(), watts[j].to_string()]);
        }
    }
    let csv = table::to_bytes(table::POWER_PROFILE, &header, &rows)?;

    let max = ordered.iter().flat_map(|(_, w)| w.iter().copied()).fold(0.0, f64::max);
    let yr = (0.0, if max > 0.0 { max * (1.0 + AXIS_MARGIN) } else { 1.0 });
    let group = (PLOT_RIGHT - PLOT_LEFT) / PROFILE_JOINTS as f64;
    let bar = group * 0.8 / ordered.len() as f64;

    let mut svg = String::new();
    svg_open(&mut svg);
    y_ticks(&mut svg, yr);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="20" text-anchor="middle">power per joint at {}</text>"#,
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        xml_escape(velocity_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">joint</text>"#,
        (PLOT_LEFT + PLOT_RIGHT) / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">power (W)</text>"#,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0,
        (PLOT_TOP + PLOT_BOTTOM) / 2.0
    );
    for j in 0..PROFILE_JOINTS {
        let x0 = PLOT_LEFT + group * j as f64 + group * 0.1;
        let _ = writeln!(svg, r#"<g class="joint" data-joint="{}">"#, j + 1);
        for (k, (c, watts)) in ordered.iter().enumerate() {
            let top = map_y(watts[j], yr);
            let _ = writeln!(
                svg,
                r#"<rect class="bar {}" x="{:.2}" y="{top:.2}" width="{bar:.2}" height="{:.2}"/>"#,
                c.name(),
                x0 + bar * k as f64,
                PLOT_BOTTOM - top
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            x0 + group * 0.4,
            PLOT_BOTTOM + 20.0,
            j + 1
        );
        svg.push_str("</g>\n");
    }
    let present: Vec<Controller> = ordered.iter().map(|(c, _)| *c).collect();
    legend(&mut svg, &present);
    svg.push_str("</svg>\n");
    Ok(Chart { csv, svg })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Reads a scatter table back into series.
pub fn parse_scatter(text: &str) -> RunResult<Vec<ScatterSeries>> {
    let t = table::parse(text, table::SCATTER, None)?;
    let mut series: Vec<ScatterSeries> = Vec::new();
    for row in &t.rows {
        let controller: Controller = row[0].parse()?;
        let point = ScatterPoint { velocity: table::num(&row[1])?, power: table::num(&row[2])?, appv: table::opt_num(&row[3])? };
        match series.iter_mut().find(|s| s.controller == controller) {
            Some(s) => s.points.push(point),
            None => series.push(ScatterSeries { controller, points: vec![point] }),
        }
    }
    Ok(series)
}


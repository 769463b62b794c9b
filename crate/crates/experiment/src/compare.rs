//! Matches policy evaluations against the best gait found by the baselines
//! at a similar velocity.

use std::fmt::Write as _;

use sgl_core::metrics::EvalResult;

use crate::table;

/// A measured operating point with a defined APPV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub velocity: f64,
    pub power: f64,
    pub appv: f64,
}

impl OperatingPoint {
    pub fn from_result(r: &EvalResult) -> Option<Self> {
        r.appv.map(|appv| Self { velocity: r.mean_velocity, power: r.mean_power, appv })
    }
}

/// Best baseline point inside a window and the policy's APPV relative to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub point: OperatingPoint,
    /// Policy APPV over baseline APPV; below 1 means the policy is cheaper.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub target: f64,
    /// `None` when the policy evaluation has no defined APPV.
    pub ppo: Option<OperatingPoint>,
    pub grid: Option<Match>,
    pub bayes: Option<Match>,
}

impl WindowRow {
    /// Rows without a grid match carry no verdict.
    pub fn comparable(&self) -> bool {
        self.grid.is_some()
    }
}

/// Lowest-APPV point with velocity within `window` of `velocity`; ties go to
/// the earliest point.
pub fn best_within(points: &[OperatingPoint], velocity: f64, window: f64) -> Option<OperatingPoint> {
    points
        .iter()
        .filter(|p| (p.velocity - velocity).abs() <= window)
        .fold(None, |best: Option<OperatingPoint>, p| match best {
            Some(b) if b.appv <= p.appv => Some(b),
            _ => Some(*p),
        })
}

/// One row per policy evaluation, in input order.
pub fn compare(
    ppo: &[(f64, Option<OperatingPoint>)],
    grid: &[OperatingPoint],
    bayes: &[OperatingPoint],
    window: f64,
) -> Vec<WindowRow> {
    ppo.iter()
        .map(|&(target, point)| {
            let matched = |pool: &[OperatingPoint]| {
                let p = point?;
                best_within(pool, p.velocity, window).map(|b| Match { point: b, ratio: p.appv / b.appv })
            };
            WindowRow { target, ppo: point, grid: matched(grid), bayes: matched(bayes) }
        })
        .collect()
}

pub fn report_header() -> Vec<String> {
    [
        "target",
        "ppo_velocity",
        "ppo_power",
        "ppo_appv",
        "grid_velocity",
        "grid_power",
        "grid_appv",
        "grid_ratio",
        "bayes_velocity",
        "bayes_power",
        "bayes_appv",
        "bayes_ratio",
        "status",
    ]
    .map(String::from)
    .to_vec()
}

pub fn report_rows(rows: &[WindowRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            let mut cells = vec![r.target.to_string()];
            let point = |p: Option<OperatingPoint>| -> [String; 3] {
                [
                    table::fmt_opt(p.map(|p| p.velocity)),
                    table::fmt_opt(p.map(|p| p.power)),
                    table::fmt_opt(p.map(|p| p.appv)),
                ]
            };
            cells.extend(point(r.ppo));
            for m in [r.grid, r.bayes] {
                cells.extend(point(m.map(|m| m.point)));
                cells.push(table::fmt_opt(m.map(|m| m.ratio)));
            }
            cells.push(if r.comparable() { "comparable" } else { "incomparable" }.to_string());
            cells
        })
        .collect()
}

/// Policy windows whose APPV is at most the best grid gait's.
pub fn wins(rows: &[WindowRow]) -> (usize, usize) {
    let comparable: Vec<&Match> = rows.iter().filter_map(|r| r.grid.as_ref()).collect();
    (comparable.iter().filter(|m| m.ratio <= 1.0).count(), comparable.len())
}

/// Pearson correlation; `None` for fewer than two points or a constant axis.
pub fn correlation(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Human-readable summary: one line per window, then the aggregate verdicts.
pub fn summary(
    rows: &[WindowRow],
    window: f64,
    reference_velocity: f64,
    frontier_r: Option<f64>,
    ppo_r: Option<f64>,
) -> String {
    let mut out = String::new();
    for r in rows {
        let _ = write!(out, "target {:.3} m/s: ", r.target);
        match (r.ppo, r.grid) {
            (None, _) => out.push_str("incomparable (policy APPV undefined)"),
            (Some(p), None) => {
                let _ = write!(out, "ppo v={:.4} APPV={:.4}; incomparable (no grid point within ±{window})", p.velocity, p.appv);
            }
            (Some(p), Some(g)) => {
                let _ = write!(
                    out,
                    "ppo v={:.4} APPV={:.4}; grid APPV={:.4} ratio={:.3}",
                    p.velocity, p.appv, g.point.appv, g.ratio
                );
            }
        }
        if let Some(b) = r.bayes {
            let _ = write!(out, "; bayes APPV={:.4} ratio={:.3}", b.point.appv, b.ratio);
        }
        out.push('\n');
    }
    let (won, comparable) = wins(rows);
    let verdict = if comparable > 0 && 2 * won >= comparable { "met" } else { "not met" };
    let _ = writeln!(
        out,
        "policy APPV <= best grid APPV in {won} of {comparable} comparable windows (at least half required: {verdict})"
    );
    let nearest = rows
        .iter()
        .filter(|r| r.grid.is_some())
        .min_by(|a, b| (a.target - reference_velocity).abs().total_cmp(&(b.target - reference_velocity).abs()));
    match nearest {
        Some(r) => {
            let saving = 100.0 * (1.0 - r.grid.expect("filtered").ratio);
            let _ = writeln!(
                out,
                "reference target (not a gate): 35-65% saving against the equation controller near {reference_velocity} m/s; measured {saving:.1}% at target {:.3} m/s",
                r.target
            );
        }
        None => {
            let _ = writeln!(
                out,
                "reference target (not a gate): 35-65% saving against the equation controller near {reference_velocity} m/s; no comparable window"
            );
        }
    }
    let fmt_r = |r: Option<f64>| r.map_or("undefined".to_string(), |r| format!("{r:.4}"));
    let _ = writeln!(out, "velocity-power correlation: grid frontier {}, policy {}", fmt_r(frontier_r), fmt_r(ppo_r));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(velocity: f64, appv: f64) -> OperatingPoint {
        OperatingPoint { velocity, power: velocity * appv, appv }
    }

    #[test]
    fn identical_inputs_give_unit_ratios() {
        let pts: Vec<OperatingPoint> = (1..=5).map(|i| pt(0.05 * i as f64, 10.0 + i as f64)).collect();
        let ppo: Vec<(f64, Option<OperatingPoint>)> = pts.iter().map(|p| (p.velocity, Some(*p))).collect();
        let rows = compare(&ppo, &pts, &pts, 0.01);
        assert!(rows.iter().all(|r| r.grid.unwrap().ratio == 1.0 && r.bayes.unwrap().ratio == 1.0));
        assert_eq!(wins(&rows), (5, 5));
    }

    #[test]
    fn empty_window_is_incomparable() {
        let rows = compare(&[(0.2, Some(pt(0.2, 5.0))), (0.1, None)], &[pt(0.1, 4.0)], &[], 0.01);
        assert!(!rows[0].comparable() && !rows[1].comparable());
        let cells = report_rows(&rows);
        assert_eq!(cells[0].last().unwrap(), "incomparable");
        assert_eq!(cells[0].len(), report_header().len());
        assert!(summary(&rows, 0.01, 0.15, None, None).contains("0 of 0"));
    }

    #[test]
    fn best_point_wins_inside_the_window() {
        let pool = [pt(0.10, 9.0), pt(0.105, 7.0), pt(0.12, 1.0), pt(0.095, 7.0)];
        assert_eq!(best_within(&pool, 0.1, 0.01), Some(pool[1]));
        let rows = compare(&[(0.1, Some(pt(0.1, 3.5)))], &pool, &[], 0.01);
        assert_eq!(rows[0].grid.unwrap().ratio, 0.5);
        assert!(rows[0].bayes.is_none());
    }

    #[test]
    fn correlation_of_a_line() {
        let line: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 * i as f64 + 1.0)).collect();
        assert!((correlation(&line).unwrap() - 1.0).abs() < 1e-12);
        assert!(correlation(&[(1.0, 2.0)]).is_none());
        assert!(correlation(&[(1.0, 2.0), (2.0, 2.0)]).is_none());
    }
}

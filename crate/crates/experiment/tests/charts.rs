use sgl_experiment::charts::*;
use sgl_experiment::table;

fn pt(velocity: f64, power: f64) -> ScatterPoint {
    ScatterPoint { velocity, power, appv: Some(power / velocity) }
}

fn circles(svg: &str) -> Vec<(String, f64, f64)> {
    svg.lines()
        .filter(|l| l.starts_with("<circle"))
        .map(|l| {
            let attr = |name: &str| -> String {
                let start = l.find(&format!(" {name}=\"")).unwrap() + name.len() + 3;
                l[start..].split('"').next().unwrap().to_string()
            };
            (attr("class"), attr("cx").parse().unwrap(), attr("cy").parse().unwrap())
        })
        .collect()
}

#[test]
fn single_point_lands_mid_plot() {
    let chart = emit_scatter(&[ScatterSeries { controller: Controller::Ppo, points: vec![pt(0.1, 1.0)] }]).unwrap();
    let c = circles(&chart.svg);
    assert_eq!(c.len(), 1);
    assert_eq!(c[0].0, "marker ppo");
    // a lone value sits in the middle of its ±5% window
    assert!((c[0].1 - (PLOT_LEFT + PLOT_RIGHT) / 2.0).abs() < 0.01);
    assert!((c[0].2 - (PLOT_TOP + PLOT_BOTTOM) / 2.0).abs() < 0.01);
    assert!(chart.svg.contains(r#"viewBox="0 0 800 600""#));
}

#[test]
fn margins_are_five_percent_of_the_span() {
    assert_eq!(axis_range([1.0, 3.0]), (0.9, 3.1));
    let (lo, hi) = axis_range([0.1]);
    assert!((lo - 0.095).abs() < 1e-15 && (hi - 0.105).abs() < 1e-15);
    let chart = emit_scatter(&[ScatterSeries { controller: Controller::Grid, points: vec![pt(1.0, 10.0), pt(3.0, 30.0)] }])
        .unwrap();
    let c = circles(&chart.svg);
    let width = PLOT_RIGHT - PLOT_LEFT;
    assert!((c[0].1 - (PLOT_LEFT + width * 0.1 / 2.2)).abs() < 0.01);
    assert!((c[1].1 - (PLOT_RIGHT - width * 0.1 / 2.2)).abs() < 0.01);
}

#[test]
fn csv_has_one_row_per_point() {
    let series = vec![
        ScatterSeries { controller: Controller::Ppo, points: vec![pt(0.1, 1.0), pt(0.2, 3.0)] },
        ScatterSeries { controller: Controller::Grid, points: vec![pt(0.15, 2.0), pt(0.05, 0.4), pt(0.3, 9.0)] },
    ];
    let chart = emit_scatter(&series).unwrap();
    let t = table::parse(std::str::from_utf8(&chart.csv).unwrap(), table::SCATTER, None).unwrap();
    assert_eq!(t.header, ["controller", "velocity", "power", "appv"]);
    assert_eq!(t.rows.len(), 5);
    assert_eq!(t.rows[0][0], "grid");
    assert_eq!(parse_scatter(std::str::from_utf8(&chart.csv).unwrap()).unwrap().len(), 2);
}

#[test]
fn legend_order_is_fixed() {
    let series: Vec<ScatterSeries> = [Controller::Ppo, Controller::Grid, Controller::Bayes]
        .into_iter()
        .enumerate()
        .map(|(i, controller)| ScatterSeries { controller, points: vec![pt(0.1 + 0.05 * i as f64, 1.0 + i as f64)] })
        .collect();
    let chart = emit_scatter(&series).unwrap();
    let legend = &chart.svg[chart.svg.find("class=\"legend\"").unwrap()..];
    let keys: Vec<usize> = ["key grid", "key bayes", "key ppo"].iter().map(|k| legend.find(k).unwrap()).collect();
    assert!(keys[0] < keys[1] && keys[1] < keys[2]);
    let classes: Vec<String> = circles(&chart.svg).into_iter().map(|c| c.0).collect();
    assert_eq!(classes, ["marker grid", "marker bayes", "marker ppo"]);
    // byte-identical output for identical input
    assert_eq!(emit_scatter(&series).unwrap(), chart);
}

#[test]
fn empty_scatter_is_an_error() {
    assert!(emit_scatter(&[]).is_err());
    assert!(emit_scatter(&[ScatterSeries { controller: Controller::Grid, points: vec![] }]).is_err());
}

#[test]
fn uniform_profile_gives_equal_bars() {
    let chart = emit_power_profile(&[(Controller::Grid, vec![0.005; 8])], "0.25 m/s").unwrap();
    let heights: Vec<&str> = chart
        .svg
        .lines()
        .filter(|l| l.starts_with("<rect class=\"bar"))
        .map(|l| l.split("height=\"").nth(1).unwrap().split('"').next().unwrap())
        .collect();
    assert_eq!(heights.len(), 8);
    assert!(heights.iter().all(|h| *h == heights[0]));
    let t = table::parse(std::str::from_utf8(&chart.csv).unwrap(), table::POWER_PROFILE, None).unwrap();
    assert_eq!(t.header, ["joint", "controller", "watts"]);
    assert_eq!(t.rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(), ["1", "2", "3", "4", "5", "6", "7", "8"]);
    assert!(t.rows.iter().all(|r| r[2] == "0.005"));
}

#[test]
fn profile_groups_controllers_per_joint() {
    let chart = emit_power_profile(
        &[(Controller::Ppo, vec![1.0; 8]), (Controller::Grid, (1..=8).map(f64::from).collect())],
        "0.25 m/s",
    )
    .unwrap();
    let t = table::parse(std::str::from_utf8(&chart.csv).unwrap(), table::POWER_PROFILE, None).unwrap();
    assert_eq!(t.rows.len(), 16);
    assert_eq!(t.rows[0], ["1", "grid", "1"]);
    assert_eq!(t.rows[1], ["1", "ppo", "1"]);
    assert_eq!(t.rows[15], ["8", "ppo", "1"]);
}

#[test]
fn profile_rejects_wrong_arity() {
    let err = emit_power_profile(&[(Controller::Grid, vec![1.0; 7])], "x").unwrap_err().to_string();
    assert!(err.contains("per_joint"), "{err}");
    assert!(emit_power_profile(&[(Controller::Grid, vec![1.0; 9])], "x").is_err());
    assert!(emit_power_profile(&[], "x").is_err());
}

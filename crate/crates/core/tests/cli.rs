use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridsim39"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(key).map(str::trim))
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("no `{key}` in\n{report}"))
}

fn write_scenario(dir: &Path, name: &str, config: &str, duration: f64, trip: Option<&str>) {
    let mut text = format!("name = \"{name}\"\nconfig = \"{config}\"\nduration = {duration}\n");
    if let Some(t) = trip {
        text.push_str(&format!("\n[[events]]\ntime = 5.0\nkind = \"trip_generator\"\ntarget = \"{t}\"\n"));
    }
    std::fs::write(dir.join(format!("{name}.toml")), text).unwrap();
}

#[test]
fn run_metrics_compare_plot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_scenario(d, "one", "config1", 7.0, Some("G6"));
    write_scenario(d, "two", "config2", 7.0, Some("G6"));
    for name in ["one", "two"] {
        let report = stdout(&cli(&["run", &format!("{name}.toml"), "--out-dir", "out"], d));
        assert!(value(&report, "nadir_pu") < 1.0);
        assert!(d.join(format!("out/{name}.csv")).exists());
        assert!(d.join(format!("out/{name}.meta.json")).exists());
        assert!(d.join(format!("out/{name}.metrics.json")).exists());
    }

    let m1 = stdout(&cli(&["metrics", "out/one.csv"], d));
    let m2 = stdout(&cli(&["metrics", "out/two.csv", "--band", "0.001", "--rocof-window", "0.2"], d));
    assert_eq!(value(&m1, "trip_time_s"), 5.0);
    assert!(value(&m2, "nadir_pu") < value(&m1, "nadir_pu"));

    let json = stdout(&cli(&["metrics", "out/one.csv", "--json"], d));
    let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!((parsed["nadir_pu"].as_f64().unwrap() - value(&m1, "nadir_pu")).abs() < 1e-6);

    let ab = stdout(&cli(&["compare", "out/one.csv", "out/two.csv"], d));
    let ba = stdout(&cli(&["compare", "out/two.csv", "out/one.csv"], d));
    let delta = |table: &str| {
        let row = table.lines().find(|l| l.starts_with("nadir_pu")).unwrap();
        row.split_whitespace().last().unwrap().parse::<f64>().unwrap()
    };
    let n1 = value(&m1, "nadir_pu");
    let n2 = value(&m2, "nadir_pu");
    assert!((delta(&ab) - (n1 - n2)).abs() < 1e-5);
    assert_eq!(delta(&ab), -delta(&ba));

    let files = stdout(&cli(&["plot", "out/one.csv", "out/two.csv", "--out-dir", "plots"], d));
    let freq = files.lines().find(|l| l.ends_with("frequency.svg")).expect("frequency plot");
    let svg = std::fs::read_to_string(d.join(freq)).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.matches("<polyline").count() >= 2);
}

#[test]
fn no_event_trace_reports_zero_duration() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_scenario(d, "calm", "config1", 6.0, None);
    stdout(&cli(&["run", "--scenario", "calm.toml", "--out-dir", "."], d));
    let m = stdout(&cli(&["metrics", "calm.csv"], d));
    assert_eq!(value(&m, "transient_duration_s"), 0.0);
    assert!((value(&m, "nadir_pu") - 1.0).abs() < 1e-4);
}

#[test]
fn flags_override_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = cli(
        &["run", "steady_bess", "--controller", "forming", "--step", "0.0005", "--seed", "7", "--out-dir", "."],
        d,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("steady_bess.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["controller"], "forming");
    assert_eq!(meta["step"], 0.0005);
    assert_eq!(meta["seed"], 7);
}

#[test]
fn bad_input_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "config = \"config1\"\nduration = -1.0\n").unwrap();
    let o = cli(&["run", "bad.toml"], d);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("duration"));

    let o = cli(&["metrics", "missing.csv"], d);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));

    let o = cli(&["run", "steady_config1", "--controller", "droopy"], d);
    assert!(!o.status.success());
}

use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn relayplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relayplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn plan_prints_a_feasible_plan() {
    let path = data("triangle.json");
    let out = relayplan(&["plan", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["method"], "convex");
    let rate = v["multicast_rate"].as_f64().unwrap();
    let rates = v["destination_rates"].as_array().unwrap();
    assert_eq!(rates.len(), 2);
    assert!(rates.iter().all(|r| r.as_f64().unwrap() >= rate * (1.0 - 1e-9)));
    assert_eq!(v["diagnostics"]["repair_applied"], true);
}

#[test]
fn plan_output_is_byte_identical_across_runs() {
    let path = data("three.json");
    let a = relayplan(&["plan", path.to_str().unwrap()]);
    let b = relayplan(&["plan", path.to_str().unwrap()]);
    assert_eq!(a.status.code(), b.status.code());
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn oracle_bounds_the_plan_from_below() {
    let path = data("triangle.json");
    let oracle = json(&relayplan(&["oracle", path.to_str().unwrap(), "--resolution", "50"]));
    let plan = json(&relayplan(&["plan", path.to_str().unwrap()]));
    assert_eq!(oracle["method"], "grid");
    let (o, p) = (oracle["multicast_rate"].as_f64().unwrap(), plan["multicast_rate"].as_f64().unwrap());
    assert!(p >= 0.95 * o, "plan {p} oracle {o}");
}

#[test]
fn regions_writes_json_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("r.svg");
    let path = data("three.json");
    let out = relayplan(&["regions", path.to_str().unwrap(), "--svg", svg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(!v["relay"]["cells"].as_array().unwrap().is_empty());
    assert_eq!(v["source_radii"].as_array().unwrap().len(), 3);
    let pic = std::fs::read_to_string(&svg).unwrap();
    assert!(pic.starts_with("<svg") && pic.trim_end().ends_with("</svg>"));
}

#[test]
fn compare_centroid_reports_a_non_negative_gain() {
    let path = data("triangle.json");
    let out = relayplan(&["compare-centroid", path.to_str().unwrap(), "--resolution", "40"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["relative_gain"].as_f64().unwrap() >= -1e-9);
}

#[test]
fn bench_writes_csv() {
    let out = relayplan(&["bench", "--areas", "1,4", "--trials", "2", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "area,trial,r_opt,r_centroid,gain,r_oracle");
    assert_eq!(lines.len(), 5);
}

#[test]
fn malformed_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"source": {"x": 0, "y": 0}, "destinations": []}"#).unwrap();
    let out = relayplan(&["plan", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let out = relayplan(&["plan", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
}

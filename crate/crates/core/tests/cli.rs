use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ecocomm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecocomm")).args(args).output().unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    s(&path)
}

fn synth(dir: &Path) -> (String, String) {
    let out = dir.join("synth");
    let status = ecocomm(&[
        "synth",
        "--individuals",
        "40",
        "--locations",
        "15",
        "--k",
        "3",
        "--tokens",
        "4:8",
        "--seed",
        "5",
        "--out-dir",
        &s(&out),
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    (s(&out.join("edges.csv")), s(&out.join("roster.csv")))
}

#[test]
fn fit_on_empty_edge_list_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let edges = write(dir.path(), "edges.csv", "individual_id,location_id,count\n");
    let out = ecocomm(&[
        "fit",
        "--edges",
        &edges,
        "--k",
        "3",
        "--seed",
        "1",
        "--out",
        &s(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn negative_count_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let edges = write(
        dir.path(),
        "edges.csv",
        "individual_id,location_id,count\na,x,2\nb,y,-1\n",
    );
    let out = ecocomm(&[
        "fit",
        "--edges",
        &edges,
        "--k",
        "2",
        "--seed",
        "1",
        "--out",
        &s(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("edges.csv:3:"));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ecocomm(&[
        "fit",
        "--edges",
        &s(&dir.path().join("absent.csv")),
        "--k",
        "2",
        "--seed",
        "1",
        "--out",
        &s(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(ecocomm(&["fit", "--k", "2"]).status.code(), Some(2));
    assert_eq!(ecocomm(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn ingest_filters_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let edges = write(
        d,
        "edges.csv",
        "individual_id,location_id\na,x\nb,x\nc,x\nd,x\ne,solo\nf,x\n",
    );
    let roster = write(
        d,
        "roster.csv",
        "individual_id,neighborhood_id,in_area\na,n1,1\nb,n1,1\nc,n1,1\nd,n1,1\ne,n1,1\nf,n2,0\ng,n1,1\n",
    );
    let out = ecocomm(&[
        "ingest",
        "--edges",
        &edges,
        "--roster",
        &roster,
        "--out-edges",
        &s(&d.join("kept.csv")),
        "--out-roster",
        &s(&d.join("kept_roster.csv")),
        "--report",
        &s(&d.join("report.json")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["kept"], 4);
    assert_eq!(report["dropped_no_locations"], serde_json::json!(["g"]));
    assert_eq!(report["dropped_out_of_area"], serde_json::json!(["f"]));
    assert_eq!(report["dropped_no_shared_locations"], serde_json::json!(["e"]));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("kept.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "ingest");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (edges, _) = synth(d);
    let config = write(
        d,
        "fit.conf",
        "# sampler\nk = 3\niterations = 40\nburn_in = 20\nseed = 7\nlast_sweep_only = true\n",
    );

    let a = s(&d.join("a.json"));
    let out = ecocomm(&["fit", "--config", &config, "--edges", &edges, "--out", &a]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(model["config"]["k"], 3);
    assert_eq!(model["config"]["iterations"], 40);
    assert_eq!(model["config"]["seed"], 7);
    assert_eq!(model["config"]["estimator"], "last_sweep");

    let b = s(&d.join("b.json"));
    let out = ecocomm(&["fit", "--config", &config, "--edges", &edges, "--k", "2", "--out", &b]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(&b).unwrap()).unwrap();
    assert_eq!(model["config"]["k"], 2);
}

#[test]
fn simulate_writes_long_format_with_analytic_series() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (edges, _) = synth(d);
    let model = s(&d.join("model.json"));
    assert!(ecocomm(&[
        "fit",
        "--edges",
        &edges,
        "--k",
        "3",
        "--iterations",
        "60",
        "--burn-in",
        "30",
        "--seed",
        "2",
        "--out",
        &model
    ])
    .status
    .success());
    let curve = s(&d.join("curve.csv"));
    let out = ecocomm(&[
        "simulate",
        "--model",
        &model,
        "--n",
        "1:3",
        "--pairs",
        "200",
        "--analytic-j",
        "883",
        "--seed",
        "4",
        "--out",
        &curve,
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&curve).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,series,mean,sd"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9);
    for series in ["within", "between", "analytic"] {
        assert_eq!(rows.iter().filter(|r| r[1] == series).count(), 3);
    }
    let n1 = rows.iter().find(|r| r[0] == "1" && r[1] == "analytic").unwrap();
    assert!((n1[2].parse::<f64>().unwrap() - 1.0 / 883.0).abs() < 1e-15);
}

#[test]
fn regress_rejects_unknown_columns() {
    let dir = tempfile::tempdir().unwrap();
    let table = write(dir.path(), "t.csv", "neighborhood_id,y,x\na,1,2\nb,2,3\nc,4,5\nd,3,1\n");
    let out = ecocomm(&[
        "regress",
        "--table",
        &table,
        "--response",
        "y",
        "--term",
        "nope",
        "--out",
        &s(&dir.path().join("r.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn export_writes_one_based_community_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (edges, _) = synth(d);
    let model = s(&d.join("model.json"));
    assert!(ecocomm(&[
        "fit",
        "--edges",
        &edges,
        "--k",
        "3",
        "--iterations",
        "40",
        "--burn-in",
        "20",
        "--seed",
        "2",
        "--out",
        &model
    ])
    .status
    .success());
    let out_dir = d.join("export");
    assert!(ecocomm(&["export", "--model", &model, "--out-dir", &s(&out_dir)])
        .status
        .success());
    let sizes = fs::read_to_string(out_dir.join("community_sizes.csv")).unwrap();
    let rows: Vec<&str> = sizes.lines().collect();
    assert_eq!(rows[0], "community,size");
    assert_eq!(rows.len(), 4);
    let total: usize = rows[1..]
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 40);
    let header = fs::read_to_string(out_dir.join("profiles.csv")).unwrap();
    assert!(header.starts_with("location_id,community_1,community_2,community_3\n"));
}

use std::path::Path;
use std::process::{Command, Output};

fn hpchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hpchain"))
        .args(args)
        .env_remove("HPCHAIN_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn run_to(args: &[&str], out: &Path) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    let out = out.to_str().unwrap();
    all.extend(["--out", out]);
    hpchain(&all)
}

fn data_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn fig1_is_deterministic_and_trivial_at_n1() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["fig1", "--n-list", "1,2,4", "--seed", "5"];
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert_eq!(run_to(&args, &a).status.code(), Some(0));
    assert_eq!(run_to(&[&args[..], &["--jobs", "1"]].concat(), &b).status.code(), Some(0));
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb, "thread count changed the output");
    let text = String::from_utf8(ta).unwrap();
    assert!(text.starts_with("#schema=hpchain/1\n"));
    let rows = data_rows(&text);
    assert_eq!(rows.len(), 6);
    for r in rows.iter().filter(|r| r[0] == "1") {
        assert_eq!(r[4], "0.0");
        assert_eq!(r[7], "ok");
    }
    // a and T agree through a(T) on every row; T is the input here.
    for r in &rows {
        let t: f64 = r[3].parse().unwrap();
        let a: f64 = r[2].parse().unwrap();
        let x = (-1.0f64 / (2.0 * t)).exp().recip();
        let a_of_t = 2.0 * (3.0 * x - 1.0) / (x - 1.0).powi(3);
        assert!((a_of_t - a).abs() < 1e-10, "{a} vs {a_of_t}");
    }
}

#[test]
fn monte_carlo_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["fig1", "--n-list", "2,4", "--a-list", "0.5", "--mc-samples", "500", "--seed", "9"];
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    run_to(&args, &a);
    run_to(&args, &b);
    let mut other = args.to_vec();
    other[8] = "10";
    run_to(&other, &c);
    let (ta, tb, tc) = (
        std::fs::read_to_string(&a).unwrap(),
        std::fs::read_to_string(&b).unwrap(),
        std::fs::read_to_string(&c).unwrap(),
    );
    assert_eq!(ta, tb);
    assert_ne!(data_rows(&ta), data_rows(&tc));
}

#[test]
fn resume_skips_completed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["fig2", "--n-list", "2,3", "--a-list", "0.5,1"];
    let full = dir.path().join("full.csv");
    assert_eq!(run_to(&args, &full).status.code(), Some(0));
    let text = std::fs::read_to_string(&full).unwrap();
    // Keep the header and the first data row, with a marker value in it.
    let lines: Vec<&str> = text.lines().collect();
    let first = lines.iter().position(|l| !l.starts_with('#')).unwrap() + 1;
    let mut marked: Vec<String> = lines[first].split(',').map(str::to_string).collect();
    marked[4] = "123.5".into();
    let mut part: Vec<String> = lines[..first].iter().map(|s| s.to_string()).collect();
    part.push(marked.join(","));
    let resumed = dir.path().join("part.csv");
    std::fs::write(&resumed, part.join("\n") + "\n").unwrap();
    assert_eq!(run_to(&args, &resumed).status.code(), Some(0));
    let after = std::fs::read_to_string(&resumed).unwrap();
    let (got, want) = (data_rows(&after), data_rows(&text));
    assert_eq!(got.len(), want.len());
    assert_eq!(got[0][4], "123.5", "completed row was recomputed");
    assert_eq!(got[1..], want[1..]);

    // Same file, different grid: refused.
    let out = run_to(&["fig2", "--n-list", "2", "--a-list", "0.5,1"], &resumed);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn identity_check_passes_and_detects_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let ok = run_to(&["identity-check"], &report);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["passed"], serde_json::Value::Bool(true));

    let bad = hpchain(&["identity-check", "--perturb", "1e-6"]);
    assert_ne!(bad.status.code(), Some(0));
    assert_eq!(bad.status.code(), Some(3));

    let mut manifest = doc["manifest"].clone();
    manifest["det_points"] = serde_json::json!([]);
    let path = dir.path().join("empty.json");
    std::fs::write(&path, manifest.to_string()).unwrap();
    let empty = hpchain(&["identity-check", "--manifest", path.to_str().unwrap()]);
    assert_eq!(empty.status.code(), Some(1));
}

#[test]
fn usage_errors() {
    for args in [
        &["fig1", "--a-list", "1", "--t-list", "0.4"][..],
        &["fig1", "--n-list", ""][..],
        &["fig1", "--bogus"][..],
        &["polyakov", "--n-list", "1"][..],
    ] {
        assert_eq!(hpchain(args).status.code(), Some(1), "{args:?}");
    }
    assert_eq!(hpchain(&["--help"]).status.code(), Some(0));
}

#[test]
fn oracle_compare_small_grid_and_cost_guard() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let r = run_to(
        &["oracle-compare", "--l-list", "8,10", "--n-list", "1,2,3", "--k-list", "1", "--j-list", "0,1,2"],
        &out,
    );
    assert_eq!(r.status.code(), Some(0));
    let rows = data_rows(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(rows.len(), 18);
    for row in &rows {
        let rel: f64 = row[6].parse().unwrap();
        assert!(rel < 1e-9, "{row:?}");
        if row[3] == "0.0" {
            assert_eq!(row[6], "0.0");
        }
    }
    let big = hpchain(&["oracle-compare", "--l-list", "16"]);
    assert_eq!(big.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&big.stderr).contains("cost guard"));
}

#[test]
fn config_file_and_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("scan.toml");
    std::fs::write(&cfg, "mode = \"gww\"\na_list = [0.5, 1.0, 2.0]\noutput_format = \"json\"\n").unwrap();
    let out = dir.path().join("gww.json");
    let r = run_to(&["gww", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(r.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["schema"], "hpchain/1");
    let rows = doc["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1][5], "GAPPED");
    // Flags win over the file.
    let r = run_to(&["gww", "--config", cfg.to_str().unwrap(), "--a-list", "2", "--format", "csv"], &dir.path().join("g.csv"));
    assert_eq!(r.status.code(), Some(0));
    assert_eq!(data_rows(&std::fs::read_to_string(dir.path().join("g.csv")).unwrap()).len(), 1);
    // A config for another mode is refused.
    assert_eq!(hpchain(&["fig1", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn timings_column_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    run_to(&["gww", "--a-list", "2", "--timings"], &out);
    let text = std::fs::read_to_string(&out).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.ends_with(",status,wall_time_ms"));
}

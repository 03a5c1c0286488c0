use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fixalm"))
}

fn qp_file() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/two_var_qp.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn fixalm")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn design_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.json");
    let qp = qp_file();
    let o = run(&["design", "--problem", qp.to_str().unwrap(), "--eps", "0.01", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    for key in ["fl", "wl", "k_in", "k_out"] {
        assert!(v[key].as_u64().is_some(), "missing {key}");
    }
    assert!(stdout(&o).contains("fl-wl"));
}

#[test]
fn non_positive_eps_is_a_usage_error() {
    let qp = qp_file();
    for eps in ["0", "-0.5"] {
        let o = run(&["design", "--problem", qp.to_str().unwrap(), "--eps", eps]);
        assert!(!o.status.success());
        assert_eq!(o.status.code(), Some(2));
    }
}

#[test]
fn same_seed_gives_identical_reports() {
    let qp = qp_file();
    let args = ["design", "--problem", qp.to_str().unwrap(), "--eps", "0.1", "--seed", "5"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn float_solve_reaches_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let trace = dir.path().join("t.csv");
    let qp = qp_file();
    let o = run(&[
        "solve", "--problem", qp.to_str().unwrap(), "--mode", "float",
        "--out", out.to_str().unwrap(), "--trace", trace.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let f = v["objective_last"].as_f64().unwrap();
    assert!((f - 0.25).abs() <= 1e-6, "{f}");
    assert!(v["residual_last"].as_f64().unwrap() <= 1e-6);
    let csv = fs::read_to_string(&trace).unwrap();
    assert!(csv.starts_with("k,objective,residual,lambda_inf\n"));
}

#[test]
fn verify_passes_with_the_designed_format() {
    let qp = qp_file();
    let o = run(&["verify", "--problem", qp.to_str().unwrap(), "--eps", "0.1"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("ok   optimality"));
}

#[test]
fn verify_fails_on_an_undersized_word_length() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.json");
    let qp = qp_file();
    let o = run(&[
        "verify", "--problem", qp.to_str().unwrap(), "--eps", "0.1",
        "--wl", "6", "--fl", "4", "--strict", "--out", out.to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(stdout(&o).contains("overflow"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v["overflow"].as_str().is_some());
}

#[test]
fn inconsistent_overrides_are_rejected() {
    let qp = qp_file();
    let o = run(&["solve", "--problem", qp.to_str().unwrap(), "--wl", "10", "--fl", "9"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("word length"));
}

#[test]
fn malformed_problem_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"A\": [[1, 1]],\n  \"b\": [1,\n}\n").unwrap();
    let o = run(&["design", "--problem", bad.to_str().unwrap(), "--eps", "0.1"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"), "{o:?}");
}

#[test]
fn bench_num_row_is_within_eps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.json");
    let dump = dir.path().join("inst");
    let o = run(&[
        "bench", "num", "--nodes", "10", "--seed", "7", "--eps", "0.1", "--instances", "6",
        "--samples", "2000", "--out", out.to_str().unwrap(), "--dump", dump.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let row = &v["rows"][0];
    assert!(row["opt_achieved"].as_f64().unwrap().abs() <= 0.1);
    assert!(row["feas_achieved"].as_f64().unwrap() <= 0.1);
    assert!(stdout(&o).contains("fl-wl"));
    assert!(dump.join("network.json").exists());
    assert_eq!(fs::read_dir(&dump).unwrap().count(), 7);
}

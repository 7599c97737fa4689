use std::process::{Command, Output};

fn hpf(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_hpf"));
    cmd.args(args).env_remove("HPF_TOLERANCE");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn pf_reports_value_and_schema() {
    let out = hpf(&["pf", "--f", "1", "--alpha", "-0.5", "--x", "1", "--n", "1"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["command"], "pf");
    let value = v["records"][0]["measured"].as_f64().unwrap();
    assert!((value + 2.0).abs() < 1e-12);
    assert_eq!(v["records"][0]["anchor"], "riesz-integration-by-parts");
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("-2.0000000000000000e+0"), "{text}");
}

#[test]
fn pf_sweep_and_direct_records() {
    let out = hpf(&["pf", "--f", "cos(s)", "--alpha", "-0.5", "--sweep-n", "1..3", "--format", "text"], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS depth-consistency-spread"));
    let out = hpf(&["pf", "--f", "s^2", "--alpha", "0.5", "--n", "0", "--format", "csv"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8_lossy(&out.stdout);
    assert!(csv.starts_with("name,anchor,status,measured,bound,tolerance"));
    assert!(csv.contains("direct-quadrature,riesz-integration-by-parts,pass"));
}

#[test]
fn exit_codes() {
    assert_eq!(hpf(&["pf", "--f", "sin(", "--alpha", "0.5"], &[]).status.code(), Some(3));
    assert_eq!(hpf(&["pf", "--f", "exp(s)", "--alpha", "-1.5", "--n", "1"], &[]).status.code(), Some(2));
    assert_eq!(hpf(&["pf", "--f", "1", "--alpha", "0.5"], &[("HPF_TOLERANCE", "abc")]).status.code(), Some(3));
    assert_eq!(hpf(&["pf", "--f", "1", "--alpha", "0.5"], &[("HPF_TOLERANCE", "1e-8")]).status.code(), Some(0));
    assert_eq!(hpf(&["analytic", "--base", "5"], &[]).status.code(), Some(2));
    assert_eq!(hpf(&["summation", "--a", "01[2]*"], &[]).status.code(), Some(3));
    assert_eq!(hpf(&["witness", "--w", "x", "--f", "x"], &[]).status.code(), Some(3));
}

#[test]
fn witness_and_partition() {
    let out = hpf(&["witness", "--w", "x", "--p", "inf"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["data"]["witness"]["divergence_trace"].as_array().unwrap().len() > 20);
    let out = hpf(&["partition", "--tau-from-witness", "--K", "20"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let alphas = v["data"]["partition"]["alphas"].as_array().unwrap();
    for (k, a) in alphas.iter().enumerate() {
        assert!((a.as_f64().unwrap() - (-(k as f64)).exp()).abs() < 1e-9);
    }
}

#[test]
fn summation_and_analytic() {
    let out = hpf(&["summation", "--a", "0110[01]*", "--compare", "1010[01]*", "--N", "12"], &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let v = json(&out);
    assert_eq!(v["summary"]["failed"], 0);
    let out = hpf(&["analytic", "--a", "0110", "--K", "6", "--J", "16"], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["summary"]["failed"], 0);
}

#[test]
fn identical_runs_are_byte_identical() {
    let args = ["analytic", "--a", "0[1]*"];
    assert_eq!(hpf(&args, &[]).stdout, hpf(&args, &[]).stdout);
}

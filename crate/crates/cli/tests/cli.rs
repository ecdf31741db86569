use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quasitest::rng::{stream_rng, Stream};
use quasitest::simgen::{draw_biased, BiasedSampler, GeneratorSpec};
use quasitest::BiasFunction;
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quasitest")).args(args).output().unwrap()
}

fn run_env(args: &[&str], key: &str, val: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quasitest")).args(args).env(key, val).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn truncated_csv(dir: &TempDir, n: usize, rho: f64, seed: u64) -> PathBuf {
    let s = BiasedSampler::new(GeneratorSpec::BivariateNormal { rho }, BiasFunction::Truncation);
    let d = draw_biased(&s, n, &mut stream_rng(seed, Stream::Data)).unwrap().sample;
    let mut text = String::from("X,Y\n");
    for o in d.observations() {
        text.push_str(&format!("{},{}\n", o.x, o.y));
    }
    write(dir, "data.csv", &text)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn test_reports_json_and_zero_b_gives_unit_p() {
    let dir = TempDir::new().unwrap();
    let data = truncated_csv(&dir, 60, 0.0, 1);
    let o = run(&["test", "-i", p(&data), "--B", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["p_value"], 1.0);
    assert_eq!(v["method"], "perm-mcmc");
}

#[test]
fn strong_dependence_is_detected() {
    let dir = TempDir::new().unwrap();
    let data = truncated_csv(&dir, 100, -0.9, 2);
    let o = run(&["test", "-i", p(&data), "--B", "99", "--seed", "5"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["p_value"], 0.01);
}

#[test]
fn manifest_replay_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let data = truncated_csv(&dir, 50, 0.3, 3);
    let out1 = dir.path().join("r1.json");
    let manifest = dir.path().join("m.json");
    let o = run(&["test", "-i", p(&data), "--B", "49", "--seed", "11", "--out", p(&out1), "--manifest", p(&manifest)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let first = fs::read(&out1).unwrap();
    let m: Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["job"]["test"]["seed"], 11);
    assert_eq!(m["input_digest"].as_str().unwrap().len(), 64);
    fs::remove_file(&out1).unwrap();
    let o = run(&["replay", p(&manifest)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(&out1).unwrap(), first);

    // a changed input is refused
    fs::write(&data, "x,y\n0,1\n0.5,2\n0.1,3\n").unwrap();
    let o = run(&["replay", p(&manifest)]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn infeasible_data_names_the_row() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "bad.csv", "x,y\n0.1,0.5\n0.2,0.9\n1.5,0.7\n0.3,0.8\n");
    let o = run(&["test", "-i", p(&data), "--B", "9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("data row 3 (line 4"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let data = truncated_csv(&dir, 20, 0.0, 4);
    assert_eq!(run(&["test", "-i", p(&data), "--bias", "nonsense"]).status.code(), Some(1));
    assert_eq!(run(&["test", "-i", p(&data), "--method", "perm-is:bogus"]).status.code(), Some(1));
    assert_eq!(run(&["test", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(run(&["test", "-i", "/nonexistent/file.csv"]).status.code(), Some(1));
    assert_eq!(run_env(&["test", "-i", p(&data)], "QUASITEST_THREADS", "zero").status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn parse_errors_report_line_numbers() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "p.csv", "x,y\n0.1,0.5\n0.2,abc\n");
    let o = run(&["test", "-i", p(&data)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    let data = write(&dir, "c.csv", "x;y\n0,1\n0,5;2\n");
    let o = run(&["test", "-i", p(&data), "--delimiter", ";"]);
    assert_eq!(o.status.code(), Some(2));
    let data = write(&dir, "m.csv", "a,b\n0,1\n");
    assert_eq!(run(&["test", "-i", p(&data)]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_three() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "tiny.csv", "x,y\n0.1,0.5\n0.2,0.9\n0.3,0.4\n");
    let o = run(&["test", "-i", p(&data), "--B", "9"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn censoring_bias_uses_uncensored_rows() {
    let dir = TempDir::new().unwrap();
    let s = BiasedSampler::new(GeneratorSpec::BivariateNormal { rho: 0.0 }, BiasFunction::Truncation);
    let d = draw_biased(&s, 80, &mut stream_rng(5, Stream::Data)).unwrap().sample;
    let mut text = String::from("x,Y,DELTA\n");
    for (i, o) in d.observations().iter().enumerate() {
        text.push_str(&format!("{},{},{}\n", o.x, o.y, if i % 5 == 0 { 0 } else { 1 }));
    }
    let data = write(&dir, "cens.csv", &text);
    let o = run(&["test", "-i", p(&data), "--bias", "censoring", "--B", "19"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["diagnostics"]["uncensored_n"], 64);
}

#[test]
fn marginals_csv() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", "x,y\n0.3,1\n0.1,2\n0.7,0.5\n");
    let o = run(&["marginals", "-i", p(&data), "--bias", "const"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let want = "variable,value,mass,cdf\nx,0.1,0.3333333333333333,0.3333333333333333\n";
    assert!(stdout(&o).starts_with(want), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().count(), 7);

    let data = write(&dir, "two.csv", "x,y\n1,1\n3,1\n");
    let o = run(&["marginals", "-i", p(&data), "--bias", "sum", "--estimator", "npmle"]);
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    let mass = |l: &str| l.split(',').nth(2).unwrap().parse::<f64>().unwrap();
    assert!((mass(&lines[1]) - 2.0 / 3.0).abs() < 1e-15);
    assert!((mass(&lines[2]) - 1.0 / 3.0).abs() < 1e-15);

    let data = truncated_csv(&dir, 30, 0.0, 6);
    let o = run(&["marginals", "-i", p(&data), "--estimator", "npmle"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn draws_start_at_identity_and_respect_truncation() {
    let dir = TempDir::new().unwrap();
    let data = truncated_csv(&dir, 30, 0.2, 7);
    let scatter = dir.path().join("scatter.csv");
    let o = run(&["draws", "-i", p(&data), "--B", "20", "--scatter", p(&scatter)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = stdout(&o);
    assert_eq!(summary.lines().count(), 22);
    assert!(summary.lines().nth(1).unwrap().starts_with("0,"));
    let text = fs::read_to_string(&scatter).unwrap();
    let rows: Vec<Vec<f64>> =
        text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 21 * 30);
    assert!(rows.iter().all(|r| r[2] < r[3]));
    let raw = fs::read_to_string(&data).unwrap();
    let first: Vec<&str> = raw.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(rows[0][2], first[0].parse::<f64>().unwrap());
    assert_eq!(rows[0][3], first[1].parse::<f64>().unwrap());

    let o = run(&["draws", "-i", p(&data), "--sampler", "is:monotone", "--B", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let diag: Value = serde_json::from_str(stderr(&o).lines().last().unwrap()).unwrap();
    assert!(diag["weight_cv"].is_number());
}

#[test]
fn simulate_preset_and_config() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("power.csv");
    let o = run_env(
        &["simulate", "--preset", "table1-null", "--reps", "1", "--B", "19", "--out", p(&out)],
        "QUASITEST_THREADS",
        "2",
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "model,bias,method,statistic,n,B,reps,alpha,rate,ci_lo,ci_hi,mean_runtime_s");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("Norm(0),truncation,perm-mcmc,adjusted-hoeffding,100,19,1,0.05,"));

    let cfg = write(
        &dir,
        "study.json",
        r#"{"rows": [
            {"model": "LN", "generator": "lognormal:0.2", "bias": "sum", "method": "perm-is:monotone", "statistic": "iw", "n": 40},
            {"generator": "norm:0", "n": 40, "censored": true}
        ]}"#,
    );
    let a = run(&["simulate", "--config", p(&cfg), "--reps", "4", "--B", "19", "--seed", "9"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = run(&["simulate", "--config", p(&cfg), "--reps", "4", "--B", "19", "--seed", "9"]);
    let strip = |s: String| s.lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect::<Vec<_>>();
    assert_eq!(strip(stdout(&a)), strip(stdout(&b)));
    assert!(stdout(&a).contains("LN,sum,perm-is:monotone,inverse-weighting,40,19,4,"));

    assert_eq!(run(&["simulate", "--preset", "nope", "--reps", "1"]).status.code(), Some(1));
    assert_eq!(run(&["simulate", "--reps", "1"]).status.code(), Some(1));
}

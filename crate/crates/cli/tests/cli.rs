use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn pmd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn point_pmf_prints_shortest_decimal() {
    let out = pmd(&["pmf", "--spm", &data("example1.csv"), "--x", "4,0,0"]);
    assert_eq!(out.status.code(), Some(0));
    let v: f64 = stdout(&out).trim().parse().unwrap();
    assert!((v - 0.016).abs() < 1e-12);
}

#[test]
fn cdf_at_top_corner_is_one() {
    let out = pmd(&["cdf", "--spm", &data("example1.csv"), "--x", "4,4,0"]);
    assert_eq!(out.status.code(), Some(0));
    let v: f64 = stdout(&out).trim().parse().unwrap();
    assert!((v - 1.0).abs() < 1e-10);
}

#[test]
fn sim_reports_bound() {
    let ex1 = data("example1.csv");
    let args = ["pmf", "--spm", ex1.as_str(), "--x", "2,1,1", "--method", "sim", "--b", "20000", "--seed", "4"];
    let text = stdout(&pmd(&args));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("bound "));
    assert_eq!(text, stdout(&pmd(&args)));
}

#[test]
fn sample_is_reproducible_and_seed_sensitive() {
    let vote = data("voting10x3.csv");
    let a = pmd(&["sample", "--spm", &vote, "--b", "200", "--seed", "1"]);
    let b = pmd(&["sample", "--spm", &vote, "--b", "200", "--seed", "1"]);
    let c = pmd(&["sample", "--spm", &vote, "--b", "200", "--seed", "2"]);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let text = stdout(&a);
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit())).collect();
    assert_eq!(rows.len(), 200);
    for row in rows {
        let total: usize = row.split(',').map(|f| f.trim().parse::<usize>().unwrap()).sum();
        assert_eq!(total, 10);
    }
}

#[test]
fn vote_json_is_a_distribution() {
    let out = pmd(&["vote", "--spm", &data("voting10x3.csv"), "--q", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let winners: Vec<f64> = doc["winner_probs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let tie = doc["tie_prob"].as_f64().unwrap();
    assert_eq!(winners.len(), 3);
    assert!((winners.iter().sum::<f64>() + tie - 1.0).abs() < 1e-9);
    assert!((tie - 0.17204).abs() < 1e-5);
    let mode = doc["mode"]["x"].as_array().unwrap();
    assert_eq!(mode.iter().map(|v| v.as_u64().unwrap()).sum::<u64>(), 10);
    assert!(doc["q_mode"]["point"]["p"].as_f64().is_some());
}

#[test]
fn confusion_interval_for_binomial_cell() {
    let out = pmd(&["confusion", "--probs", &data("binomial100.csv")]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let cell = doc["cells"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["predicted"] == 1 && c["actual"] == 1)
        .unwrap()
        .clone();
    assert_eq!(cell["lo"], 40);
    assert_eq!(cell["hi"], 60);
}

#[test]
fn bad_input_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0.5,0.6\n0.2,0.8\n").unwrap();
    let out = pmd(&["pmf", "--spm", bad.to_str().unwrap(), "--x", "1,1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let out = pmd(&["pmf", "--spm", &data("example1.csv"), "--x", "3,3,3"]);
    assert_eq!(out.status.code(), Some(2));

    let out = pmd(&["pmf", "--spm", &data("example1.csv"), "--method", "na"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oversized_grid_exits_with_cap_code() {
    let out = pmd(&["pmf", "--spm", &data("big_m8.csv")]);
    assert_eq!(out.status.code(), Some(3));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("cap"), "{msg}");

    let out = pmd(&["--mem-cap-cells", "10", "pmf", "--spm", &data("example1.csv"), "--x", "1,1,2"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn oversized_grid_still_allows_simulation() {
    let big = data("big_m8.csv");
    let out = pmd(&["pmf", "--spm", &big, "--x", "2,2,2,2,2,2,2,1", "--method", "sim", "--b", "1000"]);
    assert_eq!(out.status.code(), Some(0));
}

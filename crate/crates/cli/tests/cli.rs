use std::path::Path;
use std::process::{Command, Output};

fn capmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capmc"))
        .args(args)
        .env_remove("CAPMC_WORKERS")
        .output()
        .expect("spawning capmc")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn strong_law_writes_table_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let res = capmc(&[
        "strong-law",
        "--dim",
        "3",
        "--steps",
        "16384",
        "--sigma",
        "0.25:0.0625:halving",
        "--replicas",
        "2",
        "--seed",
        "42",
        "--out",
        path_arg(&out),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let table = std::fs::read_to_string(&out).unwrap();
    let normalized = table.lines().filter(|l| l.contains(",normalized_s,")).count();
    assert_eq!(normalized, 2 * 3);
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("run.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["experiment"], "strong-law");
    assert_eq!(meta["config"]["seed"], 42);
    assert_eq!(meta["config"]["sigma"], serde_json::json!([0.25, 0.125, 0.0625]));
    assert_eq!(meta["config"]["format"], "csv");
}

#[test]
fn missing_required_flag_exits_2_naming_it() {
    let res = capmc(&["strong-law", "--steps", "16384", "--sigma", "0.25"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("--dim"), "{}", stderr(&res));
}

#[test]
fn sigma_below_guard_names_the_inequality() {
    let res = capmc(&["strong-law", "--dim", "3", "--steps", "1024", "--sigma", "0.01"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(
        stderr(&res).contains("sigma_min must be ≥ 4·n_steps^(-1/2)"),
        "{}",
        stderr(&res)
    );
}

#[test]
fn malformed_values_exit_2() {
    for args in [
        &["moments", "--dim", "3", "--sigma", "0.1:0.2:halving"][..],
        &["moments", "--dim", "three", "--sigma", "0.1"],
        &["moments", "--dim", "3", "--sigma", "0.1", "--format", "xml"],
        &["moments", "--dim", "3", "--sigma", "0.1", "--bogus", "1"],
        &[
            "cap-equiv",
            "--dim",
            "3",
            "--steps",
            "16384",
            "--alpha",
            "2",
            "--n-max",
            "6",
        ],
    ] {
        let res = capmc(args);
        assert_eq!(res.status.code(), Some(2), "{args:?}: {}", stderr(&res));
    }
}

#[test]
fn unwritable_output_exits_4() {
    let res = capmc(&[
        "moments",
        "--dim",
        "3",
        "--sigma",
        "0.1",
        "--out",
        "/nonexistent-dir/run.csv",
    ]);
    assert_eq!(res.status.code(), Some(4), "{}", stderr(&res));
}

#[test]
fn config_file_is_merged_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"dim": 3, "sigma": [0.1, 0.05], "format": "jsonl"}"#).unwrap();
    let res = capmc(&["moments", "--config", path_arg(&cfg), "--format", "csv"]);
    assert!(res.status.success(), "{}", stderr(&res));
    let text = String::from_utf8(res.stdout).unwrap();
    assert!(text.starts_with("experiment,replica,"));
    assert_eq!(text.lines().filter(|l| l.contains(",expected_s,")).count(), 2);

    std::fs::write(&cfg, r#"{"dim": 3, "sigma": 0.1, "colour": "red"}"#).unwrap();
    let res = capmc(&["moments", "--config", path_arg(&cfg)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("colour"), "{}", stderr(&res));
}

#[test]
fn equilibrium_refuses_raw_riesz_and_solves_smoothed() {
    let dir = tempfile::tempdir().unwrap();
    let points = dir.path().join("points.csv");
    std::fs::write(&points, "x,y\n0,0\n0.5,0\n1,0\n").unwrap();
    let res = capmc(&[
        "equilibrium",
        "--points",
        path_arg(&points),
        "--kernel",
        "riesz:alpha=1",
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("smooth:eps="), "{}", stderr(&res));

    let res = capmc(&[
        "equilibrium",
        "--points",
        path_arg(&points),
        "--kernel",
        "smooth:eps=0.0625:riesz:alpha=1",
        "--format",
        "jsonl",
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let rows: Vec<serde_json::Value> = String::from_utf8(res.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let weights: Vec<f64> = rows
        .iter()
        .filter(|r| r["quantity"] == "weight")
        .map(|r| r["estimate"].as_f64().unwrap())
        .collect();
    assert_eq!(weights.len(), 3);
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((weights[0] - weights[2]).abs() < 1e-6 && weights[0] > weights[1]);
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [(&str, &[&str]); 3] = [
        (
            "zero",
            &[
                "zero-set",
                "--steps",
                "16384",
                "--delta",
                "0.0625:0.00390625:halving",
                "--n-min",
                "2",
                "--n-max",
                "6",
                "--replicas",
                "4",
            ],
        ),
        (
            "cap",
            &[
                "cap-equiv",
                "--dim",
                "3",
                "--steps",
                "16384",
                "--alpha",
                "0.5,1,1.5",
                "--n-max",
                "6",
                "--replicas",
                "3",
            ],
        ),
        (
            "approach",
            &[
                "approach",
                "--dim",
                "4",
                "--alpha",
                "1",
                "--steps",
                "4096",
                "--eps",
                "0.25,0.125",
                "--paths",
                "500",
                "--max-jumps",
                "1000",
            ],
        ),
    ];
    for (name, args) in runs {
        let mut tables = Vec::new();
        for (i, workers) in ["1", "3", "1"].iter().enumerate() {
            let out = dir.path().join(format!("{name}-{i}.jsonl"));
            let mut full: Vec<&str> = args.to_vec();
            full.extend([
                "--seed",
                "7",
                "--format",
                "jsonl",
                "--workers",
                workers,
                "--out",
                path_arg(&out),
            ]);
            let res = capmc(&full);
            assert!(res.status.success(), "{name}: {}", stderr(&res));
            tables.push(std::fs::read(&out).unwrap());
        }
        assert!(!tables[0].is_empty());
        assert_eq!(tables[0], tables[1], "{name}: 1 vs 3 workers");
        assert_eq!(tables[0], tables[2], "{name}: rerun");
    }
}

#[test]
fn workers_default_comes_from_the_environment() {
    let res = Command::new(env!("CARGO_BIN_EXE_capmc"))
        .args(["moments", "--dim", "3", "--sigma", "0.1"])
        .env("CAPMC_WORKERS", "0")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("--workers"), "{}", stderr(&res));
}

#[test]
fn dump_path_writes_the_replica_zero_path() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("path.csv");
    let res = capmc(&[
        "sausage",
        "--dim",
        "2",
        "--steps",
        "1024",
        "--n-min",
        "1",
        "--n-max",
        "4",
        "--dump-path",
        path_arg(&dump),
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let text = std::fs::read_to_string(&dump).unwrap();
    assert!(text.starts_with("t,x1,x2\n0,0,0\n"), "{}", &text[..40]);
    assert_eq!(text.lines().count(), 1 + 1025);
}

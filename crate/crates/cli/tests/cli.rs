use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_padic-salem"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn manifest_line(text: &str) -> &str {
    text.lines().next().unwrap()
}

#[test]
fn verify_toy_schedule_passes() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["verify", "--p", "3", "--tau", "5/2", "--M-list", "1,2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("lemmas.csv")).unwrap();
    assert!(manifest_line(&csv).starts_with("# manifest "));
    assert!(csv.contains("FM2"));
}

#[test]
fn standing_assumption_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["build", "--p", "2", "--M0", "1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("standing assumption"));
}

#[test]
fn bad_flags_exit_with_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(dir.path(), &["build", "--nope", "1"])), 2);
    assert_eq!(code(&run(dir.path(), &["build", "--tau", "two"])), 2);
    assert_eq!(code(&run(dir.path(), &["build", "--tau", "2"])), 2);
}

#[test]
fn decay_ratio_column_is_populated() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["decay", "--M-list", "2,3", "--k", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("decay_1.csv")).unwrap();
    let mut lines = csv.lines().skip(1);
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let max_col = header.iter().position(|h| *h == "max_abs").unwrap();
    let ratio_col = header.iter().position(|h| *h == "ratio").unwrap();
    let mut nonzero = 0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let max: f64 = cells[max_col].parse().unwrap();
        if max > 0.0 {
            nonzero += 1;
            let ratio: f64 = cells[ratio_col].parse().unwrap();
            assert!(ratio.is_finite() && ratio > 0.0, "{line}");
        }
    }
    assert!(nonzero > 0);
    assert!(dir.path().join("decay_1_plot.csv").exists());
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["decay", "--M-list", "2,3", "--k", "1", "--samples", "50", "--cap-shell", "100", "--seed", "9"];
    let mut one = args.to_vec();
    one.extend(["--threads", "1"]);
    let mut four = args.to_vec();
    four.extend(["--threads", "4"]);
    assert_eq!(code(&run(a.path(), &one)), 0);
    assert_eq!(code(&run(b.path(), &four)), 0);
    let x = fs::read(a.path().join("decay_1.csv")).unwrap();
    let y = fs::read(b.path().join("decay_1.csv")).unwrap();
    assert_eq!(x, y);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# toy run\np = 5\nM-list = 1,2\nseed = 7\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&out, &["build", "--config", cfg.to_str().unwrap(), "--p", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["p"], 3);
    assert_eq!(manifest["config"]["seed"], 7);
    assert_eq!(manifest["build"]["mode"], "toy");
    assert!(out.join("mu_2.txt").exists());
}

#[test]
fn every_output_names_the_manifest() {
    let dir = TempDir::new().unwrap();
    for cmd in ["regularity", "energy", "restrict", "oracle-diff", "dump"] {
        let o = run(dir.path(), &[cmd, "--M-list", "2,3"]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["hash"].as_str().unwrap();
    let mut csvs = 0;
    for entry in fs::read_dir(dir.path()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            let text = fs::read_to_string(&path).unwrap();
            assert_eq!(manifest_line(&text), format!("# manifest {hash}"), "{}", path.display());
            csvs += 1;
        }
    }
    assert!(csvs >= 5);
}

#[test]
fn json_format_wraps_the_report() {
    let dir = TempDir::new().unwrap();
    let o = run(dir.path(), &["regularity", "--M-list", "2,3", "--k", "1", "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("regularity_1.json")).unwrap()).unwrap();
    assert_eq!(doc["kind"], "regularity");
    assert!(doc["report"]["rows"].as_array().is_some_and(|r| !r.is_empty()));
}

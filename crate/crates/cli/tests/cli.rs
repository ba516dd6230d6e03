use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn caflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_caflow")).args(args).output().expect("spawn caflow")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const PROD2: &str = r#"
rule = "prod2"
measure = "uniform_x_uniform"
velocity = "2,2"
p = [0, 1]
n = [1, 2, 3]
samples = 8
seed = 1
out = "o"
"#;

fn convergence(dir: &Path) -> Vec<(usize, usize, f64)> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(dir.join("o/convergence.csv"))
        .unwrap();
    let h = r.headers().unwrap().clone();
    let col = |name: &str| h.iter().position(|c| c == name).unwrap();
    let (ip, i_n, im) = (col("p"), col("n"), col("M_value"));
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[ip].parse().unwrap(), rec[i_n].parse().unwrap(), rec[im].parse().unwrap())
        })
        .collect()
}

fn m_at(rows: &[(usize, usize, f64)], p: usize, n: usize) -> f64 {
    rows.iter().find(|r| r.0 == p && r.1 == n).unwrap().2
}

#[test]
fn catalog_lists_rules_and_presets() {
    let out = caflow(&["catalog", "--json"]);
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rules = doc["rules"].as_array().unwrap();
    let find = |name: &str| rules.iter().find(|e| e["name"] == name).unwrap();
    assert_eq!(find("prod2")["k"], 4);
    assert_eq!(find("prod2")["r"], 2);
    assert_eq!(find("rule90")["bipermutative"], true);
    assert_eq!(find("rule204")["bipermutative"], false);
    assert_eq!(find("id_x_shift2")["measure"], "uniform_x_sturmian");
    assert!(doc["measures"].as_array().unwrap().iter().any(|m| m == "sturmian"));
}

#[test]
fn run_prod2_matches_exact_curves() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "prod2.toml", PROD2);
    let out = caflow(&["run", &cfg, "--reproducible"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = convergence(dir.path());
    assert!((m_at(&rows, 0, 3) - 4.0 / 13.0).abs() < 1e-9);
    assert!((m_at(&rows, 1, 3) - 0.5).abs() < 1e-9);
    assert!(stdout(&out).contains("T1:") && stdout(&out).contains("PASS"));
    let results = std::fs::read_to_string(dir.path().join("o/results.csv")).unwrap();
    assert!(results.starts_with("experiment_id,rule_label,measure_label,p,n,delta,v_minus,v_plus,count_T"));
    assert!(dir.path().join("o/theorems.json").exists());
}

#[test]
fn run_rule90_pins_the_window_once_p_is_positive() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "rule90.toml",
        "rule = \"rule90\"\nvelocity = \"1,1\"\np = [0, 1]\nn = [2, 4, 6]\nsamples = 4\nseed = 1\nout = \"o\"\n",
    );
    let out = caflow(&["run", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = convergence(dir.path());
    for n in [2, 4, 6] {
        assert!((m_at(&rows, 1, n) - 1.0).abs() < 1e-9);
        assert!(m_at(&rows, 0, n) < 1.0);
    }
}

#[test]
fn reproducible_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "prod2.toml", PROD2);
    let read = |name: &str| std::fs::read(dir.path().join("o").join(name)).unwrap();
    assert_eq!(code(&caflow(&["run", &cfg, "--reproducible"])), 0);
    let first: Vec<_> = ["results.csv", "convergence.csv", "theorems.json"].map(read).into();
    assert_eq!(code(&caflow(&["run", &cfg, "--reproducible"])), 0);
    let second: Vec<_> = ["results.csv", "convergence.csv", "theorems.json"].map(read).into();
    assert_eq!(first, second);
    assert_eq!(code(&caflow(&["run", &cfg])), 0);
    let stamped = String::from_utf8(read("results.csv")).unwrap();
    assert!(stamped.starts_with("# generated_unix="));
}

#[test]
fn seed_override_changes_sampled_points() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "r30.toml",
        "rule = \"rule30\"\nvelocity = \"1,1\"\np = [0]\nn = [2, 3]\nsamples = 4\nseed = 1\nout = \"o\"\n",
    );
    let results = |seed: &str| {
        assert_eq!(code(&caflow(&["run", &cfg, "--reproducible", "--seed", seed])), 0);
        std::fs::read_to_string(dir.path().join("o/results.csv")).unwrap()
    };
    assert_ne!(results("1"), results("2"));
}

#[test]
fn verify_exit_codes() {
    let dir = TempDir::new().unwrap();
    let prod2 = write_config(dir.path(), "prod2.toml", PROD2);
    assert_eq!(code(&caflow(&["verify", &prod2, "--theorem", "t1"])), 0);
    assert!(dir.path().join("o/theorem_t1.json").exists());

    let slow = write_config(
        dir.path(),
        "slow.toml",
        "rule = \"shift\"\nvelocity = \"1/4,1/4\"\np = [0, 1]\nn = [2, 4, 6]\nsamples = 4\nseed = 1\nout = \"o\"\n",
    );
    assert_eq!(code(&caflow(&["verify", &slow, "--theorem", "t2ii"])), 0);

    // Monte Carlo at n <= 3 is far from the limit, so the identity is rejected
    let mc = write_config(
        dir.path(),
        "mc.toml",
        "rule = \"rule30\"\nvelocity = \"1,1\"\np = [0]\nn = [2, 3]\nsamples = 4\nmode = \"mc-only\"\nseed = 1\nout = \"o\"\n",
    );
    assert_eq!(code(&caflow(&["verify", &mc, "--theorem", "t2i"])), 4);
}

#[test]
fn budget_and_config_errors() {
    let dir = TempDir::new().unwrap();
    let exact = write_config(
        dir.path(),
        "exact.toml",
        "rule = \"rule30\"\nvelocity = \"1,1\"\np = [0]\nn = [2, 3]\nsamples = 4\nmode = \"exact-only\"\nseed = 1\nout = \"o\"\n",
    );
    assert_eq!(code(&caflow(&["run", &exact, "--budget", "1"])), 3);

    let no_seed = write_config(dir.path(), "noseed.toml", "rule = \"shift\"\nout = \"o\"\n");
    assert_eq!(code(&caflow(&["run", &no_seed])), 2);
    assert_eq!(code(&caflow(&["run", &no_seed, "--seed", "3"])), 0);

    let typo = write_config(dir.path(), "typo.toml", "rul = \"shift\"\nseed = 1\nout = \"o\"\n");
    assert_eq!(code(&caflow(&["run", &typo])), 2);
    let unknown = write_config(dir.path(), "unknown.toml", "rule = \"nope\"\nseed = 1\nout = \"o\"\n");
    assert_eq!(code(&caflow(&["run", &unknown])), 2);
    assert_eq!(code(&caflow(&["run", &dir.path().join("missing.toml").to_string_lossy()])), 2);
}

#[test]
fn classify_separates_expansive_and_equicontinuous() {
    let dir = TempDir::new().unwrap();
    let label = |rule: &str| {
        let cfg = write_config(
            dir.path(),
            &format!("{rule}.toml"),
            &format!("rule = \"{rule}\"\nseed = 1\nout = \"o\"\n[classify]\npoints = 4\nhorizons = [2, 4, 8]\n"),
        );
        let out = caflow(&["classify", &cfg, "--reproducible"]);
        assert_eq!(code(&out), 0);
        stdout(&out)
    };
    assert!(label("rule90").contains("mu-expansive-evidence"));
    assert!(label("rule204").contains("mu-equicontinuous-evidence"));
    assert!(dir.path().join("o/classify.json").exists());
}

#[test]
fn oracle_suite_passes_on_a_small_sample() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("suite");
    let out = caflow(&["oracle-suite", "--instances", "20", "--out", &out_dir.to_string_lossy()]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert!(stdout(&out).contains("0 exact mismatches"));
    assert!(out_dir.join("oracle_suite.json").exists());
}

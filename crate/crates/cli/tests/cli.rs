use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use multitime::bounds::effective_dimension;
use multitime::experiments::{build_random_bath, cell_seeds, random_pure_state};
use multitime::io::{read_tensor_bin, write_operator_csv};
use multitime::qmath::Operator;
use multitime::{CMat, C64};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_multitime"))
        .current_dir(dir)
        .env_remove("MULTITIME_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_op(path: &Path, m: CMat, dims: Vec<usize>) {
    let mut buf = Vec::new();
    write_operator_csv(&mut buf, &Operator::new(m, dims).unwrap()).unwrap();
    fs::write(path, buf).unwrap();
}

fn diag(values: &[f64]) -> CMat {
    let mut m = CMat::zeros(values.len(), values.len());
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = C64::new(*v, 0.0);
    }
    m
}

#[test]
fn deff_of_maximally_mixed_and_eigenstate() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_op(&p.join("h.csv"), diag(&[0.0, 1.0, 2.5, 4.0]), vec![2, 2]);
    write_op(&p.join("mixed.csv"), diag(&[0.25; 4]), vec![2, 2]);
    write_op(&p.join("eigen.csv"), diag(&[0.0, 0.0, 1.0, 0.0]), vec![2, 2]);

    let o = run(p, &["deff", "--hamiltonian", "h.csv", "--state", "mixed.csv"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "4.0");
    let o = run(p, &["deff", "--hamiltonian", "h.csv", "--state", "eigen.csv"]);
    assert_eq!(stdout(&o).trim(), "1.0");
}

#[test]
fn deff_model_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["deff", "--d-e", "50", "--seed", "7"]);
    assert!(o.status.success());
    let [sh, sp, _] = cell_seeds(7, 50, 0);
    let model = build_random_bath(0.5, 0.2, 0.1, 50, sh);
    let expect = effective_dimension(&model.spectral().unwrap(), &random_pure_state(100, sp)).unwrap();
    assert_eq!(stdout(&o).trim(), format!("{expect:?}"));
}

#[test]
fn deff_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write_op(&p.join("h.csv"), diag(&[0.0, 1.0, 2.5, 4.0]), vec![2, 2]);
    write_op(&p.join("small.csv"), diag(&[0.5, 0.5]), vec![2]);
    fs::write(p.join("junk.csv"), "# schema_version: 1\ndims,2\n1,0,x\n").unwrap();

    let o = run(p, &["deff", "--hamiltonian", "h.csv", "--state", "small.csv"]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(p, &["deff", "--hamiltonian", "h.csv", "--state", "junk.csv"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(p, &["deff", "--hamiltonian", "h.csv", "--state", "missing.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_rejects_unknown_keys_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("bad.toml"), "seed = 1\n[deff]\nd_E = 4\n").unwrap();
    assert_eq!(run(p, &["--config", "bad.toml", "deff"]).status.code(), Some(2));

    fs::write(p.join("good.toml"), "schema_version = 1\nseed = 7\n[deff]\nd_e = 50\n").unwrap();
    let from_file = stdout(&run(p, &["--config", "good.toml", "deff"]));
    let from_flags = stdout(&run(p, &["deff", "--d-e", "50", "--seed", "7"]));
    assert_eq!(from_file, from_flags);
    let overridden = stdout(&run(p, &["--config", "good.toml", "deff", "--d-e", "10"]));
    assert_ne!(overridden, from_file);

    fs::write(p.join("version.toml"), "schema_version = 9\n").unwrap();
    assert_eq!(run(p, &["--config", "version.toml", "deff"]).status.code(), Some(2));
    assert_eq!(run(p, &["verify-bounds", "--samples", "0"]).status.code(), Some(2));
}

#[test]
fn default_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify-bounds"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# schema_version: 1"));
    assert!(lines.next().unwrap().starts_with("context,"));
    assert_eq!(lines.count(), 800);
}

#[test]
fn dephased_suite_has_zero_lhs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify-bounds", "--model", "dephased", "--seeds", "5"]);
    assert!(o.status.success());
    let csv = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    for line in csv.lines().skip(2) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[5], "0.0", "{line}");
        assert_eq!(cols[8], "true");
    }
}

#[test]
fn resonant_rows_are_marked() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify-bounds", "--model", "resonant", "--seeds", "2", "--samples", "50"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    let csv = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    for line in csv.lines().skip(2) {
        assert!(line.contains("[non-resonance violated]"), "{line}");
    }
}

#[test]
fn fig2_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let args = |w: &'static str, out: &'static str| {
        vec!["fig2", "--d-e-max", "28", "--models", "2", "--workers", w, "--out-dir", out, "--seed", "5"]
    };
    assert!(run(p, &args("1", "a")).status.success());
    assert!(run(p, &args("8", "b")).status.success());
    for f in ["fig2_raw.csv", "fig2_binned.csv", "fig2_plot.json"] {
        assert_eq!(fs::read(p.join("a").join(f)).unwrap(), fs::read(p.join("b").join(f)).unwrap(), "{f}");
    }
    let raw = fs::read_to_string(p.join("a/fig2_raw.csv")).unwrap();
    assert_eq!(raw.lines().count(), 2 + 2 * 7);
    let binned = fs::read_to_string(p.join("a/fig2_binned.csv")).unwrap();
    assert_eq!(binned.lines().count(), 2 + 2 * 3);
}

#[test]
fn fig2_short_mode_and_env_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_multitime"))
        .current_dir(dir.path())
        .env("MULTITIME_OUT_DIR", "envout")
        .args(["fig2", "--d-e-max", "20", "--models", "1", "--mode", "short", "--bin", "2"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let raw = fs::read_to_string(dir.path().join("envout/fig2_raw.csv")).unwrap();
    assert!(raw.lines().skip(2).all(|l| l.ends_with(",short,1")));
    let o = run(dir.path(), &["fig2", "--d-e-max", "8", "--models", "1", "--bin", "5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tensor_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["tensor-dump", "--format", "bin", "--k", "2"]);
    assert!(o.status.success());
    let t = read_tensor_bin(fs::File::open(dir.path().join("tensor.bin")).unwrap()).unwrap();
    assert_eq!(t.steps, 2);
    assert_eq!(t.choi.dim(), 16);
    let o = run(dir.path(), &["tensor-dump", "--dephased", "--output", "eq.csv"]);
    assert!(o.status.success());
    assert!(fs::read_to_string(dir.path().join("eq.csv")).unwrap().starts_with("# schema_version: 1"));
    assert_eq!(run(dir.path(), &["tensor-dump", "--k", "5", "--d-e", "8"]).status.code(), Some(3));
}

#[test]
fn diamond_and_nonmarkov_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["diamond", "--samples", "50"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("S_M = 6"));
    let o = run(dir.path(), &["nonmarkov", "--d-e", "6", "--models", "2", "--mode", "dephased"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let row = out.lines().nth(2).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(cols[4], cols[6]);
    assert_eq!(cols[8], "dephased");
}

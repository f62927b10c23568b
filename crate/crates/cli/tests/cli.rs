use std::path::{Path, PathBuf};
use std::process::Command;

use optdesign_cli::design_file::DesignFile;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optdesign"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("job.json");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn solve_is_deterministic() {
    let cfg = configs().join("example1.json");
    let cfg = cfg.to_str().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = dir.path().to_str().unwrap();
        let (code, stdout, _) = run(&["solve", "--config", cfg, "--out", out]);
        assert_eq!(code, 0);
        assert!(stdout.contains("w*"));
        assert_eq!(run(&["sparsify", "--config", cfg, "--out", out, "--seed", "3"]).0, 0);
    }
    for file in ["product.csv", "treatment.csv", "covariate.csv", "solve.txt", "sparse.csv", "sparsify.txt"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file}");
    }
    let f = DesignFile::read(&a.path().join("product.csv")).unwrap();
    assert_eq!((f.v1, f.d, f.v2), (3, 8, 3));
    assert_eq!(DesignFile::parse(&f.render(), "again").unwrap(), f);
}

#[test]
fn infeasible_interest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"lambda": [1, 1], "covariates": {"explicit": [[0.5]]}},
            "interest": {"q1": "control", "k": "identity"}, "criterion": "A"}"#,
    );
    let (code, _, stderr) = run(&["solve", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 2, "{stderr}");
    assert!(stderr.contains("estimable"), "{stderr}");
}

#[test]
fn bad_config_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"lambda": [1, 1], "covariates": {"factorial": [[-1, 1]]}},
            "interest": {"q1": "control", "k": "identity"}, "criterion": "Z"}"#,
    );
    assert_eq!(run(&["solve", "--config", &cfg]).0, 4);
    let missing = dir.path().join("nope.json");
    assert_eq!(run(&["solve", "--config", missing.to_str().unwrap()]).0, 1);
}

#[test]
fn verify_rejects_a_uniform_design() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let design = dir.path().join("uniform.csv");
    let mut text = String::from("# design v1=3 d=8 v2=3 order=treatment-major kind=approximate\ni,k,value\n");
    for i in 1..=3 {
        for k in 1..=8 {
            text.push_str(&format!("{i},{k},1\n"));
        }
    }
    std::fs::write(&design, text).unwrap();
    let cfg = configs().join("example1.json");
    let (code, stdout, _) = run(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--design",
        design.to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(code, 3);
    assert!(stdout.is_empty());
    assert!(std::fs::read_to_string(dir.path().join("verify.txt")).unwrap().contains("FAIL"));
}

#[test]
fn printed_tables_verify_after_snapping() {
    for (cfg, table) in [
        ("example1.json", "example1_sparse.csv"),
        ("example2.json", "example2_sparse.csv"),
        ("example3.json", "example3_sparse.csv"),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let (code, stdout, stderr) = run(&[
            "verify",
            "--config",
            configs().join(cfg).to_str().unwrap(),
            "--design",
            data(table).to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{table}: {stderr}");
        assert!(stdout.contains("result") && stdout.contains("pass"));
    }
}

#[test]
fn too_few_trials_reports_zero_efficiency() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("example1.json");
    let (code, stdout, _) = run(&[
        "round",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "12",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert!(stdout.contains("n=12  efficiency 0 (support 24 exceeds n)"), "{stdout}");
}

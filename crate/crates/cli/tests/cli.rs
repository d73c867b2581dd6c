use std::path::Path;
use std::process::{Command, Output};

fn confens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confens"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &[&str] = &[
    "--n",
    "240",
    "--noise",
    "0.3",
    "--k",
    "5",
    "--max-iters",
    "25",
    "--baselines",
    "10",
];

/// `verb` on the small ring setup, plus extra flags.
fn small(verb: &str, extra: &[&str]) -> Output {
    let args: Vec<&str> = std::iter::once(verb)
        .chain(SMALL.iter().copied())
        .chain(extra.iter().copied())
        .collect();
    confens(&args)
}

#[test]
fn compare_is_byte_identical_across_runs() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut outputs = Vec::new();
    for d in &dirs {
        let o = small("compare", &["--out", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(stdout(&o));
    }
    assert_eq!(outputs[0], outputs[1]);
    for f in [
        "report.txt",
        "report.csv",
        "tensor.json",
        "ensemble.json",
        "convergence.csv",
        "config.txt",
    ] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    assert!(outputs[0].contains("OUR5") && outputs[0].contains("RF10"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "n = 200\nnoise = 0.3\nk = 4\nmax-iters = 10\nbaselines = none\nseed = 3\n",
    )
    .unwrap();
    let from_file = confens(&["compare", "--config", cfg.to_str().unwrap()]);
    assert!(from_file.status.success());
    assert!(stdout(&from_file).contains("OUR4"));
    let overridden = confens(&["compare", "--config", cfg.to_str().unwrap(), "--k", "6"]);
    assert!(stdout(&overridden).contains("OUR6"));
}

#[test]
fn train_then_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = small("train", &["--out", out]);
    assert!(o.status.success());
    let tensor = dir.path().join("tensor.json");
    assert!(tensor.is_file() && dir.path().join("ensemble.json").is_file());
    let i = confens(&["inspect", "--tensor", tensor.to_str().unwrap()]);
    assert!(i.status.success());
    let text = stdout(&i);
    assert!(text.starts_with("5 learners, 2 classes"));
    assert!(text.contains("confident classes"));
}

#[test]
fn gen_data_then_train_on_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("blobs.csv");
    let g = confens(&[
        "gen-data",
        "--dataset",
        "blobs",
        "--classes",
        "4",
        "--n",
        "120",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(g.status.success());
    let header = std::fs::read_to_string(&csv).unwrap();
    assert!(header.starts_with("x0,x1,label\n"));
    let c = confens(&[
        "compare",
        "--csv",
        csv.to_str().unwrap(),
        "--k",
        "3",
        "--max-iters",
        "10",
        "--baselines",
        "none",
    ]);
    assert!(c.status.success(), "{}", String::from_utf8_lossy(&c.stderr));
    assert!(stdout(&c).contains("4 classes"));
}

#[test]
fn convergence_prints_csv() {
    let o = confens(&["convergence", "--n", "200", "--k", "3", "--max-iters", "4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("iteration,loss,constraint_residual,within_reference")
    );
    assert!(lines.count() >= 2);
}

#[test]
fn predictions_file_source() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("votes.txt");
    let mut text = String::from("# three voters, then the label\n");
    for i in 0..40 {
        let y = i % 2;
        text.push_str(&format!("{y} {} {y} {y}\n", (i / 3) % 2));
    }
    std::fs::write(&path, text).unwrap();
    let o = confens(&["compare", "--preds", path.to_str().unwrap(), "--max-iters", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("OUR3") && out.contains("skipped (no features)"));
}

fn code(o: &Output) -> Option<i32> {
    o.status.code()
}

#[test]
fn exit_codes_by_error_kind() {
    assert_eq!(code(&confens(&["compare", "--k", "0"])), Some(2));
    assert_eq!(code(&confens(&["compare", "--gamma", "lots"])), Some(2));
    assert_eq!(
        code(&confens(&["compare", "--csv", "/definitely/missing.csv"])),
        Some(5)
    );
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "0 1 1\n0 x 1\n").unwrap();
    assert_eq!(
        code(&confens(&["compare", "--preds", bad.to_str().unwrap()])),
        Some(3)
    );
    let tensor = dir.path().join("t.json");
    std::fs::write(&tensor, "{\"c\": 2}").unwrap();
    assert_eq!(
        code(&confens(&["inspect", "--tensor", tensor.to_str().unwrap()])),
        Some(3)
    );
    assert!(!Path::new("/definitely/missing.csv").exists());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = confens(&["compare", "--bogus", "1"]);
    assert_eq!(code(&o), Some(2));
}

use std::path::Path;
use std::process::Command;

use heartformer::cli::manifest_outputs;

fn heartformer(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_heartformer"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = heartformer(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TOY: [&str; 12] = [
    "--set", "gen.sparse_points=64", "--set", "gen.dense_points=256", "--set", "gen.surface_points=4000",
    "--set", "model.n_s=64", "--set", "model.n_c=16", "--set", "model.c=8",
];

#[test]
fn generate_train_complete_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (tr, va, run) = (d.join("train"), d.join("val"), d.join("run"));
    ok(&[&["generate", "--out", s(&tr), "--n", "6", "--levels", "uniform", "--seed", "1"][..], &TOY[..6]].concat());
    ok(&[&["generate", "--out", s(&va), "--n", "3", "--levels", "severe", "--seed", "2"][..], &TOY[..6]].concat());
    ok(&[
        &["train", "--out", s(&run), "--train-data", s(&tr), "--val-data", s(&va), "--epochs", "2", "--seed", "3"][..],
        &TOY[6..],
        &["--set", "model.k=4", "--set", "model.depth=1", "--set", "model.heads=2"],
    ]
    .concat());
    let csv = std::fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let ck = run.join("best.ckpt");
    let input = va.join("records/00000.sparse.lpc");
    ok(&["complete", "--out", s(&d.join("c")), "--checkpoint", s(&ck), "--input", s(&input), "--ply"]);
    assert!(d.join("c/00000.fine.ply").exists());
    let fine = heartformer::formats::read_lpc_file(&d.join("c/00000.fine.lpc")).unwrap();
    assert_eq!(fine.len(), 256);

    ok(&["evaluate", "--out", s(&d.join("e")), "--checkpoint", s(&ck), "--data", s(&va)]);
    assert!(d.join("e/severe.csv").exists() && d.join("e/severe.json").exists());
    ok(&["evaluate", "--out", s(&d.join("g")), "--data", s(&va), "--predictor", "gt"]);
    let csv = std::fs::read_to_string(d.join("g/severe.csv")).unwrap();
    assert!(csv.lines().filter(|l| l.contains("_mm,")).all(|l| l.ends_with(",0.0") || l.ends_with(",0")));

    for sub in ["train", "run", "c", "e"] {
        let manifest = d.join(sub).join("run.txt");
        let command = std::fs::read_to_string(&manifest).unwrap().lines().nth(1).unwrap().trim_start_matches("# command ").to_string();
        let again = d.join(format!("{sub}_again"));
        ok(&[&command, "--config", s(&manifest), "--out", s(&again)]);
        let a = manifest_outputs(&std::fs::read_to_string(&manifest).unwrap());
        let b = manifest_outputs(&std::fs::read_to_string(again.join("run.txt")).unwrap());
        assert!(!a.is_empty());
        assert_eq!(a, b, "{sub}");
    }
}

#[test]
fn unwritable_output_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let out = heartformer(&["generate", "--out", s(&blocker.join("sub")), "--n", "2"]);
    assert!(!out.status.success());
    assert!(!blocker.join("sub").exists());
    let out = heartformer(&["train", "--out", s(&dir.path().join("r"))]);
    assert!(!out.status.success());
    assert_eq!(std::fs::read_dir(dir.path().join("r")).map(|d| d.count()).unwrap_or(0), 0);
}

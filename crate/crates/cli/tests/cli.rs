//! End-to-end tests of the `sidlab` binary: exit codes, overwrite
//! protection, and output formats.

use std::path::Path;
use std::process::{Command, Output};

fn sidlab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sidlab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_sid(dir: &Path, name: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(
        &path,
        "# intent: alarm\n1\tset\tO\n2\talarm\tB-thing\n\n\
         # intent: weather\n1\train\tB-cond\n2\ttomorrow\tI-cond\n\n\
         # intent: alarm\n1\tcancel\tO\n2\talarm\tB-thing\n",
    )
    .unwrap();
    path
}

const CONFIG: &str = r#"
name = "smoke"
schedule = "SID"
max_epochs = 1
seeds = [1]
batch_size = 2

[model]
dim = 8
hidden = 8

[tasks.SID]
kind = "sid"
train = "train.conll"
dev = "train.conll"

[eval]
self = "train.conll"
"#;

#[test]
fn validate_accepts_good_and_rejects_bad_data() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_sid(dir.path(), "good.conll");
    let out = sidlab(&["validate", "--kind", "sid", good.to_str().unwrap()], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("3 sentences"));

    let bad = dir.path().join("bad.conll");
    std::fs::write(&bad, "1\tno\tO\n2\tintent\tO\n").unwrap();
    let out = sidlab(&["validate", "--kind", "sid", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let out = sidlab(
        &["validate", "--kind", "sid", dir.path().join("absent.conll").to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // Unknown flag / missing required args are clap usage errors.
    let out = sidlab(&["train"], dir.path());
    assert_eq!(out.status.code(), Some(2)); // clap's own usage exit code
    // Bad schedule in the config is a configuration error -> 1.
    write_sid(dir.path(), "train.conll");
    std::fs::write(dir.path().join("run.toml"), CONFIG.replace("\"SID\"", "\"SID→\"")).unwrap();
    let out = sidlab(&["train", "--config", "run.toml", "--out", "out"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_eval_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    write_sid(dir.path(), "train.conll");
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    let out = sidlab(&["train", "--config", "run.toml", "--out", "out"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("out/report.tsv").exists());
    assert!(dir.path().join("out/report.md").exists());
    assert!(dir.path().join("out/model-seed1.json").exists());

    // A second run without --force refuses to overwrite.
    let out = sidlab(&["train", "--config", "run.toml", "--out", "out"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--force"));
    // With --force it succeeds.
    let out = sidlab(&["train", "--config", "run.toml", "--out", "out", "--force"], dir.path());
    assert!(out.status.success());

    // Eval the saved model.
    let out = sidlab(
        &["eval", "--model", "out/model-seed1.json", "--data", "train.conll"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("slot_f1\t"));
    assert!(text.contains("n_sentences\t3"));

    // Delta table against itself: all zeros.
    let out = sidlab(
        &["report", "out/report.tsv", "--baseline", "smoke", "--format", "tsv"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.contains("smoke"));
    assert!(text.contains("+0.0"));

    // Unknown baseline is a usage error.
    let out = sidlab(&["report", "out/report.tsv", "--baseline", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_seed_override_runs_single_seed() {
    let dir = tempfile::tempdir().unwrap();
    write_sid(dir.path(), "train.conll");
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    let out = sidlab(
        &["train", "--config", "run.toml", "--out", "out", "--seed", "9"],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(dir.path().join("out/model-seed9.json").exists());
    assert!(!dir.path().join("out/model-seed1.json").exists());
}

#[test]
fn dist_writes_four_mode_matrices() {
    let dir = tempfile::tempdir().unwrap();
    write_sid(dir.path(), "a.conll");
    write_sid(dir.path(), "b.conll");
    let out = sidlab(
        &["dist", "a=a.conll", "b=b.conll", "--out", "dist"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for mode in [
        "slot_chars_case_sensitive",
        "slot_chars_case_insensitive",
        "sentence_words_case_sensitive",
        "sentence_words_case_insensitive",
    ] {
        let path = dir.path().join(format!("dist/{mode}.tsv"));
        assert!(path.exists(), "{mode} matrix missing");
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(&format!("# mode: {mode}")));
        // Identical corpora: similarity 1 everywhere.
        assert!(text.contains("1.0000"));
    }
    // Re-running without --force refuses.
    let out = sidlab(&["dist", "a=a.conll", "b=b.conll", "--out", "dist"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    // Misaligned corpora are a data error.
    std::fs::write(dir.path().join("short.conll"), "# intent: x\n1\thi\tO\n").unwrap();
    let out = sidlab(
        &["dist", "a=a.conll", "b=short.conll", "--out", "dist2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    // Malformed name=path spec is a usage error.
    let out = sidlab(&["dist", "only-a-path", "--out", "dist3"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn gsinfonce(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsinfonce"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

/// Small toy corpus in a fresh directory (relative paths `toy/...`).
fn toy() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = gsinfonce(
        dir.path(),
        &["make-toy-data", "--sentences", "200", "--clusters", "10", "--pairs", "40", "--out", "toy"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    dir
}

const SMALL_TRAIN: &[&str] = &[
    "--corpus",
    "toy/corpus.txt",
    "--batch-size",
    "16",
    "--steps",
    "20",
    "--dim",
    "16",
    "--eval-every",
    "5",
];

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden").join(name)
}

#[test]
fn train_without_corpus_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsinfonce(dir.path(), &["train", "--steps", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("--corpus"), "{}", stderr(&out));
}

#[test]
fn train_with_unreadable_corpus_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsinfonce(dir.path(), &["train", "--corpus", "missing.txt", "--steps", "1"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    // The manifest is written before anything is computed.
    assert!(dir.path().join("out/manifest.txt").exists());
}

#[test]
fn train_rejects_invalid_values() {
    let dir = toy();
    for args in [
        &["train", "--corpus", "toy/corpus.txt", "--lr", "0"][..],
        &["train", "--corpus", "toy/corpus.txt", "--batch-size", "x"][..],
        &["train", "--corpus", "toy/corpus.txt", "--objective", "adam"][..],
        &["train", "--corpus", "toy/corpus.txt", "--top-k", "3"][..],
        &["train", "--corpus", "toy/corpus.txt", "--batch-size", "1000", "--steps", "1"][..],
    ] {
        let out = gsinfonce(dir.path(), args);
        assert_eq!(code(&out), 2, "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn one_step_writes_checkpoint_logs_and_manifest() {
    let dir = toy();
    let out = gsinfonce(dir.path(), &["train", "--corpus", "toy/corpus.txt", "--steps", "1", "--sts", "toy/val.tsv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run = dir.path().join("out");
    assert!(run.join("checkpoint.bin").exists());
    assert_eq!(read(run.join("train_loss.csv")).lines().count(), 2);
    assert_eq!(read(run.join("train_eval.csv")).lines().count(), 2);
    let manifest = read(run.join("manifest.txt"));
    assert!(manifest.contains("command = train\n"));
    assert!(manifest.contains("batch_size = 64\n"));
    assert!(manifest.contains("resolved.noise_count = 192\n"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("noise matrix 192x64"));
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = toy();
    let mut args = vec!["train", "--sts", "toy/val.tsv", "--sts", "toy/test.tsv"];
    args.extend_from_slice(SMALL_TRAIN);
    let a: Vec<&str> = args.iter().copied().chain(["--out", "a"]).collect();
    let b: Vec<&str> = args.iter().copied().chain(["--out", "b"]).collect();
    assert_eq!(code(&gsinfonce(dir.path(), &a)), 0);
    assert_eq!(code(&gsinfonce(dir.path(), &b)), 0);
    for f in ["checkpoint.bin", "train_loss.csv", "train_eval.csv", "eval.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn rerunning_from_manifest_reproduces_outputs() {
    let dir = toy();
    let mut args = vec!["train", "--sts", "toy/val.tsv", "--lr", "0.03"];
    args.extend_from_slice(SMALL_TRAIN);
    assert_eq!(code(&gsinfonce(dir.path(), &args)), 0);
    let run = dir.path().join("out");
    let first: Vec<Vec<u8>> = ["checkpoint.bin", "train_loss.csv", "manifest.txt"]
        .iter()
        .map(|f| fs::read(run.join(f)).unwrap())
        .collect();
    fs::copy(run.join("manifest.txt"), dir.path().join("saved.txt")).unwrap();
    fs::remove_dir_all(&run).unwrap();
    let out = gsinfonce(dir.path(), &["train", "--config", "saved.txt"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for (f, bytes) in ["checkpoint.bin", "train_loss.csv", "manifest.txt"].iter().zip(&first) {
        assert_eq!(&fs::read(run.join(f)).unwrap(), bytes, "{f}");
    }
    // A manifest belongs to its command.
    assert_eq!(code(&gsinfonce(dir.path(), &["probe", "--config", "saved.txt"])), 2);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = toy();
    fs::write(
        dir.path().join("cfg.txt"),
        "corpus = toy/corpus.txt\nbatch-size = 16\nsteps = 4\ndim = 8\n",
    )
    .unwrap();
    let out = gsinfonce(dir.path(), &["train", "--config", "cfg.txt", "--steps", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let manifest = read(dir.path().join("out/manifest.txt"));
    assert!(manifest.contains("steps = 2\n") && manifest.contains("batch_size = 16\n"));
    assert!(manifest.contains("resolved.noise_count = 48\n"));
    assert_eq!(read(dir.path().join("out/train_loss.csv")).lines().count(), 3);
}

#[test]
fn eval_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsinfonce(
        dir.path(),
        &[
            "eval",
            "--checkpoint",
            fixture("checkpoint.bin").to_str().unwrap(),
            "--corpus",
            fixture("corpus.txt").to_str().unwrap(),
            "--sts",
            fixture("pairs.tsv").to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let expected = fs::read(fixture("expected_eval.csv")).unwrap();
    assert_eq!(out.stdout, expected);
    assert_eq!(fs::read(dir.path().join("out/eval.csv")).unwrap(), expected);
}

#[test]
fn eval_rows_and_average() {
    let dir = toy();
    let mut args = vec!["train", "--out", "run"];
    args.extend_from_slice(SMALL_TRAIN);
    assert_eq!(code(&gsinfonce(dir.path(), &args)), 0);
    let base = ["eval", "--checkpoint", "run/checkpoint.bin", "--corpus", "toy/corpus.txt"];

    let one: Vec<&str> = base.iter().copied().chain(["--sts", "toy/test.tsv"]).collect();
    let out = gsinfonce(dir.path(), &one);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1].split(',').nth(2), rows[2].split(',').nth(2));
    assert!(rows[2].starts_with("Avg.,"));

    let two: Vec<&str> = base
        .iter()
        .copied()
        .chain(["--sts", "toy/val.tsv", "--sts", "toy/test.tsv"])
        .collect();
    let text = String::from_utf8(gsinfonce(dir.path(), &two).stdout).unwrap();
    let values: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 3);
    assert!(((values[0] + values[1]) / 2.0 - values[2]).abs() < 1e-6);
}

#[test]
fn eval_error_codes() {
    let dir = toy();
    let mut args = vec!["train", "--out", "run"];
    args.extend_from_slice(SMALL_TRAIN);
    assert_eq!(code(&gsinfonce(dir.path(), &args)), 0);
    fs::write(dir.path().join("flat.tsv"), "f1 f2\tf3 f4\t1\nf2 f3\tf0 f1\t1\n").unwrap();
    fs::write(dir.path().join("bad.tsv"), "only one field\n").unwrap();
    let base = ["eval", "--checkpoint", "run/checkpoint.bin", "--corpus", "toy/corpus.txt"];
    let with = |extra: &[&'static str]| -> Vec<&str> { base.iter().copied().chain(extra.iter().copied()).collect() };

    assert_eq!(code(&gsinfonce(dir.path(), &with(&["--sts", "flat.tsv"]))), 5);
    assert_eq!(code(&gsinfonce(dir.path(), &with(&["--sts", "bad.tsv"]))), 3);
    assert_eq!(code(&gsinfonce(dir.path(), &with(&["--sts", "nope.tsv"]))), 3);
    assert_eq!(code(&gsinfonce(dir.path(), &with(&[]))), 2);
    let wrong_corpus = ["eval", "--checkpoint", "run/checkpoint.bin", "--corpus", "toy/val.tsv", "--sts", "toy/test.tsv"];
    assert_eq!(code(&gsinfonce(dir.path(), &wrong_corpus)), 2);
}

#[test]
fn probe_row_counts_and_preconditions() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsinfonce(dir.path(), &["probe", "--batch-sizes", "8", "--repeats", "1", "--top-k", "4"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read(dir.path().join("out/probe.csv")).lines().count(), 1 + 4);

    let out = gsinfonce(dir.path(), &["probe", "--top-k", "8", "--batch-sizes", "8"]);
    assert_eq!(code(&out), 2);

    let out = gsinfonce(dir.path(), &["probe", "--repeats", "2", "--svg", "--out", "sweep"]);
    assert_eq!(code(&out), 0);
    assert_eq!(read(dir.path().join("sweep/probe.csv")).lines().count(), 1 + 7 * 4);
    assert!(read(dir.path().join("sweep/probe.svg")).matches("<polyline").count() == 4);
}

#[test]
fn probe_on_a_checkpoint() {
    let dir = toy();
    let mut args = vec!["train", "--out", "run"];
    args.extend_from_slice(SMALL_TRAIN);
    assert_eq!(code(&gsinfonce(dir.path(), &args)), 0);
    let out = gsinfonce(
        dir.path(),
        &[
            "probe", "--source", "checkpoint", "--checkpoint", "run/checkpoint.bin", "--corpus", "toy/corpus.txt",
            "--batch-sizes", "8,16,32", "--repeats", "5",
        ],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read(dir.path().join("out/probe.csv")).lines().count(), 1 + 3 * 4);
    // Pool smaller than the batch.
    let out = gsinfonce(
        dir.path(),
        &[
            "probe", "--source", "checkpoint", "--checkpoint", "run/checkpoint.bin", "--corpus", "toy/corpus.txt",
            "--batch-sizes", "512", "--repeats", "1",
        ],
    );
    assert_eq!(code(&out), 2);
    assert_eq!(code(&gsinfonce(dir.path(), &["probe", "--source", "checkpoint"])), 2);
}

#[test]
fn gradcheck_cases() {
    let dir = tempfile::tempdir().unwrap();
    let ok = |args: &[&str]| {
        let out = gsinfonce(dir.path(), args);
        assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
        String::from_utf8(out.stdout).unwrap()
    };
    ok(&["gradcheck", "--lambda", "0", "--m", "0", "--trials", "20"]);
    let text = ok(&["gradcheck", "--n", "1", "--m", "0", "--trials", "10"]);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert!(row[2].parse::<f64>().unwrap() <= 1e-8, "{text}");
    ok(&["gradcheck"]);

    let out = gsinfonce(dir.path(), &["gradcheck", "--step", "0.5", "--trials", "3"]);
    assert_eq!(code(&out), 6);
    assert!(stderr(&out).contains("seed"), "{}", stderr(&out));
    assert_eq!(code(&gsinfonce(dir.path(), &["gradcheck", "--tau", "0"])), 2);
}

#[test]
fn ablation_zero_leg_matches_plain_infonce_training() {
    let dir = toy();
    let mut ablate = vec![
        "ablate-m", "--sts", "toy/val.tsv", "--sts", "toy/test.tsv", "--multipliers", "0", "--out", "ab",
    ];
    ablate.extend_from_slice(SMALL_TRAIN);
    let out = gsinfonce(dir.path(), &ablate);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = read(dir.path().join("ab/ablation.csv"));
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "multiplier,M,val_spearman,test_spearman");
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("0.000000,0,"));

    let mut train = vec!["train", "--sts", "toy/val.tsv", "--objective", "infonce", "--out", "plain"];
    train.extend_from_slice(SMALL_TRAIN);
    assert_eq!(code(&gsinfonce(dir.path(), &train)), 0);
    for f in ["train_loss.csv", "train_eval.csv"] {
        assert_eq!(read(dir.path().join("ab/m0").join(f)), read(dir.path().join("plain").join(f)), "{f}");
    }
}

#[test]
fn ablation_rows_and_parallel_agreement() {
    let dir = toy();
    let mut base = vec!["ablate-m", "--sts", "toy/val.tsv", "--sts", "toy/test.tsv", "--multipliers", "0,0.5,1.3"];
    base.extend_from_slice(SMALL_TRAIN);
    let seq: Vec<&str> = base.iter().copied().chain(["--out", "seq", "--svg"]).collect();
    let par: Vec<&str> = base.iter().copied().chain(["--out", "par", "--svg", "--parallel"]).collect();
    assert_eq!(code(&gsinfonce(dir.path(), &seq)), 0);
    assert_eq!(code(&gsinfonce(dir.path(), &par)), 0);
    let csv = read(dir.path().join("seq/ablation.csv"));
    let ms: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(ms, vec!["0", "8", "21"]);
    assert_eq!(csv, read(dir.path().join("par/ablation.csv")));
    assert_eq!(read(dir.path().join("seq/ablation.svg")), read(dir.path().join("par/ablation.svg")));

    let one_file = ["ablate-m", "--corpus", "toy/corpus.txt", "--sts", "toy/val.tsv"];
    assert_eq!(code(&gsinfonce(dir.path(), &one_file)), 2);
    let negative = ["ablate-m", "--corpus", "toy/corpus.txt", "--sts", "toy/val.tsv", "--sts", "toy/test.tsv", "--multipliers", "-1"];
    assert_eq!(code(&gsinfonce(dir.path(), &negative)), 2);
}

#[test]
fn toy_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = gsinfonce(dir.path(), &["make-toy-data", "--sentences", "50", "--pairs", "10", "--out", out]);
        assert_eq!(code(&o), 0);
    }
    for f in ["corpus.txt", "train.tsv", "val.tsv", "test.tsv"] {
        assert_eq!(read(dir.path().join("a").join(f)), read(dir.path().join("b").join(f)));
    }
    assert_eq!(read(dir.path().join("a/corpus.txt")).lines().count(), 50);
}

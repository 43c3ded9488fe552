use std::path::Path;
use std::process::{Command, Output};

use whaledet_core::pipeline;
use whaledet_core::synth;
use whaledet_core::{Label, LabeledSet};

const SMALL: &str = "\
n_pos = 6
n_neg = 6
synth_units = 4
synth_bank_clips = 2
synth_bank_clip_s = 3.0
n_iter = 4
n_train = 8
n_test = 4
image_width = 16
image_height = 16
";

fn whaledet(dir: &Path, args: &[&str]) -> Output {
    std::fs::write(dir.join("small.toml"), SMALL).unwrap();
    Command::new(env!("CARGO_BIN_EXE_whaledet"))
        .current_dir(dir)
        .arg("--config")
        .arg("small.toml")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn synth_manifest_is_on_target_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&whaledet(
        d,
        &["synth", "--experiment", "E6", "--snr", "0", "--seed", "7", "--out", "a"],
    ));
    ok(&whaledet(
        d,
        &["synth", "--experiment", "E6", "--snr", "0", "--seed", "7", "--out", "b"],
    ));
    let rows = synth::read_manifest(d.join("a/manifest.csv")).unwrap();
    assert_eq!(rows.len(), 12);
    for r in rows.iter().filter(|r| r.label == Label::Whale) {
        assert!(r.achieved_snr_db.unwrap().abs() <= 0.01);
    }
    assert_eq!(
        std::fs::read(d.join("a/manifest.csv")).unwrap(),
        std::fs::read(d.join("b/manifest.csv")).unwrap()
    );
    assert_eq!(std::fs::read_dir(d.join("a/samples")).unwrap().count(), 12);
    let run = std::fs::read_to_string(d.join("a/run.toml")).unwrap();
    assert!(run.contains("seed = 7"), "{run}");
    assert!(run.contains("snr_values = [0.0]"), "{run}");
}

#[test]
fn missing_bank_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = whaledet(
        dir.path(),
        &[
            "synth",
            "--experiment",
            "E2",
            "--snr",
            "0",
            "--bank",
            "no_bank_here",
            "--out",
            "x",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no_bank_here"));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(whaledet(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        whaledet(dir.path(), &["synth", "--out", "x", "--features", "mfcc"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(whaledet(dir.path(), &["synth", "--out", "x"]).status.code(), Some(1));
    assert_eq!(whaledet(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn featurize_train_predict_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&whaledet(
        d,
        &["synth", "--experiment", "E3", "--snr", "5", "--out", "ds"],
    ));
    ok(&whaledet(d, &["featurize", "--input", "ds", "--out", "f/cnn.bin"]));
    ok(&whaledet(d, &["featurize", "--input", "ds", "--out", "f/cnn2.bin"]));
    ok(&whaledet(
        d,
        &[
            "featurize",
            "--features",
            "spectrogram",
            "--input",
            "ds",
            "--out",
            "f/spec.bin",
        ],
    ));

    let (cnn, ids) = pipeline::read_features(d.join("f/cnn.bin")).unwrap();
    assert_eq!((cnn.len(), cnn.dim()), (12, Some(64)));
    assert_eq!(ids, (0..12).collect::<Vec<_>>());
    assert_eq!(
        std::fs::read(d.join("f/cnn.bin")).unwrap(),
        std::fs::read(d.join("f/cnn2.bin")).unwrap()
    );
    let (spec, _) = pipeline::read_features(d.join("f/spec.bin")).unwrap();
    assert_eq!(spec.dim(), Some(16 * 16));

    ok(&whaledet(d, &["train", "--input", "f/cnn.bin", "--out", "model.txt"]));
    ok(&whaledet(
        d,
        &[
            "predict",
            "--model",
            "model.txt",
            "--input",
            "f/cnn.bin",
            "--out",
            "pred.csv",
        ],
    ));
    let pred = std::fs::read_to_string(d.join("pred.csv")).unwrap();
    assert_eq!(pred.lines().count(), 13);

    let out = whaledet(
        d,
        &[
            "predict",
            "--model",
            "model.txt",
            "--input",
            "f/spec.bin",
            "--out",
            "bad.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("256") && msg.contains("64"), "{msg}");

    ok(&whaledet(
        d,
        &["evaluate", "--input", "f/cnn.bin", "--out", "summary.csv"],
    ));
    let summary = std::fs::read_to_string(d.join("summary.csv")).unwrap();
    assert!(summary.starts_with("n_iter,mean_correct_recognition"));
}

#[test]
fn evaluate_oracle_features_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let labels: Vec<Label> = (0..40).map(|i| Label::from_u8((i % 2) as u8).unwrap()).collect();
    let set = LabeledSet::new(labels.iter().map(|l| vec![l.as_u8() as f64; 4]).collect(), labels);
    pipeline::write_features(d.join("oracle.bin"), &set, &(0..40).collect::<Vec<_>>()).unwrap();
    ok(&whaledet(d, &["evaluate", "--input", "oracle.bin", "--out", "s.csv"]));
    let s = std::fs::read_to_string(d.join("s.csv")).unwrap();
    let row: Vec<&str> = s.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "1.000000");
    assert_eq!(row[3], "0.000000");
}

#[test]
fn non_finite_features_are_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let set = LabeledSet::new(vec![vec![f64::NAN], vec![1.0]], vec![Label::Whale, Label::Noise]);
    pipeline::write_features(d.join("nan.bin"), &set, &[0, 1]).unwrap();
    let out = whaledet(d, &["train", "--input", "nan.bin", "--out", "m.txt"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn sweep_grid_and_thread_independence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sweep = |out: &str, jobs: &str| {
        ok(&whaledet(
            d,
            &[
                "sweep",
                "--features",
                "spectrogram",
                "--seed",
                "3",
                "--jobs",
                jobs,
                "--out",
                out,
            ],
        ));
        std::fs::read_to_string(d.join(out).join("results.csv")).unwrap()
    };
    let a = sweep("s1", "1");
    assert_eq!(a.lines().count(), 31);
    assert_eq!(a, sweep("s3", "3"));
    for e in 1..=6 {
        assert!(d.join(format!("s1/confusion_E{e}.csv")).exists());
    }
    assert!(d.join("s1/run.toml").exists());
}

#[test]
fn compare_emits_paired_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&whaledet(
        d,
        &[
            "compare",
            "--features",
            "spectrogram",
            "--features",
            "cnn",
            "--experiment",
            "E5",
            "--snr",
            "0",
            "--out",
            "cmp",
        ],
    ));
    let table = std::fs::read_to_string(d.join("cmp/comparison.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "experiment_id,snr_db,spectrogram_correct_recognition,spectrogram_false_alarm,cnn_correct_recognition,cnn_false_alarm"
    );
    assert!(lines.next().unwrap().starts_with("E5,0,"));
    assert!(d.join("cmp/results_cnn.csv").exists());
}

#[test]
fn init_network_matches_default_features() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&whaledet(d, &["init-network", "--out", "net.cnnw"]));
    ok(&whaledet(
        d,
        &["synth", "--experiment", "E1", "--snr", "0", "--out", "ds"],
    ));
    ok(&whaledet(d, &["featurize", "--input", "ds", "--out", "default.bin"]));
    ok(&whaledet(
        d,
        &[
            "featurize",
            "--network",
            "net.cnnw",
            "--input",
            "ds",
            "--out",
            "file.bin",
        ],
    ));
    assert_eq!(
        std::fs::read(d.join("default.bin")).unwrap(),
        std::fs::read(d.join("file.bin")).unwrap()
    );

    std::fs::write(d.join("broken.cnnw"), b"CNNW\x01\x00").unwrap();
    let out = whaledet(
        d,
        &[
            "featurize",
            "--network",
            "broken.cnnw",
            "--input",
            "ds",
            "--out",
            "x.bin",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
}

use std::path::Path;
use std::process::{Command, Output};

fn docrel(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_docrel"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const TRAIN: &[&str] = &[
    "train", "--data", "c.json", "--relations", "c.json.relations.tsv", "--out", "m.ck",
    "--epochs", "2", "--lr", "1e-3", "--layers-l", "2", "--lambda1", "1e-4", "--seed", "3",
    "--threshold", "0.5", "--set", "model_dim=16", "--set", "ffn_dim=32", "--set", "num_layers=2",
];

#[test]
fn full_round_trip_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&docrel(d, &["synth", "--out", "c.json", "--num-documents", "6"])), 0);
    assert_eq!(code(&docrel(d, TRAIN)), 0);
    let first = std::fs::read(d.join("m.ck")).unwrap();
    let log = std::fs::read_to_string(d.join("m.ck.loss.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,L_RE,L_Evi^a,Loss"));
    assert_eq!(log.lines().count(), 3);
    assert_eq!(code(&docrel(d, TRAIN)), 0);
    assert_eq!(std::fs::read(d.join("m.ck")).unwrap(), first);

    let predict = ["predict", "--data", "c.json", "--checkpoint", "m.ck", "--out", "p.json", "--workers", "2"];
    assert_eq!(code(&docrel(d, &predict)), 0);
    let preds = std::fs::read(d.join("p.json")).unwrap();
    assert_eq!(code(&docrel(d, &predict)), 0);
    assert_eq!(std::fs::read(d.join("p.json")).unwrap(), preds);

    let eval = docrel(d, &["eval", "--data", "c.json", "--predictions", "p.json", "--out", "r.json"]);
    assert_eq!(code(&eval), 0);
    assert_eq!(String::from_utf8(eval.stdout).unwrap(), std::fs::read_to_string(d.join("r.json")).unwrap());

    let heat = ["heatmap", "--data", "c.json", "--checkpoint", "m.ck", "--out", "hm", "--pairs", "0:1,1:0", "--svg", "--title", "synthetic-0000"];
    assert_eq!(code(&docrel(d, &heat)), 0);
    let mut files: Vec<_> = std::fs::read_dir(d.join("hm")).unwrap().map(|e| e.unwrap().file_name()).collect();
    files.sort();
    assert_eq!(files.len(), 6);
    let csv = std::fs::read_to_string(d.join("hm").join(&files[0])).unwrap();
    assert!(csv.starts_with("token_index,token,feature_value\n"));
}

#[test]
fn failures_map_to_exit_codes_without_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&docrel(d, &["--help"])), 0);
    assert_eq!(code(&docrel(d, &["train", "--bogus"])), 1);
    assert_eq!(code(&docrel(d, &["train", "--data", "missing.json", "--out", "m.ck"])), 2);
    assert!(!d.join("m.ck").exists());

    assert_eq!(code(&docrel(d, &["synth", "--out", "c.json", "--num-documents", "3"])), 0);
    let bad_threshold = ["train", "--data", "c.json", "--out", "m.ck", "--threshold", "1.5"];
    assert_eq!(code(&docrel(d, &bad_threshold)), 1);
    std::fs::write(d.join("broken.json"), "[{").unwrap();
    let bad_eval = ["eval", "--data", "c.json", "--predictions", "broken.json", "--out", "r.json"];
    assert_eq!(code(&docrel(d, &bad_eval)), 2);
    assert!(!d.join("r.json").exists());
    assert!(!d.join("m.ck").exists());
}

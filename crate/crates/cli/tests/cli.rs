//! End-to-end tests of the `evico` binary: exit codes, emitted artifacts,
//! and the resolved-config reproducibility guarantee.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_evico"))
}

fn run(args: &[&str]) -> Output {
    binary().args(args).output().expect("binary runs")
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("evico-cli-e2e").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).expect("temp dir");
    dir
}

fn stderr_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).trim().to_string()
}

/// A dataset/training recipe small enough for an end-to-end run to finish
/// in well under a second.
const TINY: &[&str] = &[
    "--count=10",
    "--height=16",
    "--width=16",
    "--labeled-fraction=0.5",
    "--noise_sigma=0.15",
    "--blur_sigma=0.3",
    "--max-iterations=40",
    "--batch.size=4",
    "--batch.labeled=2",
    "--iters_per_epoch=2",
    "--eval_every=0",
];

#[test]
fn help_lists_commands_keys_and_toggle_roles() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in [
        "gen-data",
        "export-maps",
        "lr0 = 0.1",
        "batch.labeled = 4",
        "loss.uegv",
        "guiding the softmax head",
        "exit codes",
    ] {
        assert!(text.contains(needle), "help is missing '{needle}'");
    }
    // Per-command help also succeeds.
    let out = run(&["train", "--help"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("usage: evico train"));
}

#[test]
fn usage_errors_exit_two_with_one_line() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_line(&out);
    assert!(err.starts_with("error: usage:"), "{err}");
    assert_eq!(err.lines().count(), 1);

    let out = run(&["train", "--warp-speed", "9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).contains("--warp_speed"));

    let out = run(&["eval"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr_line(&out).contains("--checkpoint"));
}

#[test]
fn config_errors_exit_three() {
    let out = run(&["gen-data", "--count", "zero"]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_line(&out);
    assert!(err.starts_with("error: config:"), "{err}");

    let dir = fresh_dir("bad-config");
    let cfg = dir.join("bad.cfg");
    fs::write(&cfg, "lr0 = 0.1\nthis line is wrong\n").unwrap();
    let out = run(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_line(&out).contains("line 2"), "{}", stderr_line(&out));

    // Semantically invalid values are config errors too.
    let out = run(&["gen-data", "--labeled-fraction", "romeo"]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["gen-data", "--labeled-fraction", "1.7"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gen_data_writes_manifest_and_reloads() {
    let dir = fresh_dir("gen-data");
    let out_flag = dir.to_str().unwrap();
    let out = run(&[
        "gen-data",
        "--seed",
        "7",
        "--count",
        "10",
        "--height=16",
        "--width=16",
        "--labeled-fraction",
        "0.2",
        "--out",
        out_flag,
    ]);
    assert!(out.status.success(), "{}", stderr_line(&out));
    assert!(dir.join("manifest").is_file());
    assert!(dir.join("config.resolved").is_file());

    let dataset = evico::synthdata::load(&dir).unwrap();
    assert_eq!(dataset.train.len(), 8);
    assert_eq!(dataset.test.len(), 2);
    assert_eq!(dataset.spec.labeled_fraction, 0.2);
    // ceil(0.2 * 8) = 2 labeled samples.
    assert_eq!(dataset.labeled_indices().len(), 2);
}

#[test]
fn train_writes_artifacts_and_resolved_config_reproduces_bit_exactly() {
    let first = fresh_dir("train-first");
    let mut args = vec!["train"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--out", first.to_str().unwrap()]);
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr_line(&out));
    for artifact in ["loss.csv", "eval.csv", "checkpoint.bin", "config.resolved"] {
        assert!(first.join(artifact).is_file(), "missing {artifact}");
    }
    let loss_a = fs::read(first.join("loss.csv")).unwrap();
    assert!(String::from_utf8_lossy(&loss_a)
        .starts_with("iter,l_ce,l_ece,l_kl,l_uegv,l_uvge,total,lambda_kl,lambda_c,lr"));

    // Re-run purely from the resolved config: byte-identical logs.
    let second = fresh_dir("train-second");
    let resolved = first.join("config.resolved");
    let out = run(&[
        "train",
        "--config",
        resolved.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_line(&out));
    let loss_b = fs::read(second.join("loss.csv")).unwrap();
    assert_eq!(loss_a, loss_b);
    assert_eq!(
        fs::read(first.join("checkpoint.bin")).unwrap(),
        fs::read(second.join("checkpoint.bin")).unwrap()
    );
}

#[test]
fn train_accepts_a_pregenerated_dataset_and_toggle_overrides() {
    let data_dir = fresh_dir("train-data");
    let out = run(&[
        "gen-data",
        "--count=10",
        "--height=16",
        "--width=16",
        "--labeled-fraction=0.5",
        "--out",
        data_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr_line(&out));

    let run_dir = fresh_dir("train-from-data");
    let mut args = vec!["train"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&[
        "--data",
        data_dir.to_str().unwrap(),
        "--loss.uegv=false",
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr_line(&out));
    let resolved = fs::read_to_string(run_dir.join("config.resolved")).unwrap();
    assert!(resolved.contains("loss.uegv = false"));
    assert!(resolved.contains("count = 10"));
}

#[test]
fn eval_and_export_consume_a_checkpoint() {
    let train_dir = fresh_dir("eval-train");
    let mut args = vec!["train"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--out", train_dir.to_str().unwrap()]);
    assert!(run(&args).status.success());
    let ckpt = train_dir.join("checkpoint.bin");

    let eval_dir = fresh_dir("eval-out");
    let mut args = vec!["eval"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&[
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr_line(&out));
    let csv = fs::read_to_string(eval_dir.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("sample_id,dice,jaccard,asd,hd95"));
    assert!(csv.lines().last().unwrap().starts_with("mean,"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("dice"));

    let maps_dir = fresh_dir("maps-out");
    let mut args = vec!["export-maps"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&[
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        maps_dir.to_str().unwrap(),
    ]);
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr_line(&out));
    // Two test samples, three files each.
    let pgms = fs::read_dir(&maps_dir)
        .unwrap()
        .filter(|e| {
            e.as_ref().unwrap().path().extension().is_some_and(|x| x == "pgm")
        })
        .count();
    assert_eq!(pgms, 6);

    // A missing checkpoint is a runtime failure, not usage.
    let out = run(&["eval", "--checkpoint", "/nonexistent/ckpt.bin"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).starts_with("error: runtime:"));
}

#[test]
fn ablate_emits_the_five_row_table() {
    let dir = fresh_dir("ablate-out");
    let mut args = vec!["ablate"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--seeds", "1", "--out", dir.to_str().unwrap()]);
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr_line(&out));
    let table = fs::read_to_string(dir.join("ablation.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0], "setting,labeled,unlabeled,dice,jaccard,asd,hd95");
    assert!(lines[1].starts_with("CE,"));
    assert!(lines[5].starts_with("CE+ENC+UEGV+UVGE,"));
    assert_eq!(String::from_utf8_lossy(&out.stdout), table);
}

#[test]
fn sweep_emits_paired_rows_per_fraction() {
    let dir = fresh_dir("sweep-out");
    let mut args = vec!["sweep"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--fractions", "0.25,0.5", "--out", dir.to_str().unwrap()]);
    let out = run(&args);
    assert!(out.status.success(), "{}", stderr_line(&out));
    let table = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0.25,baseline,"));
    assert!(lines[2].starts_with("0.25,dcnet,"));
    assert!(lines[3].starts_with("0.5,baseline,"));
}

#[test]
fn evico_out_env_var_sets_the_default_root() {
    let root = fresh_dir("env-root");
    let out = binary()
        .args([
            "gen-data",
            "--count=10",
            "--height=16",
            "--width=16",
        ])
        .env("EVICO_OUT", root.to_str().unwrap())
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", stderr_line(&out));
    assert!(root.join("gen-data").join("manifest").is_file());
}

#[test]
fn runs_are_reproducible_across_out_dirs_with_same_seed() {
    // Same config, different output locations: identical eval logs.
    let a = fresh_dir("repro-a");
    let b = fresh_dir("repro-b");
    for dir in [&a, &b] {
        let mut args = vec!["train"];
        args.extend_from_slice(TINY);
        args.extend_from_slice(&["--seed", "11", "--out", dir.to_str().unwrap()]);
        assert!(run(&args).status.success());
    }
    assert_eq!(
        fs::read(a.join("eval.csv")).unwrap(),
        fs::read(b.join("eval.csv")).unwrap()
    );
}

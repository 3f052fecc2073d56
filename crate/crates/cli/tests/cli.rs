use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn treerules(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_treerules"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = treerules(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn team_pipeline_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["generate", "--seed", "3", "-o", "team.csv"]);
    let stderr = treerules(
        dir,
        &[
            "train",
            "--data",
            "team.csv",
            "--coef-reg",
            "0.8",
            "--seed",
            "1",
            "-o",
            "model.csv",
        ],
    )
    .stderr;
    assert!(String::from_utf8_lossy(&stderr).contains("out-of-bag error"));
    ok(
        dir,
        &[
            "extract",
            "--data",
            "team.csv",
            "--model",
            "model.csv",
            "-o",
            "cond.csv",
        ],
    );
    ok(
        dir,
        &[
            "measure",
            "--data",
            "team.csv",
            "--input",
            "cond.csv",
            "-o",
            "rules.csv",
        ],
    );
    ok(
        dir,
        &[
            "prune",
            "--data",
            "team.csv",
            "--input",
            "rules.csv",
            "-o",
            "pruned.csv",
        ],
    );

    let selected = ok(
        dir,
        &["select", "--data", "team.csv", "--input", "pruned.csv"],
    );
    let lines: Vec<&str> = selected.lines().collect();
    assert_eq!(lines[0], "len,freq,err,condition,pred,score");
    assert_eq!(lines.len(), 5, "{selected}");
    for line in &lines[1..] {
        assert!(line.starts_with("2,"), "{line}");
        assert!(
            line.contains("X1 in {") && line.contains("X2 in {"),
            "{line}"
        );
    }

    ok(
        dir,
        &[
            "stel",
            "--data",
            "team.csv",
            "--input",
            "pruned.csv",
            "-o",
            "list.csv",
        ],
    );
    let list = fs::read_to_string(dir.join("list.csv")).unwrap();
    assert_eq!(list.lines().count(), 4, "{list}");
    assert!(
        list.lines().last().unwrap().ends_with(",TRUE,lose"),
        "{list}"
    );

    let pred = ok(
        dir,
        &[
            "predict", "--train", "team.csv", "--model", "list.csv", "--data", "team.csv",
        ],
    );
    let data = fs::read_to_string(dir.join("team.csv")).unwrap();
    let truth: Vec<&str> = data
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    let got: Vec<&str> = pred.lines().skip(1).collect();
    assert_eq!(got, truth);

    let mined = ok(
        dir,
        &[
            "mine",
            "--data",
            "team.csv",
            "--input",
            "rules.csv",
            "--min-items",
            "2",
            "--top",
            "5",
        ],
    );
    assert_eq!(mined.lines().next(), Some("len,sup,conf,condition,pred"));
    assert_eq!(mined.lines().count(), 6);
    assert!(mined.lines().skip(1).all(|l| l.starts_with("2,")));
}

#[test]
fn extract_leaf_rules_and_pretty_output() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["generate", "--n", "40", "-o", "team.csv"]);
    ok(
        dir,
        &[
            "train",
            "--data",
            "team.csv",
            "--trees",
            "3",
            "-o",
            "model.csv",
        ],
    );
    let leaves = ok(
        dir,
        &[
            "extract",
            "--data",
            "team.csv",
            "--model",
            "model.csv",
            "--leaf-rules",
        ],
    );
    assert!(leaves.starts_with("len,freq,err,condition,pred\n"));
    let pretty = ok(
        dir,
        &[
            "--format",
            "pretty",
            "extract",
            "--data",
            "team.csv",
            "--model",
            "model.csv",
            "--max-depth",
            "1",
        ],
    );
    assert_eq!(pretty.lines().collect::<Vec<_>>(), vec!["TRUE"; 3]);
}

#[test]
fn config_file_supplies_data_and_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["generate", "--n", "60", "-o", "team.csv"]);
    fs::write(
        dir.join("run.cfg"),
        "# small forest\ndata = team.csv\nn_trees = 2\n",
    )
    .unwrap();
    ok(dir, &["--config", "run.cfg", "train", "-o", "model.csv"]);
    let model = fs::read_to_string(dir.join("model.csv")).unwrap();
    let trees: std::collections::HashSet<&str> = model
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(trees.len(), 2);
}

#[test]
fn bench_reports_runs() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.csv");
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(
        tmp.path(),
        &[
            "bench",
            "--data",
            data.to_str().unwrap(),
            "--runs",
            "2",
            "--trees",
            "20",
        ],
    );
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(
        lines[0],
        "run,seed,stel_error,cart_error,stel_rules,conditions"
    );
    assert_eq!(lines.len(), 3);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(treerules(dir, &["--help"]).status.code(), Some(0));
    assert_eq!(treerules(dir, &["--version"]).status.code(), Some(0));
    assert_eq!(treerules(dir, &["no-such-command"]).status.code(), Some(1));
    // Missing --data is a usage error.
    assert_eq!(treerules(dir, &["train"]).status.code(), Some(1));
    ok(dir, &["generate", "--n", "30", "-o", "team.csv"]);
    ok(
        dir,
        &[
            "train",
            "--data",
            "team.csv",
            "--trees",
            "2",
            "-o",
            "model.csv",
        ],
    );
    let bad_depth = treerules(
        dir,
        &[
            "extract",
            "--data",
            "team.csv",
            "--model",
            "model.csv",
            "--max-depth",
            "0",
        ],
    );
    assert_eq!(bad_depth.status.code(), Some(1));
    let bad_mode = [
        "prune", "--data", "team.csv", "--input", "x.csv", "--mode", "half",
    ];
    assert_eq!(treerules(dir, &bad_mode).status.code(), Some(1));
    // Unreadable or malformed inputs are data errors.
    let missing_input = ["prune", "--data", "team.csv", "--input", "x.csv"];
    assert_eq!(treerules(dir, &missing_input).status.code(), Some(2));
    assert_eq!(
        treerules(dir, &["train", "--data", "missing.csv"])
            .status
            .code(),
        Some(2)
    );
    fs::write(
        dir.join("bad.csv"),
        "len,freq,err,condition,pred\n1,0.5,0,X1 in {Q},win\n",
    )
    .unwrap();
    let bad = treerules(dir, &["stel", "--data", "team.csv", "--input", "bad.csv"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));
}

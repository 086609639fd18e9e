use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn relmem(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relmem"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, out: &Path) -> String {
    let path = dir.join("config.json");
    let text = format!(
        r#"{{"train_per_class": 30, "test_per_class": 10, "tasks": 2, "test_samples": 3,
            "methods": ["gcl", "er", "finetune"], "seeds": [1, 2], "out": {:?}}}"#,
        out.to_str().unwrap()
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_identical_artifacts_twice() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let config = write_config(tmp.path(), &a);
    for out in [&a, &b] {
        let o = relmem(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    for expected in [
        "results.csv",
        "r_gcl_seed1.csv",
        "steps_er_seed2.csv",
        "memory_gcl_seed1.bin",
        "graph_gcl_seed2.csv",
    ] {
        assert!(
            names.iter().any(|n| n == expected),
            "missing {expected} in {names:?}"
        );
    }
    for n in &names {
        assert_eq!(
            fs::read(a.join(n)).unwrap(),
            fs::read(b.join(n)).unwrap(),
            "{n} differs"
        );
    }
    let results = fs::read_to_string(a.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 7);
}

#[test]
fn overrides_select_one_run() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let config = write_config(tmp.path(), &out);
    let o = relmem(&[
        "run", "--config", &config, "--method", "er", "--seed", "9", "--memory", "7",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 2);
    assert!(results.lines().nth(1).unwrap().starts_with("er,9,"));
}

#[test]
fn configuration_errors_exit_with_status_two() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.json");
    let o = relmem(&["run", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"batch_sise": 10}"#).unwrap();
    let o = relmem(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("batch_sise"));

    let o = relmem(&["run", "--method", "sgd"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn grad_check_passes() {
    let o = relmem(&["grad-check", "--seed", "2"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("max relative error"));
}

#[test]
fn gen_data_then_run_from_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let config = write_config(tmp.path(), &out);
    let data = tmp.path().join("stream.bin");
    let o = relmem(&[
        "gen-data",
        "--config",
        &config,
        "--file",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = relmem(&[
        "run",
        "--config",
        &config,
        "--method",
        "finetune",
        "--data",
        data.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn graph_dump_and_summarize() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let config = write_config(tmp.path(), &out);
    assert!(relmem(&["run", "--config", &config]).status.success());

    let o = relmem(&[
        "graph-dump",
        out.join("memory_gcl_seed1.bin").to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv.lines().count(), 51);

    let o = relmem(&["summarize", out.to_str().unwrap()]);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(
        stdout.lines().next(),
        Some("method,runs,acc_mean,acc_std,fgt_mean,fgt_std")
    );
    assert_eq!(stdout.lines().count(), 4);
    assert!(out.join("summary.csv").exists());

    let o = relmem(&["summarize", tmp.path().join("empty").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

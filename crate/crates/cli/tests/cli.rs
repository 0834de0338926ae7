use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_beamtwin");

/// A configuration small enough for every command to finish in seconds.
fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "s_list": [3, 11],
        "seeds": [4],
        "train_samples": 80,
        "test_samples": 20,
        "train": { "epochs": 2, "batch_size": 32, "learning_rate": 0.001, "seed": 0 },
        "fine_tune": { "epochs": 2, "batch_size": 32, "learning_rate": 0.0001, "seed": 0 },
        "s": 3,
        "eval_positions": 2,
        "gbo_starts": [2, 3],
        "ga": { "kind": "ga", "ga": { "population": 8, "generations": 3 } },
        "gbo": { "kind": "gbo", "gbo": { "starts": 3 } }
    });
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run_ok(cmd: &str, config: &Path, out: &Path) -> serde_json::Value {
    let o = run(&[cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("JSON summary on stdout")
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn every_command_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let commands = ["gen-dataset", "train", "finetune", "loo-eval", "optimize", "bench-interp", "bench-budget", "heatmap", "sinr-mismatch"];
    for cmd in commands {
        let a = tmp.path().join(format!("{cmd}-a"));
        let b = tmp.path().join(format!("{cmd}-b"));
        let sa = run_ok(cmd, &cfg, &a);
        let sb = run_ok(cmd, &cfg, &b);
        assert_eq!(sa, sb, "{cmd} summary differs");
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        assert!(!fa.is_empty(), "{cmd} wrote no CSV");
        assert_eq!(fa, fb, "{cmd} CSV output differs between runs");
    }
}

#[test]
fn command_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("o");

    let s = run_ok("train", &cfg, &out);
    assert_eq!(s["mean_rmse_m"].as_array().unwrap().len(), 2);
    assert!(out.join("model_s3_seed4.json").is_file() && out.join("model_s11_seed4.json").is_file());
    let rmse = std::fs::read_to_string(out.join("rmse_vs_s.csv")).unwrap();
    assert_eq!(rmse.lines().next(), Some("s,seed,rmse_m"));
    assert!(std::fs::read_to_string(out.join("rmse_vs_s.svg")).unwrap().contains("<!-- provenance:"));

    let s = run_ok("finetune", &cfg, &out);
    assert_eq!(s["frozen_layers_identical"], true);

    let s = run_ok("optimize", &cfg, &out);
    assert_eq!(s["real_measurements"], 3);

    let s = run_ok("heatmap", &cfg, &out);
    let h = std::fs::read_to_string(out.join("heatmap.csv")).unwrap();
    assert_eq!(h.lines().count(), 1 + 2 * 63);
    assert!(s["pearson"].as_f64().is_some());

    let s = run_ok("sinr-mismatch", &cfg, &out);
    assert_eq!(s["points"], 2 * 20);
}

#[test]
fn overrides_on_the_command_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("o");
    let o = run(&["gen-dataset", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "9", "--s", "5,7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for s in [5, 7] {
        let p = out.join(format!("dataset_s{s}_seed9.csv"));
        let header = std::fs::read_to_string(&p).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header.split(',').filter(|c| c.starts_with("sinr_db_")).count(), s);
        assert!(p.with_extension("json").is_file());
    }

    let scene = tmp.path().join("scene.json");
    beamtwin::scene::Scene::reference().save(&scene).unwrap();
    let o = run(&["gen-dataset", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--scene", scene.to_str().unwrap(), "--s", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

fn error_of(o: &Output) -> serde_json::Value {
    assert!(!o.status.success());
    serde_json::from_slice(&o.stderr).expect("JSON error on stderr")
}

#[test]
fn failures_report_json_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();

    let e = error_of(&run(&["train", "--config", cfg.to_str().unwrap(), "--out", out, "--s", "64"]));
    assert_eq!(e["error"], "subset_out_of_range");

    let e = error_of(&run(&["train", "--config", "/nonexistent/config.json", "--out", out]));
    assert_eq!(e["error"], "invalid_config");

    let e = error_of(&run(&["heatmap", "--config", cfg.to_str().unwrap(), "--scene", "/nonexistent/scene.json", "--out", out]));
    assert_eq!(e["error"], "invalid_config");

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let e = error_of(&run(&["train", "--config", bad.to_str().unwrap(), "--out", out]));
    assert_eq!(e["error"], "json");

    let o = run(&["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_of(&o)["error"], "usage");

    let o = run(&["train", "--seed", "abc"]);
    assert_eq!(error_of(&o)["error"], "usage");
}

#[test]
fn help_exits_zero() {
    let o = run(&["--help"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("bench-budget"));
}

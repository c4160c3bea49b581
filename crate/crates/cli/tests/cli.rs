use std::path::Path;
use std::process::{Command, Output};

use bosc::data::{Preset, SplitCounts};
use bosc_cli::config::ExperimentConfig;

fn bosc(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bosc"))
        .args(args)
        .env("BOSC_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn tiny_config(root: &Path) -> std::path::PathBuf {
    let mut cfg = ExperimentConfig::default();
    let mut synth = Preset::S1Analog.config(3);
    synth.shape = [3, 8, 8];
    synth.counts = SplitCounts {
        train: 8,
        val: 3,
        test: 3,
        out_of_set_test: 3,
    };
    cfg.dataset.synth = Some(synth);
    cfg.model.conv1 = 2;
    cfg.model.conv2 = 2;
    cfg.model.hidden = 4;
    cfg.train.epochs = 2;
    cfg.train.batch_size = 20;
    cfg.train.augment.jpeg_prob = 0.0;
    let path = root.join("tiny.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bosc(dir.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(bosc(dir.path(), &["--version"]).status.code(), Some(0));
    assert_eq!(bosc(dir.path(), &["train", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &[][..],
        &["frobnicate"],
        &["train", "--mode", "oracle"],
        &["eval", "--run", "x", "--scores", "best"],
        &["eval", "--run", "x", "--robustness", "blur"],
        &["eval", "--run", "x", "--robustness", "blur=-1"],
        &["gen-data", "--preset", "s4-analog"],
        &["train", "--seed", "minus-one"],
    ] {
        let out = bosc(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn bad_config_exits_one_and_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[train]\nepochs = 0\n").unwrap();
    let out = bosc(dir.path(), &["train", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));
    let out = bosc(dir.path(), &["train", "--config", "missing.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("runs/empty");
    std::fs::create_dir_all(&run).unwrap();
    std::fs::write(run.join("config.toml"), "").unwrap();
    let out = bosc(dir.path(), &["eval", "--run", "runs/empty"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.ckpt"));
    let out = bosc(dir.path(), &["report", "runs/empty"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_data_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let out = bosc(dir.path(), &["gen-data", "--config", cfg.to_str().unwrap(), "--out", "d"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = bosc::data::read_manifest(&dir.path().join("d")).unwrap();
    assert_eq!(manifest.num_classes(), 5);
}

#[test]
fn train_eval_report_pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    for name in ["a", "b"] {
        let out = bosc(dir.path(), &["train", "--config", cfg, "--seed", "5", "--name", name]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let out = bosc(dir.path(), &["eval", "--run", &format!("runs/{name}"), "--scores", "all", "--fpr", "0.1"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let runs = dir.path().join("runs");
    for file in ["model.ckpt", "train_report.toml", "epochs.csv", "config.toml", "eval/summary.csv", "eval/scores_cls-m.csv"] {
        let a = std::fs::read(runs.join("a").join(file)).unwrap();
        let b = std::fs::read(runs.join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    let summary = std::fs::read_to_string(runs.join("a/eval/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 6);

    let out = bosc(dir.path(), &["eval", "--run", "runs/a", "--robustness", "brightness=1.2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(runs.join("a/eval-brightness-1.2/summary.csv").exists());

    let out = bosc(dir.path(), &["report", "runs/a", "runs/missing", "--out", "rep/table"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let table = std::fs::read_to_string(dir.path().join("rep/table.csv")).unwrap();
    assert!(table.starts_with("condition,method,score,custom-"));
    assert!(table.lines().any(|l| l.starts_with("brightness-1.2,bosc,cls-m,")));
    assert!(dir.path().join("rep/table.md").exists());
    assert!(dir.path().join("rep/table_curves.csv").exists());
}

#[test]
fn mismatched_dataset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    assert_eq!(bosc(dir.path(), &["gen-data", "--config", cfg, "--seed", "9"]).status.code(), Some(0));
    let out = bosc(dir.path(), &["train", "--config", cfg]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fuzz_seed_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/experiment_config");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 3);
}

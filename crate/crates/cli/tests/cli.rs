use std::path::Path;
use std::process::{Command, Output};

fn fedgrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedgrl"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

const TINY: &str = r#"
preset = "desk"

[experiment]
num_split_seeds = 2
baselines = ["Fed-Self-Freeze", "No-Fed-Sup", "Fed-Self-Finetune"]

[synth]
block_size = 15

[model]
hidden = 8
predictor_hidden = 16

[fed.self]
rounds = 3
warmup_rounds = 1

[fed.sup]
rounds = 3

[eval]
finetune_steps = 5
"#;

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("cfg.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn unknown_config_key_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[model]\nhiden = 4\n");
    let out = fedgrl(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hiden"));
}

#[test]
fn bad_preset_exits_with_2() {
    assert_eq!(fedgrl(&["run", "--preset", "huge"]).status.code(), Some(2));
}

#[test]
fn tiny_run_writes_results_and_report_merges_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out_dir = dir.path().join("run");
    let out = fedgrl(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("| Fed-Self-Freeze |"));

    let results = out_dir.join("results").join("results.csv");
    let text = std::fs::read_to_string(&results).unwrap();
    // 6 clients x 3 baselines x 2 seeds plus the header
    assert_eq!(text.lines().count(), 1 + 6 * 3 * 2);
    assert!(text.starts_with("client,baseline,seed,split,f1_micro,selected_strength_or_steps"));
    assert!(out_dir.join("logs").join("config.txt").exists());

    let merged = dir.path().join("merged");
    let out = fedgrl(&[
        "report",
        "--out",
        merged.to_str().unwrap(),
        results.to_str().unwrap(),
        results.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(merged.join("results.csv")).unwrap().lines().count(), 1 + 36);
    assert!(merged.join("summary.md").exists() && merged.join("gains.csv").exists());
}

#[test]
fn gen_synth_writes_six_bundles() {
    let dir = tempfile::tempdir().unwrap();
    let out = fedgrl(&["gen-synth", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let count = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(count, 6);
}

#[test]
fn convert_twitch_without_files_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = fedgrl(&["convert-twitch", "--raw", dir.path().to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn shipped_configs_load() {
    use fedgrl_core::config::{DataSource, ExperimentConfig, Preset};
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let desk = ExperimentConfig::load(&root.join("desk.toml"), None).unwrap();
    let mut preset = ExperimentConfig::preset(Preset::Desk);
    preset.out_dir = desk.out_dir.clone();
    assert_eq!(desk, preset);
    let twitch = ExperimentConfig::load(&root.join("twitch.toml"), None).unwrap();
    assert_eq!(twitch.self_budget.rounds, 10_000);
    match &twitch.data {
        DataSource::Bundles(dirs) => assert_eq!(dirs.len(), 6),
        other => panic!("unexpected data source {other:?}"),
    }
}

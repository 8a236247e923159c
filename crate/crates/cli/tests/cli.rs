//! End-to-end tests against the built binary: help surface, exit codes,
//! artifact layout, and rerun determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dpdsyn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dpdsyn"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    dpdsyn()
        .args(args)
        .current_dir(dir)
        .env_remove("DPDSYN_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn sample_csv(dir: &Path, rows: u32, seed: u64) -> PathBuf {
    let path = dir.join("census.csv");
    let out = run(
        &[
            "sample-data",
            "--rows",
            &rows.to_string(),
            "--seed",
            &seed.to_string(),
            "--out",
            path.to_str().unwrap(),
        ],
        dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    path
}

#[test]
fn help_matches_the_golden_file() {
    let out = dpdsyn().arg("--help").output().unwrap();
    assert!(out.status.success());
    let expected = include_str!("golden/help.txt");
    assert_eq!(String::from_utf8_lossy(&out.stdout), expected);
}

#[test]
fn subcommand_help_matches_the_golden_file() {
    // every subcommand and every flag, golden-tested in one document
    let mut all = String::from_utf8(dpdsyn().arg("--help").output().unwrap().stdout).unwrap();
    for sub in [
        "infer-schema",
        "train",
        "synth",
        "eval",
        "bench",
        "scale",
        "accountant",
        "pipeline",
        "sample-data",
    ] {
        all.push_str(&format!("════ dpdsyn {sub} ════\n"));
        let out = dpdsyn().args([sub, "--help"]).output().unwrap();
        assert!(out.status.success());
        all.push_str(&String::from_utf8(out.stdout).unwrap());
    }
    let expected = include_str!("golden/help_all.txt");
    assert_eq!(all, expected);
}

#[test]
fn every_subcommand_is_listed_in_help() {
    let out = dpdsyn().arg("--help").output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    for sub in [
        "infer-schema",
        "train",
        "synth",
        "eval",
        "bench",
        "scale",
        "accountant",
        "pipeline",
        "sample-data",
    ] {
        assert!(text.contains(sub), "help does not list {sub}");
    }
}

#[test]
fn missing_dataset_exits_with_the_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["infer-schema", "--csv", "does_not_exist.csv"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unknown_config_key_exits_with_the_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(dir.path(), 600, 1);
    let config = dir.path().join("run.json");
    std::fs::write(
        &config,
        format!(
            r#"{{"dataset": "{}", "epsilon": 3.0, "no_such_key": 1}}"#,
            csv.display()
        ),
    )
    .unwrap();
    let out = run(
        &["pipeline", "--config", config.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(stderr.contains("config"), "stderr: {stderr}");
}

#[test]
fn infeasible_budget_exits_with_code_six() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "accountant",
            "--n",
            "10000",
            "--batch-size",
            "100",
            "--epochs",
            "10",
            "--epsilon",
            "0.0001",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(6));
}

#[test]
fn accountant_requires_exactly_one_direction() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "accountant",
            "--n",
            "100",
            "--batch-size",
            "10",
            "--epochs",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn accountant_round_trips_between_z_and_epsilon() {
    let dir = tempfile::tempdir().unwrap();
    let base = [
        "accountant",
        "--n",
        "10000",
        "--batch-size",
        "100",
        "--epochs",
        "10",
    ];
    let mut fwd = base.to_vec();
    fwd.extend(["--epsilon", "3"]);
    let out = run(&fwd, dir.path());
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let z = report["z"].as_f64().unwrap();
    assert!(report["epsilon"].as_f64().unwrap() <= 3.0);
    assert_eq!(report["steps"].as_u64().unwrap(), 1000);

    let z_str = z.to_string();
    let mut back = base.to_vec();
    back.extend(["--z", &z_str]);
    let out = run(&back, dir.path());
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["epsilon"].as_f64().unwrap() <= 3.0);
}

#[test]
fn inferred_schema_counts_census_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(dir.path(), 800, 3);
    let schema_path = dir.path().join("schema.json");
    let out = run(
        &[
            "infer-schema",
            "--csv",
            csv.to_str().unwrap(),
            "--out",
            schema_path.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let schema: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&schema_path).unwrap()).unwrap();
    let attrs = schema["attributes"].as_array().unwrap();
    assert_eq!(attrs.len(), 13);
    let cats = attrs
        .iter()
        .filter(|a| a["kind"].as_str() == Some("categorical"))
        .count();
    assert_eq!(cats, 7);
    assert_eq!(attrs.len() - cats, 6);
    assert_eq!(schema["label"]["kind"].as_str(), Some("categorical"));
}

#[test]
fn emitted_schema_is_reconsumed_bit_exactly() {
    // byte-compare of two runs: infer, then re-infer after loading with the
    // emitted schema as the hint
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(dir.path(), 500, 9);
    let s1 = dir.path().join("s1.json");
    let s2 = dir.path().join("s2.json");
    assert!(run(
        &[
            "infer-schema",
            "--csv",
            csv.to_str().unwrap(),
            "--out",
            s1.to_str().unwrap()
        ],
        dir.path()
    )
    .status
    .success());
    assert!(run(
        &[
            "infer-schema",
            "--csv",
            csv.to_str().unwrap(),
            "--out",
            s2.to_str().unwrap()
        ],
        dir.path()
    )
    .status
    .success());
    assert_eq!(std::fs::read(&s1).unwrap(), std::fs::read(&s2).unwrap());
}

fn small_run_config(dir: &Path, csv: &Path, epsilon: f64, out_dir: &str) -> PathBuf {
    let config = dir.join(format!("run_{out_dir}.json"));
    std::fs::write(
        &config,
        format!(
            r#"{{
  "dataset": "{}",
  "epsilon": {epsilon},
  "seed": 11,
  "output_dir": "{out_dir}",
  "trainer": {{ "hidden": [16], "batch_size": 128, "epochs": 4 }}
}}
"#,
            csv.display()
        ),
    )
    .unwrap();
    config
}

#[test]
fn pipeline_writes_exactly_four_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(dir.path(), 700, 5);
    let config = small_run_config(dir.path(), &csv, 4.0, "out_a");
    let out = run(
        &["pipeline", "--config", config.to_str().unwrap()],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out_a = dir.path().join("out_a");
    let mut files: Vec<String> = std::fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    files.sort();
    assert_eq!(
        files,
        vec![
            "model.json",
            "provenance.json",
            "report.json",
            "synthetic.csv"
        ]
    );

    // rerun with the identical config, redirected via the environment
    let out = dpdsyn()
        .args(["pipeline", "--config", config.to_str().unwrap()])
        .current_dir(dir.path())
        .env("DPDSYN_OUT_DIR", dir.path().join("out_b"))
        .output()
        .unwrap();
    assert!(out.status.success());
    for f in [
        "model.json",
        "provenance.json",
        "report.json",
        "synthetic.csv",
    ] {
        assert_eq!(
            std::fs::read(out_a.join(f)).unwrap(),
            std::fs::read(dir.path().join("out_b").join(f)).unwrap(),
            "{f} differs between reruns"
        );
    }
}

#[test]
fn halving_epsilon_increases_the_provenance_noise_multiplier() {
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(dir.path(), 700, 5);
    let full = small_run_config(dir.path(), &csv, 4.0, "out_full");
    let half = small_run_config(dir.path(), &csv, 2.0, "out_half");
    assert!(run(
        &["pipeline", "--config", full.to_str().unwrap()],
        dir.path()
    )
    .status
    .success());
    assert!(run(
        &["pipeline", "--config", half.to_str().unwrap()],
        dir.path()
    )
    .status
    .success());
    let z_of = |name: &str| -> f64 {
        let text = std::fs::read_to_string(dir.path().join(name).join("provenance.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["accountant"]["z"].as_f64().unwrap()
    };
    assert!(z_of("out_half") > z_of("out_full"));
}

#[test]
fn synth_and_eval_compose_from_a_saved_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(dir.path(), 700, 5);
    let out = run(
        &[
            "train",
            "--csv",
            csv.to_str().unwrap(),
            "--epsilon",
            "4",
            "--seed",
            "11",
            "--out-dir",
            "trained",
            "--hidden",
            "16",
            "--batch-size",
            "128",
            "--epochs",
            "4",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("trained/model.json").exists());
    assert!(dir.path().join("trained/train_provenance.json").exists());

    let synth_csv = dir.path().join("synthetic.csv");
    let out = run(
        &[
            "synth",
            "--csv",
            csv.to_str().unwrap(),
            "--model",
            "trained/model.json",
            "--seed",
            "11",
            "--out",
            synth_csv.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("synthetic.csv.provenance.json").exists());

    // synthetic CSV keeps the original header
    let original_header = std::fs::read_to_string(&csv)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let synth_header = std::fs::read_to_string(&synth_csv)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(original_header, synth_header);

    let out = run(
        &[
            "eval",
            "--synthetic",
            synth_csv.to_str().unwrap(),
            "--test",
            csv.to_str().unwrap(),
            "--kinds",
            "mlp",
            "--seed",
            "3",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let acc = reports[0]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

#[test]
fn bench_emits_report_and_summary_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = sample_csv(dir.path(), 700, 5);
    let out = run(
        &[
            "bench",
            "--csv",
            csv.to_str().unwrap(),
            "--epsilon",
            "4",
            "--repeats",
            "1",
            "--seed",
            "11",
            "--kinds",
            "mlp",
            "--out-dir",
            "bench_out",
            "--no-runtime",
            "--hidden",
            "16",
            "--batch-size",
            "128",
            "--epochs",
            "4",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(table.starts_with("method,mlp_acc,mlp_f1"));
    assert!(table.contains("np_baseline,"));
    assert!(table.contains("dpdsyn,"));
    let report_text = std::fs::read_to_string(dir.path().join("bench_out/report.json")).unwrap();
    let reports: serde_json::Value = serde_json::from_str(&report_text).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 2);
    assert!(dir.path().join("bench_out/summary.csv").exists());
}

#[test]
fn sample_data_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = sample_csv(dir.path(), 300, 21);
    let b_path = dir.path().join("b.csv");
    let out = run(
        &[
            "sample-data",
            "--rows",
            "300",
            "--seed",
            "21",
            "--out",
            b_path.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b_path).unwrap());
}

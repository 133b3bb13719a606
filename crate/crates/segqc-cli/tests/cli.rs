//! End-to-end tests of the `segqc` binary: degrade -> synth -> train ->
//! score -> eval -> select -> benchmark, plus exit-code behavior.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use segqc::grid::Grid3;
use segqc::volume::{write_volume, LabeledVolume};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_segqc"))
}

fn make_volume(id: &str, shift: usize) -> LabeledVolume {
    let (nx, ny, nz) = (14, 14, 10);
    let mut image = Grid3::filled(nx, ny, nz, 0i16);
    let mut gt = Grid3::filled(nx, ny, nz, 0u16);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                image.set(x, y, z, ((x * 23 + y * 7 + z * 11 + shift * 31) as i32 % 390 - 190) as i16);
                if (2..7).contains(&x) && (2..7).contains(&y) && (1..9).contains(&z) {
                    gt.set(x, y, z, 1);
                }
                if (8..12).contains(&x) && (8..12).contains(&y) && (2..8).contains(&z) {
                    gt.set(x, y, z, 2);
                }
            }
        }
    }
    let classes = BTreeMap::from([(1u16, "alpha".to_string()), (2u16, "beta".to_string())]);
    LabeledVolume::new(id, image, gt, None, [1.0, 1.0, 1.5], classes).unwrap()
}

fn write_fixture_volumes(dir: &Path, n: usize) -> PathBuf {
    let mut entries = Vec::new();
    for i in 0..n {
        let vol = make_volume(&format!("vol{i}"), i);
        write_volume(&vol, &dir.join(format!("vol{i}.json"))).unwrap();
        entries.push(serde_json::json!({"path": format!("vol{i}.json"), "format": "raw_json"}));
    }
    let manifest = dir.join("manifest.json");
    std::fs::write(&manifest, serde_json::to_vec_pretty(&entries).unwrap()).unwrap();
    manifest
}

/// Degrade each fixture volume into a candidate-bearing copy and return a
/// manifest over the degraded volumes.
fn degraded_manifest(src: &Path, n: usize, out: &Path) -> PathBuf {
    let mut entries = Vec::new();
    for i in 0..n {
        let status = bin()
            .args([
                "--seed",
                &format!("{}", 100 + i),
                "--output-dir",
                out.to_str().unwrap(),
                "degrade",
                "--volume",
                src.join(format!("vol{i}.json")).to_str().unwrap(),
                "--kind",
                "erode",
                "--severity",
                if i % 2 == 0 { "1" } else { "0" },
                "--out-name",
                &format!("cand{i}"),
            ])
            .status()
            .unwrap();
        assert!(status.success(), "degrade failed for vol{i}");
        entries.push(serde_json::json!({"path": format!("cand{i}.json"), "format": "raw_json"}));
    }
    let manifest = out.join("manifest.json");
    std::fs::write(&manifest, serde_json::to_vec_pretty(&entries).unwrap()).unwrap();
    manifest
}

#[test]
fn full_pipeline_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    let manifest = write_fixture_volumes(&data, 3);

    // synth
    let synth_cfg = serde_json::json!({
        "manifest": manifest.to_str().unwrap(),
        "synthesis": {
            "severity_grid": [
                {"kind": "erode", "severities": [0.0, 1.0]},
                {"kind": "dilate", "severities": [1.0]}
            ],
            "target_bins": 5,
            "samples_per_bin": 40,
            "seed": 7,
            "preprocess": {"crop_margin": 4, "output_size": 64}
        }
    });
    let cfg_path = tmp.path().join("synth.json");
    std::fs::write(&cfg_path, serde_json::to_vec_pretty(&synth_cfg).unwrap()).unwrap();
    let synth_out = tmp.path().join("synth");
    let status = bin()
        .args([
            "--seed", "7",
            "--output-dir", synth_out.to_str().unwrap(),
            "synth",
            "--config", cfg_path.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(synth_out.join("dataset.json").exists());
    assert!(synth_out.join("dataset.bin").exists());
    assert!(synth_out.join("synth_log.json").exists());

    // Count oracle: records = sum over volumes/classes of gt slices x 3.
    let index: serde_json::Value =
        serde_json::from_slice(&std::fs::read(synth_out.join("dataset.json")).unwrap()).unwrap();
    let n_records = index["entries"].as_array().unwrap().len();
    // Each fixture volume: class 1 on 8 slices, class 2 on 6 slices.
    assert_eq!(n_records, 3 * (8 + 6) * 3);

    // train (tiny head, few epochs; the pipeline is under test, not SROCC)
    let train_cfg = serde_json::json!({
        "train": {
            "epochs": 3,
            "batch_size": 32,
            "learning_rate": 0.002,
            "weight_decay": 0.01,
            "beta1": 0.9,
            "beta2": 0.999,
            "seed": 5,
            "head": {"d_v": 24, "d_t": 12, "d_h": 6, "attn_hidden": 12}
        },
        "loss": {"lambda": 1.0, "margin_xi": 0.05}
    });
    let tc_path = tmp.path().join("train.json");
    std::fs::write(&tc_path, serde_json::to_vec_pretty(&train_cfg).unwrap()).unwrap();
    let train_out = tmp.path().join("train");
    let status = bin()
        .args([
            "--seed", "5",
            "--output-dir", train_out.to_str().unwrap(),
            "train",
            "--dataset", synth_out.join("dataset.json").to_str().unwrap(),
            "--config", tc_path.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(train_out.join("checkpoint.sqhd").exists());
    let metrics = std::fs::read_to_string(train_out.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,loss_mse,loss_rank,val_lcc,val_srocc,val_map5,val_map10"));
    assert_eq!(metrics.lines().count(), 1 + 3);

    // score over degraded candidates
    let deg_out = tmp.path().join("degraded");
    std::fs::create_dir_all(&deg_out).unwrap();
    let deg_manifest = degraded_manifest(&data, 3, &deg_out);
    let score_out = tmp.path().join("scores");
    let status = bin()
        .args([
            "--seed", "5",
            "--output-dir", score_out.to_str().unwrap(),
            "score",
            "--manifest", deg_manifest.to_str().unwrap(),
            "--checkpoint", train_out.join("checkpoint.sqhd").to_str().unwrap(),
            "--n-slices", "5",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(score_out.join("scores.csv")).unwrap();
    // 3 volumes x 2 candidate classes = 6 rows + header.
    assert_eq!(csv.lines().count(), 7, "{csv}");
    assert!(csv.lines().next().unwrap() == "volume_id,class,predicted_dsc,n_slices,time_s");

    // select from the scores
    let select_out = tmp.path().join("select");
    let status = bin()
        .args([
            "--seed", "5",
            "--output-dir", select_out.to_str().unwrap(),
            "select",
            "--scores", score_out.join("scores.json").to_str().unwrap(),
            "--method", "predicted",
            "--mode", "semisup",
            "--budget", "2",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let selection: serde_json::Value =
        serde_json::from_slice(&std::fs::read(select_out.join("selection.json")).unwrap()).unwrap();
    assert_eq!(selection["ids"].as_array().unwrap().len(), 2);
    assert_eq!(selection["budget"], 2);

    // benchmark with the true-Dice oracle
    let bench_out = tmp.path().join("bench");
    let status = bin()
        .args([
            "--output-dir", bench_out.to_str().unwrap(),
            "benchmark",
            "--manifest", deg_manifest.to_str().unwrap(),
            "--oracle",
            "--n-slices", "5",
            "--name", "fixture",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let report = std::fs::read_to_string(bench_out.join("report.csv")).unwrap();
    assert!(report.contains("mean_dsc"));
    assert!(bench_out.join("report.txt").exists());
    assert!(bench_out.join("report.json").exists());
}

#[test]
fn eval_perfect_predictions_give_unit_correlations() {
    let tmp = tempfile::tempdir().unwrap();
    let mut csv = String::from("sample_id,class_id,predicted,actual\n");
    for i in 0..12 {
        let v = 0.05 + 0.9 * i as f64 / 11.0;
        csv.push_str(&format!("s{i},1,{v:.4},{v:.4}\n"));
    }
    let scores = tmp.path().join("scores.csv");
    std::fs::write(&scores, csv).unwrap();
    let out = tmp.path().join("eval");
    let status = bin()
        .args([
            "--output-dir", out.to_str().unwrap(),
            "eval",
            "--scores", scores.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let eval = std::fs::read_to_string(out.join("eval.csv")).unwrap();
    let mut lines = eval.lines();
    assert_eq!(lines.next().unwrap(), "lcc,srocc,map5,map10");
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "1.000000");
    assert_eq!(row[1], "1.000000");
    assert_eq!(row[2], "1.000000");
    assert_eq!(row[3], "1.000000");
}

#[test]
fn exit_codes_distinguish_usage_and_data_errors() {
    // Usage error: unknown subcommand flag.
    let out = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Usage error: unknown method string.
    let tmp = tempfile::tempdir().unwrap();
    let pool = tmp.path().join("pool.json");
    std::fs::write(&pool, r#"{"records": []}"#).unwrap();
    let out = bin()
        .args([
            "--output-dir", tmp.path().join("o").to_str().unwrap(),
            "select",
            "--pool", pool.to_str().unwrap(),
            "--method", "bogus",
            "--mode", "active",
            "--budget", "0",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));

    // Data error: nonexistent input file.
    let out = bin()
        .args([
            "--output-dir", tmp.path().join("o2").to_str().unwrap(),
            "score",
            "--manifest", "/nonexistent/manifest.json",
            "--checkpoint", "/nonexistent/head.sqhd",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn failed_runs_leave_no_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    // A scores CSV with a bad header makes eval fail after the guard opens.
    let scores = tmp.path().join("bad.csv");
    std::fs::write(&scores, "nope\n1,2,3,4\n").unwrap();
    let out = bin()
        .args([
            "--output-dir", out_dir.to_str().unwrap(),
            "eval",
            "--scores", scores.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.join("eval.csv").exists());
}

#[test]
fn scoring_is_parallel_safe() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    std::fs::create_dir_all(&data).unwrap();
    write_fixture_volumes(&data, 4);
    let deg_out = tmp.path().join("deg");
    std::fs::create_dir_all(&deg_out).unwrap();
    let manifest = degraded_manifest(&data, 4, &deg_out);

    // Train a micro checkpoint first.
    let synth_cfg = serde_json::json!({
        "manifest": manifest.to_str().unwrap(),
        "synthesis": {
            "severity_grid": [{"kind": "erode", "severities": [0.0, 1.0]}],
            "target_bins": 4,
            "samples_per_bin": 10,
            "seed": 1,
            "preprocess": {"crop_margin": 4, "output_size": 48}
        }
    });
    let cfg = tmp.path().join("synth.json");
    std::fs::write(&cfg, serde_json::to_vec(&synth_cfg).unwrap()).unwrap();
    let synth_out = tmp.path().join("synth");
    assert!(bin()
        .args(["--output-dir", synth_out.to_str().unwrap(), "synth", "--config", cfg.to_str().unwrap()])
        .status()
        .unwrap()
        .success());
    let train_cfg = serde_json::json!({
        "train": {
            "epochs": 2, "batch_size": 32, "learning_rate": 0.002,
            "weight_decay": 0.01, "beta1": 0.9, "beta2": 0.999, "seed": 2,
            "head": {"d_v": 16, "d_t": 8, "d_h": 4, "attn_hidden": 8}
        },
        "loss": {"lambda": 1.0, "margin_xi": 0.05}
    });
    let tc = tmp.path().join("train.json");
    std::fs::write(&tc, serde_json::to_vec(&train_cfg).unwrap()).unwrap();
    let train_out = tmp.path().join("train");
    assert!(bin()
        .args([
            "--output-dir", train_out.to_str().unwrap(),
            "train",
            "--dataset", synth_out.join("dataset.json").to_str().unwrap(),
            "--config", tc.to_str().unwrap(),
        ])
        .status()
        .unwrap()
        .success());

    let run_with_jobs = |jobs: &str, dir: &str| -> String {
        let out = tmp.path().join(dir);
        assert!(bin()
            .args([
                "--jobs", jobs,
                "--output-dir", out.to_str().unwrap(),
                "score",
                "--manifest", manifest.to_str().unwrap(),
                "--checkpoint", train_out.join("checkpoint.sqhd").to_str().unwrap(),
                "--n-slices", "4",
            ])
            .status()
            .unwrap()
            .success());
        std::fs::read_to_string(out.join("scores.csv")).unwrap()
    };
    let serial = run_with_jobs("1", "s1");
    let parallel = run_with_jobs("3", "s3");
    // Timing columns differ run to run; the scores must not.
    let strip = |csv: &str| -> Vec<String> {
        csv.lines()
            .map(|l| l.rsplit_once(',').map(|(a, _)| a.to_string()).unwrap_or_else(|| l.to_string()))
            .collect()
    };
    assert_eq!(strip(&serial), strip(&parallel));
}

//! End-to-end tests of the `dfgnn` binary: artifact shapes, hand-counted
//! ingest fidelity, determinism, and the exit-code contract.

use dfgnn::checkpoint::load_checkpoint;
use dfgnn::graph::Sign;
use dfgnn::ingest;
use dfgnn::synth;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dfgnn"))
}

fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy_ratings.csv")
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path
}

/// Plant a dataset on disk the way `ingest` would materialize it.
fn write_planted_dir(dir: &Path, seed: u64) {
    let cfg = synth::PlantedConfig {
        num_users: 40,
        num_items: 40,
        interactions_per_user: 10,
        sign_noise: 0.1,
        seed,
        ..synth::PlantedConfig::default()
    };
    let split = synth::planted_split(&cfg).unwrap();
    ingest::write_split(dir, &split).unwrap();
}

#[test]
fn ingest_matches_hand_counted_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "[ingest]\nmin_interactions = 3\n");
    let out_dir = tmp.path().join("data");
    run_ok(bin()
        .arg("ingest")
        .args(["--input", fixture_path().to_str().unwrap()])
        .args(["--out-dir", out_dir.to_str().unwrap()])
        .args(["--config", config.to_str().unwrap()])
        .args(["--seed", "7"]));
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("stats.json")).unwrap())
            .unwrap();
    // hand count: 20 rows, 2 duplicate pairs collapse (latest timestamp
    // wins), one neutral rating drops, the thin user u5 and item i5 fall
    // to the core filter: 4 users x 4 items, 15 instances, 6 negative
    assert_eq!(stats["num_users"], 4);
    assert_eq!(stats["num_items"], 4);
    assert_eq!(stats["num_instances"], 15);
    assert!((stats["negative_rate"].as_f64().unwrap() - 0.4).abs() < 1e-12);
    let count_lines = |name: &str| {
        std::fs::read_to_string(out_dir.join(name))
            .unwrap()
            .lines()
            .count()
    };
    assert_eq!(count_lines("train.tsv"), 11);
    assert_eq!(count_lines("validation.tsv"), 2);
    assert_eq!(count_lines("test.tsv"), 2);
    assert_eq!(count_lines("user_map.tsv"), 4);
    assert_eq!(count_lines("item_map.tsv"), 4);

    // rerun with the same seed: byte-identical outputs
    let out_dir2 = tmp.path().join("data2");
    run_ok(bin()
        .arg("ingest")
        .args(["--input", fixture_path().to_str().unwrap()])
        .args(["--out-dir", out_dir2.to_str().unwrap()])
        .args(["--config", config.to_str().unwrap()])
        .args(["--seed", "7"]));
    for name in ["train.tsv", "validation.tsv", "test.tsv", "stats.json"] {
        assert_eq!(
            std::fs::read(out_dir.join(name)).unwrap(),
            std::fs::read(out_dir2.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn ingest_empty_result_exits_2() {
    // default min_interactions = 5 filters the whole toy fixture away
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("ingest")
        .args(["--input", fixture_path().to_str().unwrap()])
        .args(["--out-dir", tmp.path().join("x").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn input_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    // missing input file
    let out = bin()
        .arg("ingest")
        .args(["--input", "/nonexistent/ratings.csv"])
        .args(["--out-dir", tmp.path().join("x").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    // unknown flag
    let out = bin().arg("ingest").arg("--bogus-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    // unknown config key
    let config = write_config(tmp.path(), "not_a_key = 1\n");
    let out = bin()
        .arg("ingest")
        .args(["--input", fixture_path().to_str().unwrap()])
        .args(["--out-dir", tmp.path().join("y").to_str().unwrap()])
        .args(["--config", config.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    // malformed row gets a line-numbered message
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, "u1,i1,5\nu2,i2,9\n").unwrap();
    let out = bin()
        .arg("ingest")
        .args(["--input", bad.to_str().unwrap()])
        .args(["--out-dir", tmp.path().join("z").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

fn write_planted_ratings_csv(path: &Path, all_positive: bool) {
    let cfg = synth::PlantedConfig {
        num_users: 30,
        num_items: 30,
        interactions_per_user: 10,
        ..synth::PlantedConfig::default()
    };
    let data = synth::planted_ratings(&cfg);
    let mut rows = String::new();
    for &(u, v, r) in &data.records {
        let rating = if all_positive { r.max(4.0) } else { r };
        rows.push_str(&format!("u{u},i{v},{rating}\n"));
    }
    std::fs::write(path, rows).unwrap();
}

#[test]
fn spectrum_emits_expected_artifact_shapes() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("ratings.csv");
    write_planted_ratings_csv(&input, false);
    let out_dir = tmp.path().join("spec");
    run_ok(bin()
        .arg("spectrum")
        .args(["--input", input.to_str().unwrap()])
        .args(["--out-dir", out_dir.to_str().unwrap()])
        .args(["--seed", "3"]));
    let histogram = std::fs::read_to_string(out_dir.join("histogram.csv")).unwrap();
    let data_rows: Vec<&str> = histogram
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("bucket_low"))
        .collect();
    assert_eq!(data_rows.len(), 10);
    let kernels = std::fs::read_to_string(out_dir.join("kernels.csv")).unwrap();
    let kernel_rows = kernels
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("lambda"))
        .count();
    assert_eq!(kernel_rows, 201);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("spectrum.json")).unwrap())
            .unwrap();
    assert_eq!(summary["negative_degenerate"], false);
    assert!(
        summary["negative_mean_lambda"].as_f64().unwrap()
            > summary["positive_mean_lambda"].as_f64().unwrap()
    );
}

#[test]
fn spectrum_flags_empty_negative_graph() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("ratings.csv");
    write_planted_ratings_csv(&input, true);
    let out_dir = tmp.path().join("spec");
    run_ok(bin()
        .arg("spectrum")
        .args(["--input", input.to_str().unwrap()])
        .args(["--out-dir", out_dir.to_str().unwrap()]));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("spectrum.json")).unwrap())
            .unwrap();
    assert_eq!(summary["negative_degenerate"], true);
    let histogram = std::fs::read_to_string(out_dir.join("histogram.csv")).unwrap();
    for line in histogram
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("bucket_low"))
    {
        let neg_mass: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(neg_mass, 0.0);
    }
}

#[test]
fn train_evaluate_diagnose_roundtrip() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    write_planted_dir(&data_dir, 5);
    let config = write_config(
        tmp.path(),
        "[model]\nembed_dim = 8\n\n[train]\nmax_epochs = 6\npatience = 3\nlr = 0.03\n",
    );
    let run_a = tmp.path().join("run_dfgnn");
    run_ok(bin()
        .arg("train")
        .args(["--data-dir", data_dir.to_str().unwrap()])
        .args(["--out-dir", run_a.to_str().unwrap()])
        .args(["--config", config.to_str().unwrap()])
        .args(["--seed", "5", "--task", "feedback_type", "--variant", "DFGNN"])
        .arg("--grad-check"));
    // the checkpoint loads and carries the full parameter set
    let ckpt =
        load_checkpoint(std::fs::File::open(run_a.join("checkpoint.bin")).unwrap()).unwrap();
    assert!(ckpt.model.layers[0].w_neg.is_some());
    // history lines carry the documented keys
    let history = std::fs::read_to_string(run_a.join("history.jsonl")).unwrap();
    for line in history.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["epoch", "train_loss", "val_metric", "elapsed_ms"] {
            assert!(record.get(key).is_some(), "missing {key}");
        }
    }

    let eval_dir = tmp.path().join("eval");
    run_ok(bin()
        .arg("evaluate")
        .args(["--data-dir", data_dir.to_str().unwrap()])
        .args(["--checkpoint", run_a.join("checkpoint.bin").to_str().unwrap()])
        .args(["--out-dir", eval_dir.to_str().unwrap()])
        .args(["--config", config.to_str().unwrap()])
        .args(["--seed", "5", "--task", "feedback_type"]));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_dir.join("report.json")).unwrap())
            .unwrap();
    let auc = report["metrics"]["auc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(report["config_digest"].as_str().unwrap().len() == 64);

    // ranking evaluation exercises the sampled-candidate protocol
    let eval_rank = tmp.path().join("eval_rank");
    run_ok(bin()
        .arg("evaluate")
        .args(["--data-dir", data_dir.to_str().unwrap()])
        .args(["--checkpoint", run_a.join("checkpoint.bin").to_str().unwrap()])
        .args(["--out-dir", eval_rank.to_str().unwrap()])
        .args(["--config", config.to_str().unwrap()])
        .args(["--seed", "5", "--task", "ranking"]));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval_rank.join("report.json")).unwrap())
            .unwrap();
    for metric in ["mrr", "hit@10", "hit@50", "ndcg@10", "ndcg@50"] {
        assert!(report["metrics"].get(metric).is_some(), "missing {metric}");
    }

    let run_b = tmp.path().join("run_plain");
    run_ok(bin()
        .arg("train")
        .args(["--data-dir", data_dir.to_str().unwrap()])
        .args(["--out-dir", run_b.to_str().unwrap()])
        .args(["--config", config.to_str().unwrap()])
        .args(["--seed", "5", "--task", "feedback_type", "--variant", "Basic+DGF"]));
    let diag_dir = tmp.path().join("diag");
    run_ok(bin()
        .arg("diagnose")
        .args(["--checkpoint", run_a.join("checkpoint.bin").to_str().unwrap()])
        .args(["--compare", run_b.join("checkpoint.bin").to_str().unwrap()])
        .args(["--out-dir", diag_dir.to_str().unwrap()]));
    let sigma = std::fs::read_to_string(diag_dir.join("sigma.csv")).unwrap();
    assert!(sigma.lines().any(|l| l.starts_with("0,1,")));
    let projection = std::fs::read_to_string(diag_dir.join("projection.csv")).unwrap();
    let projection_rows = projection
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("node_id"))
        .count();
    assert_eq!(projection_rows, 80);
    let diag: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(diag_dir.join("diagnostics.json")).unwrap())
            .unwrap();
    assert!(diag["uniformity"].as_f64().is_some());
    assert!(diag["uniformity_compare"].as_f64().is_some());
}

#[test]
fn basic_variant_checkpoint_drops_negative_stream_tensors() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    write_planted_dir(&data_dir, 6);
    let config = write_config(
        tmp.path(),
        "[model]\nembed_dim = 4\n\n[train]\nmax_epochs = 2\npatience = 1\n",
    );
    let run_dir = tmp.path().join("run");
    run_ok(bin()
        .arg("train")
        .args(["--data-dir", data_dir.to_str().unwrap()])
        .args(["--out-dir", run_dir.to_str().unwrap()])
        .args(["--config", config.to_str().unwrap()])
        .args(["--seed", "6", "--task", "feedback_type", "--variant", "Basic"]));
    let bytes = std::fs::read(run_dir.join("checkpoint.bin")).unwrap();
    let text = String::from_utf8_lossy(&bytes);
    assert!(!text.contains("w_neg"));
    assert!(!text.contains("w_fuse"));
    let ckpt = load_checkpoint(bytes.as_slice()).unwrap();
    assert!(ckpt.model.layers.iter().all(|l| l.w_neg.is_none()));
}

#[test]
fn train_is_bitwise_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    write_planted_dir(&data_dir, 9);
    let config = write_config(
        tmp.path(),
        "[model]\nembed_dim = 8\n\n[train]\nmax_epochs = 5\npatience = 3\n",
    );
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = tmp.path().join(name);
        run_ok(bin()
            .arg("train")
            .args(["--data-dir", data_dir.to_str().unwrap()])
            .args(["--out-dir", out_dir.to_str().unwrap()])
            .args(["--config", config.to_str().unwrap()])
            .args(["--seed", "9", "--task", "feedback_type"]));
        runs.push(out_dir);
    }
    assert_eq!(
        std::fs::read(runs[0].join("checkpoint.bin")).unwrap(),
        std::fs::read(runs[1].join("checkpoint.bin")).unwrap(),
        "checkpoints differ between identical runs"
    );
    // history identical apart from wall-clock timing
    let strip = |dir: &Path| -> Vec<serde_json::Value> {
        std::fs::read_to_string(dir.join("history.jsonl"))
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v["elapsed_ms"] = 0.into();
                v
            })
            .collect()
    };
    assert_eq!(strip(&runs[0]), strip(&runs[1]));
}

#[test]
fn ablate_emits_four_variant_rows_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    write_planted_dir(&data_dir, 3);
    let config = write_config(
        tmp.path(),
        "[model]\nembed_dim = 4\n\n[train]\nmax_epochs = 3\npatience = 2\n",
    );
    let mut tables = Vec::new();
    for name in ["a", "b"] {
        let out_dir = tmp.path().join(name);
        run_ok(bin()
            .arg("ablate")
            .args(["--data-dir", data_dir.to_str().unwrap()])
            .args(["--out-dir", out_dir.to_str().unwrap()])
            .args(["--config", config.to_str().unwrap()])
            .args(["--seed", "3", "--seeds", "2", "--task", "feedback_type"]));
        tables.push(std::fs::read_to_string(out_dir.join("ablate.csv")).unwrap());
    }
    assert_eq!(tables[0], tables[1]);
    let rows: Vec<&str> = tables[0]
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("variant"))
        .collect();
    assert_eq!(rows.len(), 4);
    for (row, variant) in rows.iter().zip(["Basic", "Basic+LGF", "Basic+DGF", "DFGNN"]) {
        assert!(row.starts_with(variant), "{row}");
    }
}

#[test]
fn lr_sweep_selects_by_validation_metric() {
    let tmp = tempfile::tempdir().unwrap();
    let data_dir = tmp.path().join("data");
    write_planted_dir(&data_dir, 8);
    let config = write_config(
        tmp.path(),
        "[model]\nembed_dim = 4\n\n[train]\nmax_epochs = 2\npatience = 1\n",
    );
    let out_dir = tmp.path().join("sweep");
    run_ok(bin()
        .arg("train")
        .args(["--data-dir", data_dir.to_str().unwrap()])
        .args(["--out-dir", out_dir.to_str().unwrap()])
        .args(["--config", config.to_str().unwrap()])
        .args(["--seed", "8", "--task", "feedback_type"])
        .arg("--lr-sweep"));
    let sweep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("lr_sweep.json")).unwrap())
            .unwrap();
    let grid = sweep["grid"].as_array().unwrap();
    assert_eq!(grid.len(), 6);
    let chosen = sweep["chosen_lr"].as_f64().unwrap();
    let best_metric = grid
        .iter()
        .map(|row| row["best_val_metric"].as_f64().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let chosen_metric = grid
        .iter()
        .find(|row| row["lr"].as_f64().unwrap() == chosen)
        .unwrap()["best_val_metric"]
        .as_f64()
        .unwrap();
    assert_eq!(chosen_metric, best_metric);
    // the written report reflects the chosen rate
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["lr"].as_f64().unwrap(), chosen);
}

#[test]
fn checkpoint_dimension_mismatch_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data_a = tmp.path().join("data_a");
    write_planted_dir(&data_a, 1);
    let config = write_config(
        tmp.path(),
        "[model]\nembed_dim = 4\n\n[train]\nmax_epochs = 2\npatience = 1\n",
    );
    let run_dir = tmp.path().join("run");
    run_ok(bin()
        .arg("train")
        .args(["--data-dir", data_a.to_str().unwrap()])
        .args(["--out-dir", run_dir.to_str().unwrap()])
        .args(["--config", config.to_str().unwrap()])
        .args(["--seed", "1", "--task", "feedback_type"]));
    // a differently-sized dataset must be rejected
    let data_b = tmp.path().join("data_b");
    let other = synth::PlantedConfig {
        num_users: 20,
        num_items: 20,
        interactions_per_user: 10,
        seed: 2,
        ..synth::PlantedConfig::default()
    };
    ingest::write_split(&data_b, &synth::planted_split(&other).unwrap()).unwrap();
    let out = bin()
        .arg("evaluate")
        .args(["--data-dir", data_b.to_str().unwrap()])
        .args(["--checkpoint", run_dir.join("checkpoint.bin").to_str().unwrap()])
        .args(["--out-dir", tmp.path().join("eval").to_str().unwrap()])
        .args(["--task", "feedback_type"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn split_round_trips_through_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = synth::PlantedConfig {
        num_users: 15,
        num_items: 15,
        interactions_per_user: 6,
        seed: 4,
        ..synth::PlantedConfig::default()
    };
    let split = synth::planted_split(&cfg).unwrap();
    ingest::write_split(tmp.path(), &split).unwrap();
    let back = ingest::read_split(tmp.path(), split.seed).unwrap();
    assert_eq!(split, back);
    assert!(back.train.iter().any(|e| e.sign == Sign::Negative));
}

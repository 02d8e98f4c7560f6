//! Command implementations behind the `dfgnn` binary: ingest, spectrum,
//! train, evaluate, ablate, and diagnose. Every artifact embeds the
//! resolved configuration (JSON) or its digest (CSV comment line), and
//! every command is deterministic given identical inputs and seed.

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport};
use crate::graph::{Sign, SignedBipartiteGraph, SignedEdge};
use crate::ingest::{self, DatasetSplit};
use crate::losses::sgr_loss;
use crate::losses::{LossConfig, SgrBatch, TrainingExample};
use crate::mf;
use crate::model::{forward, init_model, GraphOperators, Model, Variant};
use crate::spectral::{
    self, frequency_histogram, hgf_kernel_response, lgf_kernel_response, sym_eigendecompose,
    SpectralWeight,
};
use crate::trainer::{self, fit, Task, TrainConfig};
use ndarray::ArrayView2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

fn create_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writeln!(file)?;
    Ok(())
}

fn csv_header(file: &mut impl Write, cfg: &RunConfig, columns: &str) -> Result<()> {
    writeln!(file, "# config-digest: {}", cfg.digest())?;
    writeln!(file, "{columns}")?;
    Ok(())
}

/// parse -> dedup -> threshold -> iterative core filter.
fn ingest_pipeline(input: &Path, cfg: &RunConfig) -> Result<Vec<ingest::SignedInteraction>> {
    let file = std::fs::File::open(input)?;
    let records = ingest::parse_ratings(std::io::BufReader::new(file), &cfg.ingest)?;
    let records = ingest::dedup_ratings(records);
    let signed = ingest::threshold_records(&records, &cfg.ingest);
    let filtered = ingest::iterative_core_filter(signed, cfg.ingest.min_interactions);
    if filtered.is_empty() {
        return Err(Error::Empty(
            "no interactions left after thresholding and core filtering".into(),
        ));
    }
    Ok(filtered)
}

/// `ingest`: raw ratings file to split directory with stats.
pub fn cmd_ingest(input: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<()> {
    cfg.ingest.validate()?;
    create_out_dir(out_dir)?;
    let filtered = ingest_pipeline(input, cfg)?;
    let split = ingest::split_dataset(&filtered, &cfg.ingest)?;
    ingest::write_split(out_dir, &split)?;
    let stats = ingest::dataset_stats(&split);
    let mut stats_json = serde_json::to_value(&stats)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    stats_json["config"] = cfg.to_json();
    stats_json["config_digest"] = json!(cfg.digest());
    write_json(&out_dir.join("stats.json"), &stats_json)?;
    println!(
        "ingested {} users, {} items, {} instances ({:.2}% negative) -> {}",
        stats.num_users,
        stats.num_items,
        stats.num_instances,
        stats.negative_rate * 100.0,
        out_dir.display()
    );
    Ok(())
}

pub struct SpectrumOptions {
    pub buckets: usize,
    pub amplitude: bool,
    pub max_nodes: usize,
    pub kernel_layers: u32,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            buckets: 10,
            amplitude: false,
            max_nodes: 3000,
            kernel_layers: 2,
        }
    }
}

/// `spectrum`: fit the 1-D factorization signal, decompose the per-sign
/// normalized Laplacians, and emit the frequency histograms plus the
/// filter kernel response sweep.
pub fn cmd_spectrum(
    input: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
    opts: &SpectrumOptions,
) -> Result<()> {
    cfg.ingest.validate()?;
    create_out_dir(out_dir)?;
    let filtered = ingest_pipeline(input, cfg)?;
    // dense remap over the full filtered set, first-appearance order
    let mut user_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut item_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut ratings: Vec<(usize, usize, f64)> = Vec::new();
    let mut edges: Vec<SignedEdge> = Vec::new();
    // recover ratings by re-running parse+dedup (threshold drops them)
    let file = std::fs::File::open(input)?;
    let records = ingest::dedup_ratings(ingest::parse_ratings(
        std::io::BufReader::new(file),
        &cfg.ingest,
    )?);
    let rating_of: BTreeMap<(String, String), f64> = records
        .iter()
        .map(|r| ((r.user_key.clone(), r.item_key.clone()), r.rating))
        .collect();
    for rec in &filtered {
        let next_user = user_index.len();
        let u = *user_index.entry(rec.user_key.clone()).or_insert(next_user);
        let next_item = item_index.len();
        let v = *item_index.entry(rec.item_key.clone()).or_insert(next_item);
        ratings.push((
            u,
            v,
            rating_of[&(rec.user_key.clone(), rec.item_key.clone())],
        ));
        edges.push(SignedEdge::new(u, v, rec.sign));
    }
    let num_users = user_index.len();
    let num_items = item_index.len();
    let n = num_users + num_items;
    if n > opts.max_nodes {
        return Err(Error::Config(format!(
            "graph has {n} nodes, above the dense eigensolver cap {}; \
             subsample the dataset or raise --max-nodes",
            opts.max_nodes
        )));
    }
    let graph = SignedBipartiteGraph::build(num_users, num_items, &edges)?;
    let mf_cfg = mf::MfConfig {
        seed: cfg.ingest.seed,
        ..mf::MfConfig::default()
    };
    let model = mf::train_mf_1d(num_users, num_items, &ratings, &mf_cfg)?;
    let signal = model.node_signal();
    let weight = if opts.amplitude {
        SpectralWeight::Amplitude
    } else {
        SpectralWeight::Energy
    };
    let mut histograms = Vec::new();
    let mut means = Vec::new();
    for sign in [Sign::Positive, Sign::Negative] {
        if graph.edges(sign).is_empty() {
            // no subgraph to analyze: all-zero mass, flagged degenerate
            let width = 2.0 / opts.buckets as f64;
            histograms.push(crate::spectral::FrequencyHistogram {
                bucket_edges: (0..=opts.buckets).map(|b| b as f64 * width).collect(),
                mass: vec![0.0; opts.buckets],
                total: 0.0,
            });
            means.push(0.0);
            continue;
        }
        let lap = graph.sign_adjacency(sign).normalized_laplacian();
        let spectrum = sym_eigendecompose(&lap)?;
        histograms.push(frequency_histogram(&spectrum, &signal, opts.buckets, weight)?);
        means.push(spectral::spectral_mean(&spectrum, &signal)?);
    }

    let mut hist_file = std::fs::File::create(out_dir.join("histogram.csv"))?;
    csv_header(
        &mut hist_file,
        cfg,
        "bucket_low,bucket_high,mass_positive_graph,mass_negative_graph",
    )?;
    for b in 0..opts.buckets {
        writeln!(
            hist_file,
            "{},{},{},{}",
            histograms[0].bucket_edges[b],
            histograms[0].bucket_edges[b + 1],
            histograms[0].mass[b],
            histograms[1].mass[b]
        )?;
    }

    let mut kernel_file = std::fs::File::create(out_dir.join("kernels.csv"))?;
    csv_header(&mut kernel_file, cfg, "lambda,lgf_gain,hgf_gain")?;
    let mut step = 0usize;
    loop {
        let lambda = step as f64 * 0.01;
        if lambda > 2.0 + 1e-12 {
            break;
        }
        writeln!(
            kernel_file,
            "{},{},{}",
            lambda,
            lgf_kernel_response(lambda, opts.kernel_layers),
            hgf_kernel_response(lambda, opts.kernel_layers)
        )?;
        step += 1;
    }

    let mut signal_file = std::fs::File::create(out_dir.join("signal.csv"))?;
    csv_header(&mut signal_file, cfg, "signal")?;
    for v in &signal {
        writeln!(signal_file, "{v}")?;
    }

    write_json(
        &out_dir.join("spectrum.json"),
        &json!({
            "num_users": num_users,
            "num_items": num_items,
            "positive_mean_lambda": means[0],
            "negative_mean_lambda": means[1],
            "positive_degenerate": histograms[0].is_degenerate(),
            "negative_degenerate": histograms[1].is_degenerate(),
            "weighting": if opts.amplitude { "amplitude" } else { "energy" },
            "config": cfg.to_json(),
        }),
    )?;
    println!(
        "spectrum: mean lambda positive {:.4}, negative {:.4} -> {}",
        means[0],
        means[1],
        out_dir.display()
    );
    Ok(())
}

fn load_split_and_graph(data_dir: &Path, seed: u64) -> Result<(DatasetSplit, SignedBipartiteGraph)> {
    let split = ingest::read_split(data_dir, seed)?;
    let graph =
        SignedBipartiteGraph::build(split.num_users(), split.num_items(), &split.train)?;
    Ok((split, graph))
}

/// Run the finite-difference gradient check on a small planted instance
/// shaped like the configured model.
fn run_grad_check(cfg: &TrainConfig) -> Result<trainer::GradCheckReport> {
    let planted = crate::synth::PlantedConfig {
        num_users: 6,
        num_items: 6,
        interactions_per_user: 4,
        sign_noise: 0.1,
        seed: 13,
        ..crate::synth::PlantedConfig::default()
    };
    let split = crate::synth::planted_split(&planted)?;
    let graph =
        SignedBipartiteGraph::build(split.num_users(), split.num_items(), &split.train)?;
    let model_cfg = crate::model::ModelConfig {
        embed_dim: cfg.model.embed_dim.min(4),
        num_layers: cfg.model.num_layers.min(2),
        ..cfg.model
    };
    let mut model = init_model(&model_cfg, graph.num_users(), graph.num_items())?;
    model.embeddings *= 1.5;
    let mut nudge = ChaCha8Rng::seed_from_u64(77);
    for layer in &mut model.layers {
        if let Some(b) = layer.b_fuse.as_mut() {
            use rand::Rng;
            b.mapv_inplace(|v| v + nudge.random_range(0.02..0.08));
        }
    }
    let ops = GraphOperators::build(&graph, model_cfg.variant);
    let examples: Vec<TrainingExample> = split
        .train
        .iter()
        .take(6)
        .map(|e| TrainingExample {
            user: e.user,
            item: e.item,
            label: if e.sign == Sign::Positive { 1.0 } else { 0.0 },
        })
        .collect();
    let sgr = SgrBatch {
        users: examples.iter().map(|e| e.user).collect(),
        items: examples.iter().map(|e| e.item).collect(),
        pos_edges: vec![(examples[0].user, examples[0].item)],
        neg_edges: vec![(examples[1].user, examples[1].item)],
    };
    let loss_cfg = LossConfig {
        w: 0.2,
        ..cfg.loss
    };
    trainer::grad_check(&model, &ops, &examples, &sgr, &loss_cfg)
}

pub struct TrainOptions {
    pub lr_sweep: bool,
    pub grad_check: bool,
}

#[derive(Serialize)]
struct TrainReport {
    task: String,
    variant: String,
    best_epoch: u64,
    best_val_metric: f64,
    metric_name: String,
    epochs_run: usize,
    lr: f64,
    seed: u64,
    config_digest: String,
    config: serde_json::Value,
}

/// `train`: fit on the ingested split, write the best checkpoint, the
/// per-epoch JSONL history, and a validation report.
pub fn cmd_train(
    data_dir: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
    opts: &TrainOptions,
) -> Result<()> {
    create_out_dir(out_dir)?;
    let train_cfg = cfg.train_config();
    train_cfg.validate()?;
    if opts.grad_check {
        let report = run_grad_check(&train_cfg)?;
        if !report.pass {
            let failures: Vec<String> = report
                .failures()
                .map(|e| format!("{} ({:.2e})", e.tensor, e.max_rel_error))
                .collect();
            return Err(Error::Numeric(format!(
                "gradient check failed for {}",
                failures.join(", ")
            )));
        }
        println!("gradient check passed for every parameter tensor");
    }
    let (split, graph) = load_split_and_graph(data_dir, train_cfg.seed)?;

    let (result, chosen_lr) = if opts.lr_sweep {
        let mut best: Option<(trainer::FitResult, f64)> = None;
        let mut sweep_rows = Vec::new();
        for lr in TrainConfig::LR_GRID {
            let candidate_cfg = TrainConfig { lr, ..train_cfg };
            let candidate = fit(&graph, &split, &candidate_cfg)?;
            sweep_rows.push(json!({
                "lr": lr,
                "best_val_metric": candidate.checkpoint.best_metric,
                "best_epoch": candidate.checkpoint.epoch,
            }));
            let better = match &best {
                Some((current, _)) => {
                    candidate.checkpoint.best_metric > current.checkpoint.best_metric
                }
                None => true,
            };
            if better {
                best = Some((candidate, lr));
            }
        }
        let (result, lr) = best.expect("grid is nonempty");
        write_json(
            &out_dir.join("lr_sweep.json"),
            &json!({ "grid": sweep_rows, "chosen_lr": lr, "config": cfg.to_json() }),
        )?;
        (result, lr)
    } else {
        (fit(&graph, &split, &train_cfg)?, train_cfg.lr)
    };

    let ckpt_file = std::fs::File::create(out_dir.join("checkpoint.bin"))?;
    save_checkpoint(&result.checkpoint, std::io::BufWriter::new(ckpt_file))?;
    let mut history = std::io::BufWriter::new(std::fs::File::create(
        out_dir.join("history.jsonl"),
    )?);
    for record in &result.history {
        serde_json::to_writer(&mut history, record)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        writeln!(history)?;
    }
    let report = TrainReport {
        task: train_cfg.task.to_string(),
        variant: train_cfg.model.variant.to_string(),
        best_epoch: result.checkpoint.epoch,
        best_val_metric: result.checkpoint.best_metric,
        metric_name: result.metric_name.to_string(),
        epochs_run: result.history.len(),
        lr: chosen_lr,
        seed: train_cfg.seed,
        config_digest: cfg.digest(),
        config: cfg.to_json(),
    };
    write_json(
        &out_dir.join("report.json"),
        &serde_json::to_value(&report).map_err(|e| Error::Io(std::io::Error::other(e)))?,
    )?;
    println!(
        "trained {} for {} epochs; best validation {} {:.4} at epoch {} -> {}",
        report.variant,
        report.epochs_run,
        report.metric_name,
        report.best_val_metric,
        report.best_epoch,
        out_dir.display()
    );
    Ok(())
}

/// Score held-out data with a checkpoint. Representations always come
/// from propagating over the training subgraph.
fn evaluate_checkpoint(
    ckpt: &Checkpoint,
    split: &DatasetSplit,
    graph: &SignedBipartiteGraph,
    task: Task,
    cfg: &RunConfig,
) -> Result<EvalReport> {
    if ckpt.model.num_users != split.num_users() || ckpt.model.num_items != split.num_items() {
        return Err(Error::Checkpoint(format!(
            "checkpoint is for {}x{} but the dataset has {}x{}",
            ckpt.model.num_users,
            ckpt.model.num_items,
            split.num_users(),
            split.num_items()
        )));
    }
    let ops = GraphOperators::build(graph, ckpt.model.cfg.variant);
    let trace = forward(&ckpt.model, &ops)?;
    let hk = trace.output();
    let mut metrics = BTreeMap::new();
    let num_examples;
    match task {
        Task::Ranking => {
            let positives: Vec<(usize, usize)> = split
                .test
                .iter()
                .filter(|e| e.sign == Sign::Positive)
                .map(|e| (e.user, e.item))
                .collect();
            if positives.is_empty() {
                return Err(Error::Empty("test set has no positive edges".into()));
            }
            let interacted = eval::interaction_sets(split.all_edges());
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed ^ 0x517c_c1b7_2722_0a95);
            let mut queries = eval::build_ranking_queries(
                &positives,
                &interacted,
                split.num_items(),
                &cfg.eval,
                &mut rng,
            )?;
            eval::score_queries(hk, split.num_users(), &mut queries);
            num_examples = queries.len();
            metrics.insert("mrr".to_string(), eval::mrr(&queries)?);
            for k in [10, 50] {
                metrics.insert(format!("hit@{k}"), eval::hit_at_k(&queries, k)?);
                metrics.insert(format!("ndcg@{k}"), eval::ndcg_at_k(&queries, k)?);
            }
        }
        Task::FeedbackType => {
            if split.test.is_empty() {
                return Err(Error::Empty("test set is empty".into()));
            }
            let scores: Vec<f64> = split
                .test
                .iter()
                .map(|e| {
                    crate::model::predict(hk.row(e.user), hk.row(split.num_users() + e.item))
                })
                .collect();
            let labels: Vec<bool> =
                split.test.iter().map(|e| e.sign == Sign::Positive).collect();
            let predictions: Vec<bool> = scores.iter().map(|&s| s >= 0.5).collect();
            num_examples = labels.len();
            metrics.insert("auc".to_string(), eval::auc(&scores, &labels)?);
            metrics.insert(
                "f1_macro".to_string(),
                eval::f1_macro(&predictions, &labels)?,
            );
        }
    }
    Ok(EvalReport {
        task: task.to_string(),
        metrics,
        num_examples,
        seed: cfg.train.seed,
        config_digest: cfg.digest(),
    })
}

/// `evaluate`: load a checkpoint and score the test split.
pub fn cmd_evaluate(
    data_dir: &Path,
    checkpoint_path: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
) -> Result<()> {
    create_out_dir(out_dir)?;
    let ckpt_file = std::fs::File::open(checkpoint_path)?;
    let ckpt = load_checkpoint(std::io::BufReader::new(ckpt_file))?;
    let (split, graph) = load_split_and_graph(data_dir, cfg.train.seed)?;
    let report = evaluate_checkpoint(&ckpt, &split, &graph, cfg.train.task, cfg)?;
    let mut value =
        serde_json::to_value(&report).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    value["config"] = cfg.to_json();
    write_json(&out_dir.join("report.json"), &value)?;
    let summary: Vec<String> = report
        .metrics
        .iter()
        .map(|(k, v)| format!("{k} {v:.4}"))
        .collect();
    println!(
        "evaluated {} on {} examples: {} -> {}",
        report.task,
        report.num_examples,
        summary.join(", "),
        out_dir.display()
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct AblateCell {
    pub mean: f64,
    pub std: f64,
}

/// `ablate`: train every variant over a common seed range and aggregate
/// test metrics into one table.
pub fn cmd_ablate(
    data_dir: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
    num_seeds: u64,
    tasks: &[Task],
) -> Result<()> {
    create_out_dir(out_dir)?;
    let base_cfg = cfg.train_config();
    base_cfg.validate()?;
    let base_seed = base_cfg.seed;
    // variant -> metric -> per-seed values
    let mut table: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for variant in Variant::ALL {
        for task in tasks {
            for offset in 0..num_seeds {
                let seed = base_seed + offset;
                let mut run_cfg = base_cfg;
                run_cfg.task = *task;
                run_cfg.seed = seed;
                run_cfg.model.variant = variant;
                run_cfg.model.seed = seed;
                let (split, graph) = load_split_and_graph(data_dir, seed)?;
                let result = fit(&graph, &split, &run_cfg)?;
                let mut eval_cfg = cfg.clone();
                eval_cfg.train.seed = seed;
                let report = evaluate_checkpoint(
                    &result.checkpoint,
                    &split,
                    &graph,
                    *task,
                    &eval_cfg,
                )?;
                let row = table.entry(variant.to_string()).or_default();
                for (metric, value) in report.metrics {
                    row.entry(metric).or_default().push(value);
                }
            }
        }
    }
    let summarize = |values: &[f64]| -> AblateCell {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / values.len() as f64;
        AblateCell {
            mean,
            std: var.sqrt(),
        }
    };
    let mut summary: BTreeMap<String, BTreeMap<String, AblateCell>> = BTreeMap::new();
    for (variant, metrics) in &table {
        let row = summary.entry(variant.clone()).or_default();
        for (metric, values) in metrics {
            row.insert(metric.clone(), summarize(values));
        }
    }
    write_json(
        &out_dir.join("ablate.json"),
        &json!({
            "seeds": (base_seed..base_seed + num_seeds).collect::<Vec<u64>>(),
            "tasks": tasks.iter().map(Task::to_string).collect::<Vec<_>>(),
            "summary": serde_json::to_value(&summary)
                .map_err(|e| Error::Io(std::io::Error::other(e)))?,
            "per_seed": serde_json::to_value(&table)
                .map_err(|e| Error::Io(std::io::Error::other(e)))?,
            "config": cfg.to_json(),
        }),
    )?;

    let metric_names: Vec<String> = summary
        .values()
        .next()
        .map(|row| row.keys().cloned().collect())
        .unwrap_or_default();
    let mut csv = std::fs::File::create(out_dir.join("ablate.csv"))?;
    let mut columns = vec!["variant".to_string()];
    for m in &metric_names {
        columns.push(format!("{m}_mean"));
        columns.push(format!("{m}_std"));
    }
    csv_header(&mut csv, cfg, &columns.join(","))?;
    // fixed variant order, not alphabetical
    for variant in Variant::ALL {
        let name = variant.to_string();
        let row = &summary[&name];
        let mut fields = vec![name.clone()];
        for m in &metric_names {
            let cell = &row[m];
            fields.push(format!("{}", cell.mean));
            fields.push(format!("{}", cell.std));
        }
        writeln!(csv, "{}", fields.join(","))?;
    }
    println!(
        "ablation over {num_seeds} seeds written to {}",
        out_dir.display()
    );
    Ok(())
}

fn diagnostics_for(model: &Model) -> Result<(Vec<f64>, ndarray::Array2<f64>, f64)> {
    let emb: ArrayView2<f64> = model.embeddings.view();
    let spectrum = eval::singular_spectrum(emb)?;
    let projection = eval::project_2d(emb)?;
    let uniformity = eval::uniformity(emb)?;
    Ok((spectrum, projection, uniformity))
}

/// `diagnose`: representation diagnostics (singular spectrum, 2-D
/// projection, uniformity) for one checkpoint, or two side by side.
pub fn cmd_diagnose(
    checkpoint_path: &Path,
    compare_path: Option<&Path>,
    out_dir: &Path,
    cfg: &RunConfig,
) -> Result<()> {
    create_out_dir(out_dir)?;
    let ckpt = load_checkpoint(std::io::BufReader::new(std::fs::File::open(
        checkpoint_path,
    )?))?;
    let (spectrum_a, projection_a, uniformity_a) = diagnostics_for(&ckpt.model)?;
    let compare = match compare_path {
        Some(path) => {
            let other =
                load_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))?;
            Some(diagnostics_for(&other.model)?)
        }
        None => None,
    };

    let mut sigma = std::fs::File::create(out_dir.join("sigma.csv"))?;
    let columns = if compare.is_some() {
        "sigma_index,sigma_ratio,sigma_ratio_compare"
    } else {
        "sigma_index,sigma_ratio"
    };
    csv_header(&mut sigma, cfg, columns)?;
    for (i, value) in spectrum_a.iter().enumerate() {
        match &compare {
            Some((spectrum_b, _, _)) => {
                let b = spectrum_b.get(i).copied().unwrap_or(f64::NAN);
                writeln!(sigma, "{i},{value},{b}")?;
            }
            None => writeln!(sigma, "{i},{value}")?,
        }
    }

    let write_projection = |path: PathBuf,
                            model: &Model,
                            projection: &ndarray::Array2<f64>|
     -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        csv_header(&mut file, cfg, "node_id,x,y,node_type")?;
        for node in 0..model.num_nodes() {
            let node_type = if node < model.num_users { "user" } else { "item" };
            writeln!(
                file,
                "{node},{},{},{node_type}",
                projection[[node, 0]],
                projection[[node, 1]]
            )?;
        }
        Ok(())
    };
    write_projection(out_dir.join("projection.csv"), &ckpt.model, &projection_a)?;
    let mut report = json!({
        "uniformity": uniformity_a,
        "checkpoint": checkpoint_path.display().to_string(),
        "config": cfg.to_json(),
    });
    if let Some((_, projection_b, uniformity_b)) = &compare {
        let other = load_checkpoint(std::io::BufReader::new(std::fs::File::open(
            compare_path.unwrap(),
        )?))?;
        write_projection(
            out_dir.join("projection_compare.csv"),
            &other.model,
            projection_b,
        )?;
        report["uniformity_compare"] = json!(uniformity_b);
        report["checkpoint_compare"] =
            json!(compare_path.unwrap().display().to_string());
    }
    write_json(&out_dir.join("diagnostics.json"), &report)?;
    println!(
        "diagnostics written to {} (uniformity {:.4}{})",
        out_dir.display(),
        uniformity_a,
        compare
            .as_ref()
            .map(|(_, _, u)| format!(", compare {u:.4}"))
            .unwrap_or_default()
    );
    Ok(())
}

/// Compute the signed-graph regularizer value for a model over a whole
/// split; used by diagnostics-oriented tooling and tests.
pub fn full_sgr_value(model: &Model, split: &DatasetSplit, loss: &LossConfig) -> f64 {
    let sgr = SgrBatch {
        users: (0..split.num_users()).collect(),
        items: (0..split.num_items()).collect(),
        pos_edges: split
            .train
            .iter()
            .filter(|e| e.sign == Sign::Positive)
            .map(|e| (e.user, e.item))
            .collect(),
        neg_edges: split
            .train
            .iter()
            .filter(|e| e.sign == Sign::Negative)
            .map(|e| (e.user, e.item))
            .collect(),
    };
    sgr_loss(
        model.embeddings.view(),
        split.num_users(),
        &sgr,
        loss.tau,
        loss.normalize_sgr,
    )
}

//! Mini-batch training: full-graph forward per batch with the loss
//! restricted to batch edges, Adam updates, early stopping on a
//! validation metric, and finite-difference gradient checking.

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::eval::{self, RankingProtocol};
use crate::graph::{Sign, SignedBipartiteGraph, SignedEdge};
use crate::ingest::{sample_ranking_negatives, DatasetSplit};
use crate::losses::{self, LossConfig, SgrBatch, TrainingExample};
use crate::model::{forward, init_model, Gradients, GraphOperators, Model, ModelConfig};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Ranking,
    FeedbackType,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Ranking => write!(f, "ranking"),
            Task::FeedbackType => write!(f, "feedback_type"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ranking" => Ok(Task::Ranking),
            "feedback_type" | "feedback" => Ok(Task::FeedbackType),
            _ => Err(Error::Config(format!(
                "unknown task {s:?}; expected ranking or feedback_type"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub task: Task,
    pub seed: u64,
    pub loss: LossConfig,
    pub model: ModelConfig,
    /// Candidate protocol for the per-epoch validation MRR (ranking task).
    pub eval_protocol: RankingProtocol,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 512,
            lr: 1e-2,
            patience: 20,
            max_epochs: 200,
            task: Task::FeedbackType,
            seed: 0,
            loss: LossConfig::default(),
            model: ModelConfig::default(),
            eval_protocol: RankingProtocol::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        self.loss.validate()?;
        self.model.validate()
    }

    /// The regularizer weight actually applied: only the full model
    /// trains with SGR; the ablation variants run with w = 0.
    pub fn effective_loss(&self) -> LossConfig {
        let mut loss = self.loss;
        if !self.model.variant.uses_sgr() {
            loss.w = 0.0;
        }
        loss
    }

    /// The learning-rate grid used by `--lr-sweep`.
    pub const LR_GRID: [f64; 6] = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5];
}

/// Adam optimizer state: first/second moments shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        Self {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update with bias correction.
pub fn adam_step(
    model: &mut Model,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    state.t += 1;
    let t = state.t;
    let beta1 = state.beta1;
    let beta2 = state.beta2;
    let epsilon = state.epsilon;
    let bias1 = 1.0 - beta1.powi(t as i32);
    let bias2 = 1.0 - beta2.powi(t as i32);
    let mut params = model.named_tensors_mut();
    let grad_views = grads.named_tensors();
    let mut m_views = state.m.named_tensors_mut();
    let mut v_views = state.v.named_tensors_mut();
    for (((param, grad), m), v) in params
        .iter_mut()
        .zip(grad_views.iter())
        .zip(m_views.iter_mut())
        .zip(v_views.iter_mut())
    {
        debug_assert_eq!(param.0, grad.0);
        let name = &param.0;
        let p = param.1.as_mut_slice();
        let g = grad.1.as_slice();
        let m = m.1.as_mut_slice();
        let v = v.1.as_mut_slice();
        for i in 0..p.len() {
            let gi = g[i];
            if gi.is_nan() {
                return Err(Error::Numeric(format!(
                    "NaN gradient in parameter {name} at flat index {i}"
                )));
            }
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochStats {
    pub mean_loss: f64,
    pub mean_task_loss: f64,
    pub mean_sgr_loss: f64,
    pub num_batches: usize,
}

/// Precomputed training-side data shared across epochs.
pub struct TrainContext {
    pub ops: GraphOperators,
    train_edges: Vec<SignedEdge>,
    /// Per-user items interacted with in train (either sign); the
    /// exclusion set for ranking-task negative sampling.
    train_interactions: HashMap<usize, HashSet<usize>>,
    num_items: usize,
}

impl TrainContext {
    pub fn new(graph: &SignedBipartiteGraph, train_edges: &[SignedEdge], cfg: &TrainConfig) -> Self {
        Self {
            ops: GraphOperators::build(graph, cfg.model.variant),
            train_edges: train_edges.to_vec(),
            train_interactions: eval::interaction_sets(train_edges.iter()),
            num_items: graph.num_items(),
        }
    }
}

/// One pass over the training edges in shuffled mini-batches. Every batch
/// runs a full-graph forward; the loss is restricted to batch examples.
pub fn train_epoch(
    model: &mut Model,
    ctx: &TrainContext,
    cfg: &TrainConfig,
    adam: &mut AdamState,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats> {
    let loss_cfg = cfg.effective_loss();
    let mut order: Vec<usize> = match cfg.task {
        Task::Ranking => (0..ctx.train_edges.len())
            .filter(|&i| ctx.train_edges[i].sign == Sign::Positive)
            .collect(),
        Task::FeedbackType => (0..ctx.train_edges.len()).collect(),
    };
    if order.is_empty() {
        return Err(Error::Empty("no training edges for this task".into()));
    }
    order.shuffle(rng);
    let train_neg_edges: Vec<(usize, usize)> = ctx
        .train_edges
        .iter()
        .filter(|e| e.sign == Sign::Negative)
        .map(|e| (e.user, e.item))
        .collect();
    let mut total = 0.0;
    let mut total_task = 0.0;
    let mut total_sgr = 0.0;
    let mut num_batches = 0;
    for chunk in order.chunks(cfg.batch_size) {
        let mut examples = Vec::with_capacity(chunk.len() * 2);
        let mut sgr = SgrBatch::default();
        let mut seen_users = HashSet::new();
        let mut seen_items = HashSet::new();
        match cfg.task {
            Task::Ranking => {
                for &idx in chunk {
                    let e = ctx.train_edges[idx];
                    examples.push(TrainingExample {
                        user: e.user,
                        item: e.item,
                        label: 1.0,
                    });
                    sgr.pos_edges.push((e.user, e.item));
                    let exclusion = &ctx.train_interactions[&e.user];
                    if exclusion.len() < ctx.num_items {
                        let neg =
                            sample_ranking_negatives(1, exclusion, ctx.num_items, rng)?[0];
                        examples.push(TrainingExample {
                            user: e.user,
                            item: neg,
                            label: 0.0,
                        });
                    }
                }
                // alignment still needs real negative feedback; draw a
                // batch-sized sample of observed negative edges
                if !train_neg_edges.is_empty() {
                    for _ in 0..chunk.len().min(train_neg_edges.len()) {
                        let pick = rng.random_range(0..train_neg_edges.len());
                        sgr.neg_edges.push(train_neg_edges[pick]);
                    }
                }
            }
            Task::FeedbackType => {
                for &idx in chunk {
                    let e = ctx.train_edges[idx];
                    let label = match e.sign {
                        Sign::Positive => 1.0,
                        Sign::Negative => 0.0,
                    };
                    examples.push(TrainingExample {
                        user: e.user,
                        item: e.item,
                        label,
                    });
                    match e.sign {
                        Sign::Positive => sgr.pos_edges.push((e.user, e.item)),
                        Sign::Negative => sgr.neg_edges.push((e.user, e.item)),
                    }
                }
            }
        }
        for ex in &examples {
            if seen_users.insert(ex.user) {
                sgr.users.push(ex.user);
            }
            if seen_items.insert(ex.item) {
                sgr.items.push(ex.item);
            }
        }
        if let Some(cap) = loss_cfg.uniform_sample_size {
            sgr.items.truncate(cap);
        }
        let trace = forward(model, &ctx.ops)?;
        let result = losses::backward(model, &ctx.ops, &trace, &examples, &sgr, &loss_cfg)?;
        if !result.total_loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss {} in batch {num_batches}",
                result.total_loss
            )));
        }
        adam_step(model, &result.grads, adam, cfg.lr)?;
        total += result.total_loss;
        total_task += result.task_loss;
        total_sgr += result.sgr_loss;
        num_batches += 1;
    }
    Ok(EpochStats {
        mean_loss: total / num_batches as f64,
        mean_task_loss: total_task / num_batches as f64,
        mean_sgr_loss: total_sgr / num_batches as f64,
        num_batches,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
    pub elapsed_ms: u128,
}

pub struct FitResult {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    /// Name of the validation metric driving model selection.
    pub metric_name: &'static str,
}

/// Validation-time fixtures, built once so the metric is comparable
/// across epochs.
enum ValSet {
    Ranking(Vec<eval::RankingQuery>),
    Feedback(Vec<SignedEdge>),
}

/// Train with early stopping: keep the best validation metric (MRR for
/// ranking, AUC for feedback type) and stop after `patience` epochs
/// without improvement.
pub fn fit(
    graph: &SignedBipartiteGraph,
    split: &DatasetSplit,
    cfg: &TrainConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    if split.validation.is_empty() {
        return Err(Error::Empty("validation set is empty".into()));
    }
    let ctx = TrainContext::new(graph, &split.train, cfg);
    let mut model = init_model(&cfg.model, graph.num_users(), graph.num_items())?;
    let mut adam = AdamState::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let val_set = match cfg.task {
        Task::Ranking => {
            let positives: Vec<(usize, usize)> = split
                .validation
                .iter()
                .filter(|e| e.sign == Sign::Positive)
                .map(|e| (e.user, e.item))
                .collect();
            if positives.is_empty() {
                return Err(Error::Empty("validation set has no positive edges".into()));
            }
            let interacted = eval::interaction_sets(split.all_edges());
            // dedicated stream so validation sampling never perturbs training
            let mut val_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
            let queries = eval::build_ranking_queries(
                &positives,
                &interacted,
                graph.num_items(),
                &cfg.eval_protocol,
                &mut val_rng,
            )?;
            ValSet::Ranking(queries)
        }
        Task::FeedbackType => ValSet::Feedback(split.validation.clone()),
    };

    let mut history = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let mut best_metric = f64::NEG_INFINITY;
    let mut epochs_since_improvement = 0;
    let metric_name = match cfg.task {
        Task::Ranking => "mrr",
        Task::FeedbackType => "auc",
    };
    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let stats = train_epoch(&mut model, &ctx, cfg, &mut adam, &mut rng)?;
        let val_metric = evaluate_validation(&model, &ctx.ops, &val_set)?;
        history.push(EpochRecord {
            epoch,
            train_loss: stats.mean_loss,
            val_metric,
            elapsed_ms: start.elapsed().as_millis(),
        });
        if val_metric > best_metric {
            best_metric = val_metric;
            best = Some(Checkpoint {
                model: model.clone(),
                adam: adam.clone(),
                epoch: epoch as u64,
                best_metric,
                rng_seed: cfg.seed,
                rng_word_pos: rng.get_word_pos(),
            });
            epochs_since_improvement = 0;
        } else {
            epochs_since_improvement += 1;
            if epochs_since_improvement >= cfg.patience {
                break;
            }
        }
    }
    let checkpoint = best.expect("at least one epoch ran");
    Ok(FitResult {
        checkpoint,
        history,
        metric_name,
    })
}

fn evaluate_validation(
    model: &Model,
    ops: &GraphOperators,
    val_set: &ValSet,
) -> Result<f64> {
    let trace = forward(model, ops)?;
    let hk = trace.output();
    match val_set {
        ValSet::Ranking(queries) => {
            let mut scored = queries.clone();
            eval::score_queries(hk, model.num_users, &mut scored);
            eval::mrr(&scored)
        }
        ValSet::Feedback(edges) => {
            let scores: Vec<f64> = edges
                .iter()
                .map(|e| {
                    crate::model::predict(hk.row(e.user), hk.row(model.num_users + e.item))
                })
                .collect();
            let labels: Vec<bool> = edges.iter().map(|e| e.sign == Sign::Positive).collect();
            eval::auc(&scores, &labels)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckEntry {
    pub tensor: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub threshold: f64,
    pub pass: bool,
}

impl GradCheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        // NaN counts as a failure
        self.entries
            .iter()
            .filter(move |e| e.max_rel_error >= self.threshold || e.max_rel_error.is_nan())
    }
}

/// Compare analytic gradients against central finite differences for
/// every parameter of a (small) model.
pub fn grad_check(
    model: &Model,
    ops: &GraphOperators,
    examples: &[TrainingExample],
    sgr: &SgrBatch,
    loss_cfg: &LossConfig,
) -> Result<GradCheckReport> {
    let trace = forward(model, ops)?;
    let result = losses::backward(model, ops, &trace, examples, sgr, loss_cfg)?;
    compare_with_finite_differences(&result.grads, model, ops, examples, sgr, loss_cfg)
}

/// The comparison half of `grad_check`, reusable with an externally
/// supplied (possibly corrupted) gradient set.
pub fn compare_with_finite_differences(
    analytic: &Gradients,
    model: &Model,
    ops: &GraphOperators,
    examples: &[TrainingExample],
    sgr: &SgrBatch,
    loss_cfg: &LossConfig,
) -> Result<GradCheckReport> {
    const H: f64 = 1e-5;
    const THRESHOLD: f64 = 1e-4;
    let names: Vec<String> = model
        .named_tensors()
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    let mut entries = Vec::with_capacity(names.len());
    for name in names {
        let len = tensor_len(model, &name);
        let mut max_rel: f64 = 0.0;
        for idx in 0..len {
            let grad = {
                let tensors = analytic.named_tensors();
                let (_, view) = tensors
                    .iter()
                    .find(|(n, _)| *n == name)
                    .ok_or_else(|| Error::DimensionMismatch(format!("missing grad {name}")))?;
                view.as_slice()[idx]
            };
            let probe = |delta: f64| -> Result<f64> {
                let mut perturbed = model.clone();
                {
                    let mut tensors = perturbed.named_tensors_mut();
                    let (_, view) = tensors
                        .iter_mut()
                        .find(|(n, _)| *n == name)
                        .expect("same tensor set");
                    view.as_mut_slice()[idx] += delta;
                }
                losses::loss_value(&perturbed, ops, examples, sgr, loss_cfg)
            };
            let fd = (probe(H)? - probe(-H)?) / (2.0 * H);
            let rel = (grad - fd).abs() / grad.abs().max(1.0);
            max_rel = max_rel.max(rel);
        }
        entries.push(GradCheckEntry {
            tensor: name,
            max_rel_error: max_rel,
        });
    }
    let pass = entries.iter().all(|e| e.max_rel_error < THRESHOLD);
    Ok(GradCheckReport {
        entries,
        threshold: THRESHOLD,
        pass,
    })
}

fn tensor_len(model: &Model, name: &str) -> usize {
    let tensors = model.named_tensors();
    let (_, view) = tensors
        .iter()
        .find(|(n, _)| *n == name)
        .expect("known tensor");
    view.as_slice().len()
}

//! Ranking metrics (MRR, HIT@K, NDCG@K), classification metrics (AUC,
//! F1-Macro), the sampled-candidate ranking protocol, and representation
//! diagnostics: singular-value spectra, 2-D SVD projection, and the
//! pairwise uniformity measure.

use crate::error::{Error, Result};
use crate::graph::SignedEdge;
use crate::ingest::sample_ranking_negatives;
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

/// One ranking-evaluation unit: a held-out positive plus sampled
/// non-interacted candidates, with a score per candidate.
#[derive(Debug, Clone)]
pub struct RankingQuery {
    pub user: usize,
    pub positive: usize,
    pub candidates: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Rank of the positive item, 1-based, with worst-rank tie-breaking:
/// 1 + strictly-better candidates + tied candidates.
pub fn rank_of_positive(q: &RankingQuery) -> usize {
    let pos_idx = q
        .candidates
        .iter()
        .position(|&c| c == q.positive)
        .expect("positive must be among candidates");
    let pos_score = q.scores[pos_idx];
    let mut rank = 1;
    for (i, &s) in q.scores.iter().enumerate() {
        if i == pos_idx {
            continue;
        }
        if s >= pos_score {
            rank += 1;
        }
    }
    rank
}

pub fn mrr(queries: &[RankingQuery]) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Empty("no ranking queries".into()));
    }
    let sum: f64 = queries
        .iter()
        .map(|q| 1.0 / rank_of_positive(q) as f64)
        .sum();
    Ok(sum / queries.len() as f64)
}

pub fn hit_at_k(queries: &[RankingQuery], k: usize) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Empty("no ranking queries".into()));
    }
    let hits = queries.iter().filter(|q| rank_of_positive(q) <= k).count();
    Ok(hits as f64 / queries.len() as f64)
}

/// Single-relevant-item NDCG: 1/log2(rank + 1) when the positive lands in
/// the top k, else 0, so the ideal DCG is exactly 1.
pub fn ndcg_at_k(queries: &[RankingQuery], k: usize) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Empty("no ranking queries".into()));
    }
    let sum: f64 = queries
        .iter()
        .map(|q| {
            let rank = rank_of_positive(q);
            if rank <= k {
                1.0 / ((rank + 1) as f64).log2()
            } else {
                0.0
            }
        })
        .sum();
    Ok(sum / queries.len() as f64)
}

/// Mann-Whitney AUC: P(score+ > score-) + 0.5 P(tie), computed with
/// midranks so it matches the pairwise definition exactly.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "auc: {} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Empty("auc needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; tied block [i, j] gets the midrank
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Unweighted mean of the per-class F1 scores. A class with no true or
/// predicted members contributes 0.
pub fn f1_macro(predictions: &[bool], labels: &[bool]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "f1_macro: {} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut f1_sum = 0.0;
    for class in [true, false] {
        let tp = predictions
            .iter()
            .zip(labels)
            .filter(|&(&p, &l)| p == class && l == class)
            .count() as f64;
        let fp = predictions
            .iter()
            .zip(labels)
            .filter(|&(&p, &l)| p == class && l != class)
            .count() as f64;
        let fn_ = predictions
            .iter()
            .zip(labels)
            .filter(|&(&p, &l)| p != class && l == class)
            .count() as f64;
        let denom = 2.0 * tp + fp + fn_;
        f1_sum += if denom > 0.0 { 2.0 * tp / denom } else { 0.0 };
    }
    Ok(f1_sum / 2.0)
}

/// Candidate sampling for ranking evaluation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RankingProtocol {
    /// Sampled non-interacted candidates per positive.
    pub num_negatives: usize,
    /// Rank against every non-interacted item instead of a sample.
    pub all_items: bool,
}

impl Default for RankingProtocol {
    fn default() -> Self {
        Self {
            num_negatives: 99,
            all_items: false,
        }
    }
}

/// Per-user sets of interacted items (either sign).
pub fn interaction_sets<'a>(
    edges: impl IntoIterator<Item = &'a SignedEdge>,
) -> HashMap<usize, HashSet<usize>> {
    let mut sets: HashMap<usize, HashSet<usize>> = HashMap::new();
    for e in edges {
        sets.entry(e.user).or_default().insert(e.item);
    }
    sets
}

/// Build one query per held-out positive edge: the positive plus sampled
/// items the user never interacted with (scores left at zero).
pub fn build_ranking_queries(
    positives: &[(usize, usize)],
    interacted: &HashMap<usize, HashSet<usize>>,
    num_items: usize,
    protocol: &RankingProtocol,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<RankingQuery>> {
    let empty = HashSet::new();
    let mut queries = Vec::with_capacity(positives.len());
    for &(user, positive) in positives {
        let exclusion = interacted.get(&user).unwrap_or(&empty);
        let mut candidates = vec![positive];
        if protocol.all_items {
            candidates.extend((0..num_items).filter(|i| !exclusion.contains(i)));
        } else {
            let available = num_items - exclusion.len();
            let k = protocol.num_negatives.min(available);
            if k == 0 {
                continue; // user interacted with every item
            }
            candidates.extend(sample_ranking_negatives(k, exclusion, num_items, rng)?);
        }
        let scores = vec![0.0; candidates.len()];
        queries.push(RankingQuery {
            user,
            positive,
            candidates,
            scores,
        });
    }
    if queries.is_empty() {
        return Err(Error::Empty("no evaluable ranking queries".into()));
    }
    Ok(queries)
}

/// Fill query scores with logistic inner products of encoder output rows.
pub fn score_queries(hk: &Array2<f64>, num_users: usize, queries: &mut [RankingQuery]) {
    for q in queries.iter_mut() {
        let hu = hk.row(q.user);
        for (slot, &item) in q.candidates.iter().enumerate() {
            q.scores[slot] = crate::model::predict(hu, hk.row(num_users + item));
        }
    }
}

/// Metric bundle with provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub metrics: BTreeMap<String, f64>,
    pub num_examples: usize,
    pub seed: u64,
    pub config_digest: String,
}

/// Singular values of the column-centered embedding matrix, descending,
/// normalized by the largest.
pub fn singular_spectrum(emb: ArrayView2<f64>) -> Result<Vec<f64>> {
    let sv = centered_singular_values(emb)?;
    let top = sv[0];
    if top <= 0.0 {
        return Err(Error::Numeric("zero embedding matrix has no spectrum".into()));
    }
    Ok(sv.iter().map(|s| s / top).collect())
}

fn center_columns(emb: ArrayView2<f64>) -> Array2<f64> {
    let mut centered = emb.to_owned();
    let n = emb.nrows() as f64;
    for mut col in centered.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
    }
    centered
}

fn centered_singular_values(emb: ArrayView2<f64>) -> Result<Vec<f64>> {
    if emb.nrows() == 0 || emb.ncols() == 0 {
        return Err(Error::Empty("empty embedding matrix".into()));
    }
    let centered = center_columns(emb);
    let (rows, cols) = centered.dim();
    let m = nalgebra::DMatrix::from_fn(rows, cols, |i, j| centered[[i, j]]);
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// Project rows onto the top-2 right-singular directions of the centered
/// matrix. Each output column's orientation is fixed so its
/// largest-magnitude entry is positive.
pub fn project_2d(emb: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (rows, cols) = emb.dim();
    if cols < 2 {
        return Err(Error::DimensionMismatch(format!(
            "project_2d needs at least 2 embedding dimensions, got {cols}"
        )));
    }
    let centered = center_columns(emb);
    let m = nalgebra::DMatrix::from_fn(rows, cols, |i, j| centered[[i, j]]);
    let svd = m.svd(false, true);
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or_else(|| Error::Numeric("svd did not produce right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut out = Array2::<f64>::zeros((rows, 2));
    for (axis, &sv_idx) in order.iter().take(2).enumerate() {
        for r in 0..rows {
            let mut acc = 0.0;
            for c in 0..cols {
                acc += centered[[r, c]] * v_t[(sv_idx, c)];
            }
            out[[r, axis]] = acc;
        }
    }
    for axis in 0..2 {
        let col = out.column(axis);
        let mut extreme = 0.0f64;
        let mut extreme_val = 0.0f64;
        for &v in col.iter() {
            if v.abs() > extreme {
                extreme = v.abs();
                extreme_val = v;
            }
        }
        if extreme_val < 0.0 {
            out.column_mut(axis).mapv_inplace(|v| -v);
        }
    }
    Ok(out)
}

/// Threshold above which exact all-pairs uniformity switches to seeded
/// pair sampling.
const UNIFORMITY_EXACT_LIMIT: usize = 2000;
const UNIFORMITY_SAMPLE_PAIRS: usize = 1_000_000;

/// Mean L2 distance between normalized embedding rows over all unordered
/// pairs (pair-sampled above 2000 rows). Zero rows are skipped.
pub fn uniformity(emb: ArrayView2<f64>) -> Result<f64> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for row in emb.rows() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            rows.push(row.iter().map(|v| v / norm).collect());
        }
    }
    if rows.len() < 2 {
        return Err(Error::Empty(
            "uniformity needs at least two nonzero rows".into(),
        ));
    }
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let n = rows.len();
    if n <= UNIFORMITY_EXACT_LIMIT {
        let mut sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                sum += dist(&rows[i], &rows[j]);
            }
        }
        Ok(sum / (n * (n - 1) / 2) as f64)
    } else {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut sum = 0.0;
        for _ in 0..UNIFORMITY_SAMPLE_PAIRS {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            sum += dist(&rows[i], &rows[j]);
        }
        Ok(sum / UNIFORMITY_SAMPLE_PAIRS as f64)
    }
}

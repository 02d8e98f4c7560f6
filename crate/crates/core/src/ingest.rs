//! Rating-dataset ingest: parsing, sign thresholding, iterative core
//! filtering, splitting, and the file materializations consumed by the
//! rest of the pipeline.

use crate::error::{Error, Result};
use crate::graph::{Sign, SignedEdge};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

/// One parsed rating row. Keys are opaque dataset identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub user_key: String,
    pub item_key: String,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// A thresholded interaction, still keyed by opaque identifiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedInteraction {
    pub user_key: String,
    pub item_key: String,
    pub sign: Sign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Csv,
    Tsv,
}

impl FileFormat {
    fn delimiter(self) -> char {
        match self {
            FileFormat::Csv => ',',
            FileFormat::Tsv => '\t',
        }
    }
}

/// Ingest protocol parameters. Ratings strictly below `neg_threshold`
/// become negative edges, strictly above `pos_threshold` positive edges;
/// anything in between (neutral) is dropped.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub format: FileFormat,
    /// 0-based column positions of user, item, rating, optional timestamp.
    pub user_col: usize,
    pub item_col: usize,
    pub rating_col: usize,
    pub timestamp_col: Option<usize>,
    pub neg_threshold: f64,
    pub pos_threshold: f64,
    pub min_interactions: usize,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            format: FileFormat::Csv,
            user_col: 0,
            item_col: 1,
            rating_col: 2,
            timestamp_col: Some(3),
            neg_threshold: 3.0,
            pos_threshold: 3.0,
            min_interactions: 5,
            train_fraction: 0.7,
            validation_fraction: 0.1,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neg_threshold > self.pos_threshold {
            return Err(Error::Config(format!(
                "neg_threshold {} must be <= pos_threshold {}",
                self.neg_threshold, self.pos_threshold
            )));
        }
        let total = self.train_fraction + self.validation_fraction + self.test_fraction;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must sum to 1, got {total}"
            )));
        }
        Ok(())
    }
}

/// Train/validation/test edge lists over dense remapped indices, plus the
/// key maps that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<SignedEdge>,
    pub validation: Vec<SignedEdge>,
    pub test: Vec<SignedEdge>,
    /// Dense index -> original user key.
    pub user_keys: Vec<String>,
    /// Dense index -> original item key.
    pub item_keys: Vec<String>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn num_users(&self) -> usize {
        self.user_keys.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_keys.len()
    }

    pub fn num_instances(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn all_edges(&self) -> impl Iterator<Item = &SignedEdge> {
        self.train
            .iter()
            .chain(self.validation.iter())
            .chain(self.test.iter())
    }
}

/// Summary counts over the union of splits.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetStats {
    pub num_users: usize,
    pub num_items: usize,
    pub num_instances: usize,
    pub negative_rate: f64,
    pub seed: u64,
}

/// Parse a rating file. Every row is parsed or a line-numbered error is
/// returned. Lines starting with `#` are ignored; a single leading header
/// line is skipped when its rating column is not numeric.
pub fn parse_ratings<R: BufRead>(source: R, cfg: &IngestConfig) -> Result<Vec<RatingRecord>> {
    let delim = cfg.format.delimiter();
    // The timestamp column is optional per row; only the id/rating columns
    // are required to be present.
    let needed = [cfg.user_col, cfg.item_col, cfg.rating_col]
        .into_iter()
        .max()
        .unwrap()
        + 1;
    let mut records = Vec::new();
    let mut saw_data = false;
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(delim).map(str::trim).collect();
        if fields.len() < needed {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected at least {needed} columns, got {}", fields.len()),
            });
        }
        let rating = match fields[cfg.rating_col].parse::<f64>() {
            Ok(r) => r,
            Err(_) if !saw_data => continue, // header line
            Err(e) => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("bad rating {:?}: {e}", fields[cfg.rating_col]),
                });
            }
        };
        saw_data = true;
        if !(1.0..=5.0).contains(&rating) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("rating {rating} outside [1,5]"),
            });
        }
        let user_key = fields[cfg.user_col].to_string();
        let item_key = fields[cfg.item_col].to_string();
        if user_key.is_empty() || item_key.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                msg: "empty user or item key".into(),
            });
        }
        let timestamp = match cfg.timestamp_col {
            Some(c) => match fields.get(c) {
                Some(f) if !f.is_empty() => Some(f.parse::<i64>().map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("bad timestamp {f:?}: {e}"),
                })?),
                _ => None,
            },
            None => None,
        };
        records.push(RatingRecord {
            user_key,
            item_key,
            rating,
            timestamp,
        });
    }
    Ok(records)
}

/// Collapse duplicate (user, item) ratings, keeping the latest by
/// timestamp and falling back to the last occurrence.
pub fn dedup_ratings(records: Vec<RatingRecord>) -> Vec<RatingRecord> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut best: HashMap<(String, String), RatingRecord> = HashMap::new();
    for rec in records {
        let key = (rec.user_key.clone(), rec.item_key.clone());
        match best.get(&key) {
            None => {
                order.push(key.clone());
                best.insert(key, rec);
            }
            Some(prev) => {
                let replace = match (prev.timestamp, rec.timestamp) {
                    (Some(a), Some(b)) => b >= a,
                    // records without comparable timestamps: last wins
                    _ => true,
                };
                if replace {
                    best.insert(key, rec);
                }
            }
        }
    }
    order
        .into_iter()
        .map(|key| best.remove(&key).expect("key recorded"))
        .collect()
}

/// Outcome of thresholding a single rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Thresholded {
    Keep(Sign),
    Drop,
}

/// Map a rating to an edge sign: strictly below the negative threshold is
/// negative feedback, strictly above the positive threshold is positive,
/// anything else is neutral and dropped.
pub fn sign_threshold(record: &RatingRecord, cfg: &IngestConfig) -> Thresholded {
    if record.rating < cfg.neg_threshold {
        Thresholded::Keep(Sign::Negative)
    } else if record.rating > cfg.pos_threshold {
        Thresholded::Keep(Sign::Positive)
    } else {
        Thresholded::Drop
    }
}

/// Apply `sign_threshold` over a record list, dropping neutrals.
pub fn threshold_records(records: &[RatingRecord], cfg: &IngestConfig) -> Vec<SignedInteraction> {
    records
        .iter()
        .filter_map(|r| match sign_threshold(r, cfg) {
            Thresholded::Keep(sign) => Some(SignedInteraction {
                user_key: r.user_key.clone(),
                item_key: r.item_key.clone(),
                sign,
            }),
            Thresholded::Drop => None,
        })
        .collect()
}

/// Repeatedly discard every user and item with fewer than
/// `min_interactions` remaining interactions (both signs counted) until a
/// fixpoint is reached.
pub fn iterative_core_filter(
    records: Vec<SignedInteraction>,
    min_interactions: usize,
) -> Vec<SignedInteraction> {
    let mut current = records;
    loop {
        let mut user_counts: HashMap<&str, usize> = HashMap::new();
        let mut item_counts: HashMap<&str, usize> = HashMap::new();
        for r in &current {
            *user_counts.entry(r.user_key.as_str()).or_insert(0) += 1;
            *item_counts.entry(r.item_key.as_str()).or_insert(0) += 1;
        }
        let before = current.len();
        let next: Vec<SignedInteraction> = current
            .iter()
            .filter(|r| {
                user_counts[r.user_key.as_str()] >= min_interactions
                    && item_counts[r.item_key.as_str()] >= min_interactions
            })
            .cloned()
            .collect();
        if next.len() == before {
            return next;
        }
        current = next;
    }
}

/// Shuffle the filtered interactions under the seed and cut them into
/// train/validation/test. The dense index remap is built from the full
/// filtered set so nodes appearing only in held-out splits still get
/// embedding rows.
pub fn split_dataset(records: &[SignedInteraction], cfg: &IngestConfig) -> Result<DatasetSplit> {
    cfg.validate()?;
    if records.len() < 10 {
        return Err(Error::Empty(format!(
            "need at least 10 interactions to split, got {}",
            records.len()
        )));
    }
    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut item_index: HashMap<&str, usize> = HashMap::new();
    let mut user_keys = Vec::new();
    let mut item_keys = Vec::new();
    for r in records {
        if !user_index.contains_key(r.user_key.as_str()) {
            user_index.insert(r.user_key.as_str(), user_keys.len());
            user_keys.push(r.user_key.clone());
        }
        if !item_index.contains_key(r.item_key.as_str()) {
            item_index.insert(r.item_key.as_str(), item_keys.len());
            item_keys.push(r.item_key.clone());
        }
    }
    let mut edges: Vec<SignedEdge> = records
        .iter()
        .map(|r| {
            SignedEdge::new(
                user_index[r.user_key.as_str()],
                item_index[r.item_key.as_str()],
                r.sign,
            )
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    edges.shuffle(&mut rng);
    let n = edges.len();
    let n_train = (cfg.train_fraction * n as f64).round() as usize;
    let n_val = (cfg.validation_fraction * n as f64).round() as usize;
    let n_train = n_train.min(n);
    let n_val = n_val.min(n - n_train);
    let test = edges.split_off(n_train + n_val);
    let validation = edges.split_off(n_train);
    Ok(DatasetSplit {
        train: edges,
        validation,
        test,
        user_keys,
        item_keys,
        seed: cfg.seed,
    })
}

/// Counts over the union of splits.
pub fn dataset_stats(split: &DatasetSplit) -> DatasetStats {
    let total = split.num_instances();
    let negatives = split
        .all_edges()
        .filter(|e| e.sign == Sign::Negative)
        .count();
    DatasetStats {
        num_users: split.num_users(),
        num_items: split.num_items(),
        num_instances: total,
        negative_rate: if total > 0 {
            negatives as f64 / total as f64
        } else {
            0.0
        },
        seed: split.seed,
    }
}

/// Sample `k` distinct items uniformly outside the exclusion set.
pub fn sample_ranking_negatives(
    k: usize,
    exclusion: &HashSet<usize>,
    num_items: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let available = num_items.saturating_sub(exclusion.len());
    if k > available {
        return Err(Error::Empty(format!(
            "cannot sample {k} negatives: only {available} candidate items"
        )));
    }
    // Rejection sampling is fine while the exclusion set is sparse;
    // fall back to explicit enumeration when it is not.
    if exclusion.len() * 2 < num_items {
        let mut chosen = HashSet::with_capacity(k);
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let cand = rng.random_range(0..num_items);
            if !exclusion.contains(&cand) && chosen.insert(cand) {
                out.push(cand);
            }
        }
        Ok(out)
    } else {
        let mut candidates: Vec<usize> =
            (0..num_items).filter(|i| !exclusion.contains(i)).collect();
        candidates.shuffle(rng);
        candidates.truncate(k);
        Ok(candidates)
    }
}

/// Write the two-column `key<TAB>index` map file.
pub fn write_key_map<W: Write>(mut w: W, keys: &[String]) -> Result<()> {
    for (idx, key) in keys.iter().enumerate() {
        writeln!(w, "{key}\t{idx}")?;
    }
    Ok(())
}

fn read_key_map(path: &std::path::Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path)?;
    let mut keys = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, '\t');
        let key = parts.next().unwrap_or_default().to_string();
        let index: usize = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("bad key-map row in {}", path.display()),
            })?;
        if index != keys.len() {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("key map {} is not densely ordered", path.display()),
            });
        }
        keys.push(key);
    }
    Ok(keys)
}

/// Materialize a split into a directory: three edge-list files in the
/// interchange format plus the two key maps.
pub fn write_split(dir: &std::path::Path, split: &DatasetSplit) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, edges) in [
        ("train.tsv", &split.train),
        ("validation.tsv", &split.validation),
        ("test.tsv", &split.test),
    ] {
        let mut file = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
        for e in edges {
            writeln!(
                file,
                "{}\t{}\t{}",
                e.user,
                e.item,
                if e.sign == Sign::Positive { "+1" } else { "-1" }
            )?;
        }
    }
    let user_map = std::fs::File::create(dir.join("user_map.tsv"))?;
    write_key_map(std::io::BufWriter::new(user_map), &split.user_keys)?;
    let item_map = std::fs::File::create(dir.join("item_map.tsv"))?;
    write_key_map(std::io::BufWriter::new(item_map), &split.item_keys)?;
    Ok(())
}

/// Load a split directory written by [`write_split`].
pub fn read_split(dir: &std::path::Path, seed: u64) -> Result<DatasetSplit> {
    let read_edges = |name: &str| -> Result<Vec<SignedEdge>> {
        let file = std::fs::File::open(dir.join(name))?;
        crate::graph::read_edge_list(std::io::BufReader::new(file))
    };
    Ok(DatasetSplit {
        train: read_edges("train.tsv")?,
        validation: read_edges("validation.tsv")?,
        test: read_edges("test.tsv")?,
        user_keys: read_key_map(&dir.join("user_map.tsv"))?,
        item_keys: read_key_map(&dir.join("item_map.tsv"))?,
        seed,
    })
}

//! Synthetic signed bipartite instances with planted cluster structure.
//! Used by the spectrum/trainer test beds and the acceptance suite:
//! positive edges are assortative (within an interest cluster), negative
//! edges disassortative (across clusters), with optional sign noise.

use crate::error::Result;
use crate::graph::{Sign, SignedEdge};
use crate::ingest::DatasetSplit;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedConfig {
    pub num_users: usize,
    pub num_items: usize,
    /// Distinct items each user interacts with.
    pub interactions_per_user: usize,
    /// Items everyone likes regardless of cluster; they dilute the
    /// cluster signal carried by the positive subgraph. The first
    /// `popular_items` item indices form this pool.
    pub popular_items: usize,
    /// Share of a user's interactions landing on popular items.
    pub popular_rate: f64,
    /// Share of the remaining (niche) interactions landing on the other
    /// cluster's items.
    pub cross_rate: f64,
    /// Probability of flipping an edge's planted sign.
    pub sign_noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            num_users: 200,
            num_items: 200,
            interactions_per_user: 12,
            popular_items: 0,
            popular_rate: 0.0,
            cross_rate: 0.5,
            sign_noise: 0.1,
            seed: 0,
        }
    }
}

/// What a planted item means to a user: part of the shared popular pool,
/// or one of the two niche clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemKind {
    Popular,
    Niche(usize),
}

impl PlantedConfig {
    /// Users split into two contiguous halves.
    pub fn user_cluster(&self, user: usize) -> usize {
        usize::from(user >= self.num_users / 2)
    }

    /// Popular items come first, then the two niche halves.
    pub fn item_kind(&self, item: usize) -> ItemKind {
        if item < self.popular_items {
            return ItemKind::Popular;
        }
        let niche = item - self.popular_items;
        let half = (self.num_items - self.popular_items) / 2;
        ItemKind::Niche(usize::from(niche >= half))
    }

    /// The planted sign before noise: popular and own-cluster items are
    /// liked, the other cluster's items are disliked.
    pub fn planted_sign(&self, user: usize, item: usize) -> Sign {
        match self.item_kind(item) {
            ItemKind::Popular => Sign::Positive,
            ItemKind::Niche(c) if c == self.user_cluster(user) => Sign::Positive,
            ItemKind::Niche(_) => Sign::Negative,
        }
    }

    fn pool(&self, kind: ItemKind) -> std::ops::Range<usize> {
        let half = (self.num_items - self.popular_items) / 2;
        match kind {
            ItemKind::Popular => 0..self.popular_items,
            ItemKind::Niche(0) => self.popular_items..self.popular_items + half,
            ItemKind::Niche(_) => self.popular_items + half..self.num_items,
        }
    }
}

/// Each user interacts with a seeded sample of items across the popular
/// pool, their own niche cluster, and the other cluster; the sign is
/// positive except on cross-cluster niche items, then flipped with
/// probability `sign_noise`.
pub fn planted_edges(cfg: &PlantedConfig) -> Vec<SignedEdge> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut edges = Vec::with_capacity(cfg.num_users * cfg.interactions_per_user);
    for user in 0..cfg.num_users {
        let own = cfg.user_cluster(user);
        let m = cfg.interactions_per_user;
        let popular_count = (m as f64 * cfg.popular_rate).round() as usize;
        let niche = m - popular_count;
        let cross_count = (niche as f64 * cfg.cross_rate).round() as usize;
        let own_count = niche - cross_count;
        let mut chosen: Vec<usize> = Vec::with_capacity(m);
        for (kind, count) in [
            (ItemKind::Popular, popular_count),
            (ItemKind::Niche(own), own_count),
            (ItemKind::Niche(1 - own), cross_count),
        ] {
            let mut pool: Vec<usize> = cfg.pool(kind).collect();
            pool.shuffle(&mut rng);
            chosen.extend(pool.into_iter().take(count));
        }
        for item in chosen {
            let planted = cfg.planted_sign(user, item);
            let sign = if rng.random_range(0.0..1.0) < cfg.sign_noise {
                match planted {
                    Sign::Positive => Sign::Negative,
                    Sign::Negative => Sign::Positive,
                }
            } else {
                planted
            };
            edges.push(SignedEdge::new(user, item, sign));
        }
    }
    edges
}

/// A 70/10/20 split of the planted edges under the same seed, with
/// identity key maps.
pub fn planted_split(cfg: &PlantedConfig) -> Result<DatasetSplit> {
    let mut edges = planted_edges(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    edges.shuffle(&mut rng);
    let n = edges.len();
    let n_train = (0.7 * n as f64).round() as usize;
    let n_val = (0.1 * n as f64).round() as usize;
    let test = edges.split_off(n_train + n_val);
    let validation = edges.split_off(n_train);
    Ok(DatasetSplit {
        train: edges,
        validation,
        test,
        user_keys: (0..cfg.num_users).map(|u| format!("u{u}")).collect(),
        item_keys: (0..cfg.num_items).map(|i| format!("i{i}")).collect(),
        seed: cfg.seed,
    })
}

/// Planted ratings for the frequency-domain analysis. The two clusters
/// sit at different preference levels so the 1-D factorization learns a
/// signal that is smooth within a cluster and jumps across clusters:
/// same-cluster pairs rate near 5 (cluster 0) or 4 (cluster 1), cross
/// pairs near 1.5, all modulated by small per-node quality factors.
#[derive(Debug, Clone)]
pub struct PlantedRatings {
    pub num_users: usize,
    pub num_items: usize,
    /// (user, item, rating) with dense indices.
    pub records: Vec<(usize, usize, f64)>,
    /// The matching signed edges (rating thresholded at 3).
    pub edges: Vec<SignedEdge>,
}

pub fn planted_ratings(cfg: &PlantedConfig) -> PlantedRatings {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let quality = |rng: &mut ChaCha8Rng| rng.random_range(0.93..1.0);
    let user_quality: Vec<f64> = (0..cfg.num_users).map(|_| quality(&mut rng)).collect();
    let item_quality: Vec<f64> = (0..cfg.num_items).map(|_| quality(&mut rng)).collect();
    let edges = planted_edges(&PlantedConfig {
        sign_noise: 0.0,
        ..*cfg
    });
    let mut records = Vec::with_capacity(edges.len());
    let mut signed = Vec::with_capacity(edges.len());
    for e in &edges {
        let q = user_quality[e.user] * item_quality[e.item];
        let level = match cfg.planted_sign(e.user, e.item) {
            Sign::Positive => {
                if cfg.user_cluster(e.user) == 0 {
                    5.0
                } else {
                    4.0
                }
            }
            Sign::Negative => 1.5,
        };
        let rating = (level * q).clamp(1.0, 5.0);
        records.push((e.user, e.item, rating));
        signed.push(SignedEdge::new(
            e.user,
            e.item,
            if rating > 3.0 { Sign::Positive } else { Sign::Negative },
        ));
    }
    PlantedRatings {
        num_users: cfg.num_users,
        num_items: cfg.num_items,
        records,
        edges: signed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_edges_are_deterministic_and_in_range() {
        let cfg = PlantedConfig {
            num_users: 20,
            num_items: 20,
            interactions_per_user: 6,
            ..PlantedConfig::default()
        };
        let a = planted_edges(&cfg);
        let b = planted_edges(&cfg);
        assert_eq!(a, b);
        assert_eq!(a.len(), 20 * 6);
        assert!(a.iter().all(|e| e.user < 20 && e.item < 20));
    }

    #[test]
    fn zero_noise_signs_follow_clusters() {
        let cfg = PlantedConfig {
            num_users: 10,
            num_items: 10,
            interactions_per_user: 4,
            sign_noise: 0.0,
            ..PlantedConfig::default()
        };
        for e in planted_edges(&cfg) {
            let same = cfg.planted_sign(e.user, e.item) == Sign::Positive;
            assert_eq!(e.sign == Sign::Positive, same);
        }
    }

    #[test]
    fn noise_rate_is_roughly_honored() {
        let cfg = PlantedConfig {
            num_users: 100,
            num_items: 100,
            interactions_per_user: 20,
            sign_noise: 0.1,
            ..PlantedConfig::default()
        };
        let flipped = planted_edges(&cfg)
            .iter()
            .filter(|e| {
                let same = cfg.planted_sign(e.user, e.item) == Sign::Positive;
                (e.sign == Sign::Positive) != same
            })
            .count();
        let rate = flipped as f64 / (100.0 * 20.0);
        assert!((rate - 0.1).abs() < 0.03, "flip rate {rate}");
    }

    #[test]
    fn planted_split_partitions_edges() {
        let cfg = PlantedConfig {
            num_users: 30,
            num_items: 30,
            interactions_per_user: 10,
            ..PlantedConfig::default()
        };
        let split = planted_split(&cfg).unwrap();
        assert_eq!(split.num_instances(), 300);
        assert!((split.train.len() as f64 - 210.0).abs() <= 1.0);
    }

    #[test]
    fn planted_ratings_respect_thresholds() {
        let cfg = PlantedConfig {
            num_users: 20,
            num_items: 20,
            interactions_per_user: 8,
            ..PlantedConfig::default()
        };
        let data = planted_ratings(&cfg);
        for ((user, item, rating), edge) in data.records.iter().zip(data.edges.iter()) {
            assert!((1.0..=5.0).contains(rating));
            let same = cfg.planted_sign(*user, *item) == Sign::Positive;
            assert_eq!(*rating > 3.0, same);
            assert_eq!(edge.sign == Sign::Positive, same);
        }
    }
}
